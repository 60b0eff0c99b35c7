#pragma once
// Convenience umbrella: the full pipeline in one include.

#include "faforge/answer.hpp"
#include "faforge/calc.hpp"
#include "faforge/client_pool.hpp"
#include "faforge/crypto.hpp"
#include "faforge/dag.hpp"
#include "faforge/engine.hpp"
#include "faforge/error.hpp"
#include "faforge/fixedpoint.hpp"
#include "faforge/ir.hpp"
#include "faforge/llm.hpp"
#include "faforge/metrics.hpp"
#include "faforge/optimizer.hpp"
#include "faforge/planner.hpp"
#include "faforge/predicate.hpp"
#include "faforge/schema.hpp"
#include "faforge/validate.hpp"
