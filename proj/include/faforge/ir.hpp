#pragma once
//===----------------------------------------------------------------------===//
// Structured query IR: what the coarse planner produces and the fine planner
// consumes. A query is a list of sub-queries (one statistical intent each,
// optionally grouped by a categorical feature) plus optional final combine
// steps over the sub-query answers.
//
//   {
//     "subqueries": [
//       {"intent": "Mean", "feature": "salary", "filter": true},
//       {"intent": "Mean", "feature": "salary",
//        "filter": {"atoms": [{"feature": "role", "op": "eq",
//                              "value": "professor"}]}}
//     ],
//     "final_combine": [{"op": "difference", "args": [1, 0]}]
//   }
//
// `filter: true` (or an omitted filter) selects every client. Percentage and
// Ratio carry a `condition` predicate for the numerator. Comparison carries
// `compare: [P_left, P_right]`. `group_by` expands an aggregation over every
// value of a categorical feature.
//===----------------------------------------------------------------------===//

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faforge/error.hpp"
#include "faforge/predicate.hpp"
#include "faforge/schema.hpp"

namespace faforge {

enum class Intent { Count, Sum, Mean, Percentage, Ratio, Comparison };

inline const char* to_string(Intent i) {
  switch (i) {
    case Intent::Count: return "Count";
    case Intent::Sum: return "Sum";
    case Intent::Mean: return "Mean";
    case Intent::Percentage: return "Percentage";
    case Intent::Ratio: return "Ratio";
    case Intent::Comparison: return "Comparison";
  }
  return "?";
}

inline Intent intent_from_string(const std::string& s) {
  if (s == "Count") return Intent::Count;
  if (s == "Sum") return Intent::Sum;
  if (s == "Mean") return Intent::Mean;
  if (s == "Percentage") return Intent::Percentage;
  if (s == "Ratio") return Intent::Ratio;
  if (s == "Comparison") return Intent::Comparison;
  if (s == "GroupBy")
    throw Error(ErrorCode::UnknownIntent,
                "'GroupBy' is not a standalone intent; use the group_by field on an "
                "aggregating sub-query");
  throw Error(ErrorCode::UnknownIntent, "unknown intent '" + s + "'");
}

struct SubQuery {
  Intent intent = Intent::Count;
  std::string feature;                    // Sum/Mean/Comparison-of-means target
  Predicate filter;                       // base population filter
  std::optional<Predicate> condition;     // Percentage/Ratio numerator condition
  std::optional<std::string> group_by;    // categorical feature to group on
  std::optional<std::pair<Predicate, Predicate>> compare; // Comparison sides

  bool operator==(const SubQuery&) const = default;
};

enum class CombineOp { Difference, Ratio };

inline const char* to_string(CombineOp op) {
  return op == CombineOp::Difference ? "difference" : "ratio";
}

struct CombineExpr {
  CombineOp op = CombineOp::Difference;
  int left = 0;  // sub-query indices, 0-based
  int right = 0;
  bool operator==(const CombineExpr&) const = default;
};

struct QueryIR {
  std::vector<SubQuery> subqueries;
  std::vector<CombineExpr> final_combine;
  bool operator==(const QueryIR&) const = default;
};

// ---- JSON -------------------------------------------------------------------

inline nlohmann::json subquery_to_json(const SubQuery& s) {
  nlohmann::json j;
  j["intent"] = to_string(s.intent);
  if (!s.feature.empty()) j["feature"] = s.feature;
  if (!s.filter.is_true()) j["filter"] = predicate_to_json(s.filter);
  if (s.condition) j["condition"] = predicate_to_json(*s.condition);
  if (s.group_by) j["group_by"] = *s.group_by;
  if (s.compare)
    j["compare"] = {predicate_to_json(s.compare->first), predicate_to_json(s.compare->second)};
  return j;
}

inline nlohmann::json ir_to_json(const QueryIR& ir) {
  nlohmann::json subs = nlohmann::json::array();
  for (auto& s : ir.subqueries) subs.push_back(subquery_to_json(s));
  nlohmann::json combines = nlohmann::json::array();
  for (auto& c : ir.final_combine)
    combines.push_back({{"op", to_string(c.op)}, {"args", {c.left, c.right}}});
  nlohmann::json j;
  j["subqueries"] = subs;
  if (!ir.final_combine.empty()) j["final_combine"] = combines;
  return j;
}

namespace detail {

inline SubQuery subquery_from_json(const nlohmann::json& j, const std::string& where,
                                   const Schema& schema) {
  if (!j.is_object())
    throw Error(ErrorCode::SchemaViolation, where + " must be an object");
  for (auto& [key, val] : j.items())
    if (key != "intent" && key != "feature" && key != "filter" && key != "condition" &&
        key != "group_by" && key != "compare")
      throw Error(ErrorCode::SchemaViolation, where + ": unknown field '" + key + "'");
  if (!j.contains("intent") || !j["intent"].is_string())
    throw Error(ErrorCode::SchemaViolation, where + ".intent is required");

  SubQuery s;
  s.intent = intent_from_string(j["intent"].get<std::string>());
  if (j.contains("feature")) s.feature = j["feature"].get<std::string>();
  if (j.contains("filter")) s.filter = predicate_from_json(j["filter"], where + ".filter");
  if (j.contains("condition"))
    s.condition = predicate_from_json(j["condition"], where + ".condition");
  if (j.contains("group_by")) s.group_by = j["group_by"].get<std::string>();
  if (j.contains("compare")) {
    const auto& cj = j["compare"];
    if (!cj.is_array() || cj.size() != 2)
      throw Error(ErrorCode::ArityError, where + ".compare needs exactly two predicates");
    s.compare = {predicate_from_json(cj[0], where + ".compare[0]"),
                 predicate_from_json(cj[1], where + ".compare[1]")};
  }

  // semantic checks against the schema
  validate_predicate(s.filter, schema);
  if (s.condition) validate_predicate(*s.condition, schema);
  if (s.compare) {
    validate_predicate(s.compare->first, schema);
    validate_predicate(s.compare->second, schema);
  }

  auto require_numeric_feature = [&](bool required) {
    if (s.feature.empty()) {
      if (required)
        throw Error(ErrorCode::SchemaViolation,
                    where + ": intent " + to_string(s.intent) + " needs a feature");
      return;
    }
    const FeatureSpec& spec = schema.at(s.feature); // UnknownFeature
    if (spec.type != FeatureType::Numeric)
      throw Error(ErrorCode::SchemaViolation,
                  where + ": feature '" + s.feature + "' must be numeric for " +
                      to_string(s.intent));
  };

  switch (s.intent) {
    case Intent::Count:
      if (!s.feature.empty())
        throw Error(ErrorCode::SchemaViolation, where + ": Count takes no feature");
      break;
    case Intent::Sum:
    case Intent::Mean:
      require_numeric_feature(true);
      break;
    case Intent::Percentage:
    case Intent::Ratio:
      if (!s.feature.empty())
        throw Error(ErrorCode::SchemaViolation,
                    where + ": " + std::string(to_string(s.intent)) +
                        " filters via condition, it takes no feature");
      if (!s.condition)
        throw Error(ErrorCode::SchemaViolation,
                    where + ": " + std::string(to_string(s.intent)) + " needs a condition");
      break;
    case Intent::Comparison:
      if (!s.compare)
        throw Error(ErrorCode::ArityError, where + ": Comparison needs compare: [left, right]");
      require_numeric_feature(false); // comparison of counts when absent
      break;
  }
  if (s.condition && s.intent != Intent::Percentage && s.intent != Intent::Ratio)
    throw Error(ErrorCode::SchemaViolation,
                where + ": condition is only valid on Percentage/Ratio");
  if (s.compare && s.intent != Intent::Comparison)
    throw Error(ErrorCode::SchemaViolation, where + ": compare is only valid on Comparison");

  if (s.group_by) {
    if (s.intent == Intent::Comparison)
      throw Error(ErrorCode::SchemaViolation, where + ": Comparison cannot be grouped");
    const FeatureSpec& g = schema.at(*s.group_by);
    if (g.type != FeatureType::Categorical)
      throw Error(ErrorCode::SchemaViolation,
                  where + ": group_by feature '" + *s.group_by + "' must be categorical");
  }
  return s;
}

} // namespace detail

inline QueryIR ir_from_json(const nlohmann::json& j, const Schema& schema) {
  if (!j.is_object())
    throw Error(ErrorCode::SchemaViolation, "query IR root must be an object");
  for (auto& [key, val] : j.items())
    if (key != "subqueries" && key != "final_combine")
      throw Error(ErrorCode::SchemaViolation, "unknown IR field '" + key + "'");
  if (!j.contains("subqueries") || !j["subqueries"].is_array() || j["subqueries"].empty())
    throw Error(ErrorCode::SchemaViolation, "query IR needs a non-empty subqueries list");

  QueryIR ir;
  size_t i = 0;
  for (auto& sj : j["subqueries"])
    ir.subqueries.push_back(
        detail::subquery_from_json(sj, "subqueries[" + std::to_string(i++) + "]", schema));

  if (j.contains("final_combine")) {
    if (!j["final_combine"].is_array())
      throw Error(ErrorCode::SchemaViolation, "final_combine must be an array");
    i = 0;
    for (auto& cj : j["final_combine"]) {
      std::string where = "final_combine[" + std::to_string(i++) + "]";
      if (!cj.is_object() || !cj.contains("op") || !cj.contains("args"))
        throw Error(ErrorCode::SchemaViolation, where + " must be {op, args}");
      CombineExpr c;
      std::string op = cj["op"].get<std::string>();
      if (op == "difference") c.op = CombineOp::Difference;
      else if (op == "ratio") c.op = CombineOp::Ratio;
      else throw Error(ErrorCode::SchemaViolation, where + ": unknown combine op '" + op + "'");
      const auto& args = cj["args"];
      if (!args.is_array() || args.size() != 2 || !args[0].is_number_integer() ||
          !args[1].is_number_integer())
        throw Error(ErrorCode::ArityError, where + ".args needs exactly two sub-query indices");
      c.left = args[0].get<int>();
      c.right = args[1].get<int>();
      for (int idx : {c.left, c.right}) {
        if (idx < 0 || idx >= static_cast<int>(ir.subqueries.size()))
          throw Error(ErrorCode::UnresolvedReference,
                      where + ": sub-query index " + std::to_string(idx) + " is out of range");
        if (ir.subqueries[static_cast<size_t>(idx)].group_by)
          throw Error(ErrorCode::SchemaViolation,
                      where + ": combines may only reference ungrouped sub-queries");
      }
      ir.final_combine.push_back(c);
    }
  }
  return ir;
}

inline QueryIR parse_ir(const std::string& text, const Schema& schema) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return ir_from_json(j, schema);
}

} // namespace faforge
