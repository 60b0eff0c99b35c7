#pragma once
//===----------------------------------------------------------------------===//
// Execution engine. Runs a validated workflow over a simulated client fleet:
// each client filters locally and encrypts its contribution; the server folds
// ciphertexts homomorphically, adds calibrated noise inside the encrypted
// domain, decrypts aggregates only, and finishes with plaintext arithmetic.
//
// Values travel as exact rationals from decryption onward so that a rewritten
// workflow and its naive counterpart produce bit-identical answers; doubles
// are a presentation-layer view. A plaintext oracle computes the same answers
// directly from raw records for equivalence testing.
//===----------------------------------------------------------------------===//

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "faforge/calc.hpp"
#include "faforge/client_pool.hpp"
#include "faforge/crypto.hpp"
#include "faforge/dag.hpp"
#include "faforge/error.hpp"
#include "faforge/fixedpoint.hpp"
#include "faforge/ir.hpp"
#include "faforge/planner.hpp" // sub_answer_labels (group expansion used by the oracle)
#include "faforge/validate.hpp"

namespace faforge {

// ---- Laplace sampling --------------------------------------------------------

// Inverse-CDF Laplace draw with scale b: u uniform in (-1/2, 1/2), then
// b * sign(u) * ln(1 - 2|u|). The (k + 0.5) / 2^64 mapping keeps u strictly
// inside the open interval, so the logarithm never sees zero.
inline double sample_laplace(double b, std::mt19937_64& rng) {
  if (!(b > 0.0))
    throw Error(ErrorCode::NonpositiveScale, "noise scale must be positive");
  uint64_t k = rng();
  double u = (static_cast<double>(k) + 0.5) * 0x1p-64 - 0.5;
  double sign = u < 0.0 ? -1.0 : 1.0;
  return b * sign * std::log(1.0 - 2.0 * std::abs(u));
}

// ---- Execution results --------------------------------------------------------

// One node's execution footprint. Deliberately value-free: ids, stage names,
// and client counts only, so no client value can ride the log out of the
// encrypted part of the pipeline.
struct AuditRecord {
  std::string node;
  std::string stage;
  std::vector<std::string> inputs;
  size_t clients = 0; // clients contributing at this node (0 for server-only stages)

  nlohmann::json to_json() const {
    return {{"node", node}, {"stage", stage}, {"inputs", inputs}, {"clients", clients}};
  }
};

struct ExecutionResult {
  std::map<std::string, double> answers; // answer node id -> value (double view)
  std::map<std::string, Rational> exact; // answer node id -> exact value
  std::vector<AuditRecord> audit;        // one record per node, evaluation order
  uint64_t seed = 0;
  bool noise = false;
  double total_epsilon = 0.0; // declared privacy budget: sum over noise nodes

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["answers"] = answers;
    nlohmann::json ex = nlohmann::json::object();
    for (auto& [id, v] : exact) ex[id] = v.str();
    j["exact"] = ex;
    j["seed"] = seed;
    j["noise"] = noise;
    j["total_epsilon"] = total_epsilon;
    nlohmann::json au = nlohmann::json::array();
    for (auto& r : audit) au.push_back(r.to_json());
    j["audit"] = au;
    return j;
  }
};

// Sum of the declared epsilons across a workflow's noise nodes: the privacy
// budget one full execution spends.
inline double declared_epsilon(const FaDag& dag) {
  double total = 0.0;
  for (auto& [id, n] : dag.nodes())
    if (n.kind == OpKind::NoiseAdd && n.dp_params) total += n.dp_params->epsilon;
  return total;
}

namespace detail {

// Client value for one access slot: the constant-1 population slot or a
// numeric feature of the record.
inline double slot_value(const ClientRecord& rec, const std::string& slot,
                         const Schema& schema) {
  if (slot == "one") return 1.0;
  const FeatureSpec& spec = schema.at(slot);
  if (spec.type != FeatureType::Numeric)
    throw Error(ErrorCode::InvalidArgument,
                "slot '" + slot + "' is categorical and cannot be aggregated");
  return std::get<double>(rec.values.at(slot));
}

} // namespace detail

// ---- Workflow execution -------------------------------------------------------

// Evaluates every node in dependency order. `seed_used` is carried into the
// result for reproducibility bookkeeping; use execute_seeded to set both from
// one integer.
inline ExecutionResult execute(const FaDag& dag, const ClientPool& pool, const KeyPair& keys,
                               std::mt19937_64& rng, bool noise_enabled, int64_t scale = 100,
                               uint64_t seed_used = 0) {
  {
    std::vector<Violation> violations = check_structure(dag);
    if (!violations.empty())
      throw Error(ErrorCode::InvalidArgument,
                  "cannot execute an invalid workflow: " + violations.front().message);
  }
  if (pool.records.empty())
    throw Error(ErrorCode::EmptyPool, "client pool has no records");

  const PublicKey& pk = keys.pk;
  ExecutionResult res;
  res.seed = seed_used;
  res.noise = noise_enabled;
  res.total_epsilon = declared_epsilon(dag);

  std::map<std::string, std::vector<size_t>> access_clients; // matching client indices
  std::map<std::string, std::vector<std::pair<size_t, Ciphertext>>> per_client; // by Encrypt
  std::map<std::string, Ciphertext> folded;  // Aggregate / NoiseAdd outputs
  std::map<std::string, Rational> plain;     // Decrypt / Calculate outputs

  for (const std::string& id : dag.topo_order()) {
    const Node& n = dag.node(id);
    AuditRecord rec;
    rec.node = id;
    rec.stage = to_string(n.kind);
    rec.inputs = dag.predecessors(id);

    switch (n.kind) {
      case OpKind::Access: {
        std::vector<size_t> idx;
        for (size_t c = 0; c < pool.records.size(); ++c)
          if (n.predicate->matches(pool.records[c])) idx.push_back(c);
        rec.clients = idx.size();
        access_clients.emplace(id, std::move(idx));
        break;
      }
      case OpKind::Encrypt: {
        const std::vector<size_t>& idx = access_clients.at(rec.inputs.front());
        std::vector<std::pair<size_t, Ciphertext>> items;
        items.reserve(idx.size());
        for (size_t c : idx) {
          double v = detail::slot_value(pool.records[c], n.feature, pool.schema);
          items.emplace_back(c, encrypt_signed(pk, encode_fixed(v, scale), rng));
        }
        rec.clients = items.size();
        per_client.emplace(id, std::move(items));
        break;
      }
      case OpKind::Aggregate: {
        const auto& items = per_client.at(rec.inputs.front());
        rec.clients = items.size();
        if (items.empty()) {
          folded.emplace(id, encrypt_signed(pk, 0, rng));
        } else {
          Ciphertext acc = items.front().second;
          for (size_t i = 1; i < items.size(); ++i)
            acc = add_cipher(pk, acc, items[i].second);
          folded.emplace(id, std::move(acc));
        }
        break;
      }
      case OpKind::NoiseAdd: {
        double noise = 0.0;
        if (noise_enabled)
          noise = sample_laplace(n.dp_params->sensitivity / n.dp_params->epsilon, rng);
        Ciphertext c = add_cipher(pk, folded.at(rec.inputs.front()),
                                  encrypt_signed(pk, encode_fixed(noise, scale), rng));
        folded.emplace(id, std::move(c));
        break;
      }
      case OpKind::Decrypt: {
        BigInt residue = decrypt(keys, folded.at(rec.inputs.front()));
        plain.emplace(id, rational_from_residue(residue, scale, pk.n));
        break;
      }
      case OpKind::Calculate: {
        std::map<std::string, Rational> env;
        for (const std::string& ref : calc_refs(n.calc_expr)) env.emplace(ref, plain.at(ref));
        try {
          plain.emplace(id, eval_calc(parse_calc(n.calc_expr), env));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DivisionByZero) throw;
          throw Error(ErrorCode::DivisionByZero,
                      "calculation '" + id + "' divided by zero" +
                          (noise_enabled
                               ? " (noisy counts can reach zero; a larger epsilon or another "
                                 "seed may avoid this)"
                               : ""));
        }
        break;
      }
    }
    res.audit.push_back(std::move(rec));
  }

  for (const std::string& id : dag.answer_nodes()) {
    auto it = plain.find(id);
    if (it == plain.end())
      throw Error(ErrorCode::InvalidArgument,
                  "answer node '" + id + "' does not produce a decrypted value");
    res.exact.emplace(id, it->second);
    res.answers.emplace(id, it->second.convert_to<double>());
  }
  return res;
}

inline ExecutionResult execute_seeded(const FaDag& dag, const ClientPool& pool,
                                      const KeyPair& keys, uint64_t seed, bool noise_enabled,
                                      int64_t scale = 100) {
  std::mt19937_64 rng(seed);
  return execute(dag, pool, keys, rng, noise_enabled, scale, seed);
}

// ---- Plaintext oracle ----------------------------------------------------------

namespace detail {

// Rows matching every predicate in `preds` (conjunction over the list).
inline std::vector<const ClientRecord*> matching_rows(const ClientPool& pool,
                                                      const std::vector<const Predicate*>& preds) {
  std::vector<const ClientRecord*> rows;
  for (const ClientRecord& r : pool.records) {
    bool ok = true;
    for (const Predicate* p : preds)
      if (!p->matches(r)) {
        ok = false;
        break;
      }
    if (ok) rows.push_back(&r);
  }
  return rows;
}

// Sum of fixed-point-encoded feature values: mirrors what the encrypted
// pipeline folds, so oracle answers land on the same rationals.
inline BigInt encoded_sum(const std::vector<const ClientRecord*>& rows,
                          const std::string& feature, int64_t scale) {
  BigInt s = 0;
  for (const ClientRecord* r : rows) s += encode_fixed(std::get<double>(r->values.at(feature)), scale);
  return s;
}

inline Rational oracle_mean(const ClientPool& pool, const std::vector<const Predicate*>& preds,
                            const std::string& feature, int64_t scale, const std::string& name) {
  std::vector<const ClientRecord*> rows = matching_rows(pool, preds);
  if (rows.empty())
    throw Error(ErrorCode::EmptyGroup, "no client matches " + name + "; its mean is undefined");
  return Rational(encoded_sum(rows, feature, scale),
                  BigInt(scale) * BigInt(static_cast<int64_t>(rows.size())));
}

} // namespace detail

// Combine results computed from per-sub-query scalar answers. Shared by the
// oracle and by callers that execute sub-queries without materialized combine
// nodes. Keys are "combine<j>".
inline std::map<std::string, Rational> compose_answers(
    const QueryIR& ir, const std::map<size_t, Rational>& sub_value) {
  std::map<std::string, Rational> out;
  for (size_t j = 0; j < ir.final_combine.size(); ++j) {
    const CombineExpr& c = ir.final_combine[j];
    auto l = sub_value.find(static_cast<size_t>(c.left));
    auto r = sub_value.find(static_cast<size_t>(c.right));
    if (l == sub_value.end() || r == sub_value.end())
      throw Error(ErrorCode::UnresolvedReference,
                  "combination " + std::to_string(j) +
                      " references a sub-query without a single scalar answer");
    std::string name = "combine" + std::to_string(j);
    if (c.op == CombineOp::Difference) {
      out.emplace(name, l->second - r->second);
    } else {
      if (r->second == 0)
        throw Error(ErrorCode::DivisionByZero, "combination '" + name + "' divided by zero");
      out.emplace(name, l->second / r->second);
    }
  }
  return out;
}

// Answers computed directly on raw records, at the pipeline's fixed-point
// precision. Keys: "sub<i>" per ungrouped sub-query, "sub<i>.<value>" per
// group cell, "combine<j>" per final combination.
inline std::map<std::string, Rational> plaintext_oracle(const QueryIR& ir, const ClientPool& pool,
                                                        int64_t scale = 100) {
  if (pool.records.empty())
    throw Error(ErrorCode::EmptyPool, "client pool has no records");

  std::map<std::string, Rational> out;
  std::map<size_t, Rational> scalar; // ungrouped sub answers, for combines

  for (size_t i = 0; i < ir.subqueries.size(); ++i) {
    const SubQuery& sub = ir.subqueries[i];
    for (const std::string& label : sub_answer_labels(sub, pool.schema)) {
      std::string name = "sub" + std::to_string(i) + (label.empty() ? "" : "." + label);

      Predicate group_pred;
      std::vector<const Predicate*> base{&sub.filter};
      if (!label.empty()) {
        group_pred.atoms.push_back(Atom{*sub.group_by, Cmp::Eq, label});
        base.push_back(&group_pred);
      }

      Rational value;
      switch (sub.intent) {
        case Intent::Count:
          value = Rational(detail::matching_rows(pool, base).size());
          break;
        case Intent::Sum:
          value = Rational(detail::encoded_sum(detail::matching_rows(pool, base), sub.feature,
                                               scale),
                           BigInt(scale));
          break;
        case Intent::Mean:
          value = detail::oracle_mean(pool, base, sub.feature, scale, "'" + name + "'");
          break;
        case Intent::Percentage:
        case Intent::Ratio: {
          size_t den = detail::matching_rows(pool, base).size();
          if (den == 0)
            throw Error(ErrorCode::EmptyGroup,
                        "no client matches the base of '" + name + "'; its share is undefined");
          std::vector<const Predicate*> num = base;
          num.push_back(&*sub.condition);
          value = Rational(BigInt(detail::matching_rows(pool, num).size()),
                           BigInt(static_cast<int64_t>(den)));
          break;
        }
        case Intent::Comparison: {
          std::vector<const Predicate*> left = base, right = base;
          left.push_back(&sub.compare->first);
          right.push_back(&sub.compare->second);
          if (sub.feature.empty()) {
            value = Rational(BigInt(detail::matching_rows(pool, left).size()) -
                             BigInt(detail::matching_rows(pool, right).size()));
          } else {
            value = detail::oracle_mean(pool, left, sub.feature, scale,
                                        "the left side of '" + name + "'") -
                    detail::oracle_mean(pool, right, sub.feature, scale,
                                        "the right side of '" + name + "'");
          }
          break;
        }
      }
      out.emplace(name, value);
      if (label.empty()) scalar.emplace(i, std::move(value));
    }
  }

  for (auto& [name, v] : compose_answers(ir, scalar)) out.emplace(name, v);
  return out;
}

} // namespace faforge
