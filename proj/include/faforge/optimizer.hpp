#pragma once
//===----------------------------------------------------------------------===//
// Workflow optimizer: folds a list of preliminary DAGs (one per sub-query)
// into a single cheaper DAG in three fixed stages.
//
//   1. merge-common         union the inputs, then repeatedly unify nodes that
//                           do identical work on identical upstream lineage
//                           (equal canonical key + equal predecessor set; the
//                           lexicographically smallest id survives). Access
//                           nodes with the same client filter additionally
//                           unify across differing output slots, widening the
//                           survivor's slot list.
//   2. partition-predicates when one Access filter is covered by sibling
//                           filters that each pin one categorical feature to a
//                           disjoint value set, the broad chain is deleted: a
//                           remainder chain (feature in the leftover values)
//                           is added if the siblings don't cover everything,
//                           and per-slot Calculate nodes rebuild the broad
//                           aggregate as the sum of the partition decrypts.
//                           Runs to a fixpoint; every pass strictly shrinks
//                           total client coverage, so it terminates.
//   3. augment-implied      materialize each final_combine expression as a
//                           Calculate over the combined sub-answers.
//
// Every stage mutates the DAG exclusively through a small edit-script
// vocabulary (unify / widen_access / add_nodes / add_edges / rewrite_refs /
// remove_nodes / append_answers). The scripts are recorded in a RewriteTrace,
// so replay(inputs, trace) reproduces the optimized DAG mechanically, without
// re-deriving any decision — the trace is a complete, auditable account of
// what changed.
//===----------------------------------------------------------------------===//

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "faforge/calc.hpp"
#include "faforge/dag.hpp"
#include "faforge/dag_json.hpp"
#include "faforge/error.hpp"
#include "faforge/ir.hpp"
#include "faforge/predicate.hpp"
#include "faforge/schema.hpp"
#include "faforge/validate.hpp"

namespace faforge {

struct RewriteTrace {
  struct Entry {
    std::string rule;      // merge-common | partition-predicates | augment-implied
    nlohmann::json detail; // the edit script this rule application performed
  };
  std::vector<Entry> entries;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const Entry& e : entries) arr.push_back({{"rule", e.rule}, {"detail", e.detail}});
    return arr;
  }
};

namespace detail {

// Tracks how answer-producing nodes got renamed across rewrites so callers can
// map a preliminary DAG's answer ids onto the optimized DAG.
using Renames = std::map<std::string, std::string>;

inline std::string resolve(const Renames& renames, std::string id) {
  for (auto it = renames.find(id); it != renames.end(); it = renames.find(id)) id = it->second;
  return id;
}

inline void dedupe_preserving_order(std::vector<std::string>& ids) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto& id : ids)
    if (seen.insert(id).second) out.push_back(id);
  ids = std::move(out);
}

// Apply one recorded edit script to the DAG. Optimize builds scripts and runs
// them through this same function, which is what makes traces replayable by
// construction. Operation order within a script is fixed. The answer list is
// snapshotted up front because node removal would otherwise unregister
// answers that are being renamed, not deleted.
inline void apply_edit(FaDag& d, const nlohmann::json& script, Renames* renames) {
  std::map<std::string, std::string> ref_map;
  std::vector<std::string> answers = d.answer_nodes();

  if (script.contains("unify")) {
    for (const auto& group : script["unify"]) {
      const std::string kept = group["kept"].get<std::string>();
      for (const auto& dj : group["dropped"]) {
        const std::string dropped = dj.get<std::string>();
        for (const std::string& p : d.predecessors(dropped))
          if (p != kept && !d.edges().count({p, kept})) d.add_edge(p, kept);
        for (const std::string& s : d.successors(dropped))
          if (s != kept && !d.edges().count({kept, s})) d.add_edge(kept, s);
        d.remove_node(dropped);
        ref_map[dropped] = kept;
        if (renames) (*renames)[dropped] = kept;
      }
    }
  }
  if (script.contains("widen_access")) {
    for (const auto& w : script["widen_access"]) {
      Node& a = d.mutable_node(w["id"].get<std::string>());
      a.outputs = w["outputs"].get<std::vector<std::string>>();
    }
  }
  if (script.contains("add_nodes")) {
    for (const auto& [id, body] : script["add_nodes"].items())
      d.add_node(node_from_json(id, body));
  }
  if (script.contains("add_edges")) {
    for (const auto& e : script["add_edges"]) {
      auto from = e[0].get<std::string>(), to = e[1].get<std::string>();
      if (!d.edges().count({from, to})) d.add_edge(from, to);
    }
  }
  if (script.contains("rewrite_refs")) {
    for (const auto& [oldid, newid] : script["rewrite_refs"].items()) {
      ref_map[oldid] = newid.get<std::string>();
      if (renames) (*renames)[oldid] = newid.get<std::string>();
    }
  }
  if (!ref_map.empty()) {
    std::vector<std::string> ids;
    for (const auto& [id, n] : d.nodes())
      if (n.kind == OpKind::Calculate) ids.push_back(id);
    for (const std::string& id : ids) {
      Node& n = d.mutable_node(id);
      CalcPtr ast = parse_calc(n.calc_expr);
      bool hit = false;
      for (const std::string& r : calc_refs(ast))
        if (ref_map.count(r)) hit = true;
      if (hit) n.calc_expr = print_calc(rewrite_calc_refs(ast, ref_map));
    }
    for (std::string& a : answers) {
      auto it = ref_map.find(a);
      if (it != ref_map.end()) a = it->second;
    }
  }
  if (script.contains("remove_nodes")) {
    for (const auto& id : script["remove_nodes"]) d.remove_node(id.get<std::string>());
  }
  if (script.contains("append_answers")) {
    for (const auto& id : script["append_answers"]) answers.push_back(id.get<std::string>());
  }
  dedupe_preserving_order(answers);
  d.set_answer_nodes(answers);
}

// Disjoint union of the inputs. Nodes appearing under the same id must agree
// in content; Access nodes with the same filter merge their output slots.
inline FaDag union_dags(const std::vector<FaDag>& dags) {
  FaDag u;
  for (const FaDag& d : dags) {
    for (const auto& [id, n] : d.nodes()) {
      if (!u.has_node(id)) {
        u.add_node(n);
        continue;
      }
      Node& have = u.mutable_node(id);
      if (have.kind == OpKind::Access && n.kind == OpKind::Access &&
          have.predicate->repr() == n.predicate->repr()) {
        std::set<std::string> slots(have.outputs.begin(), have.outputs.end());
        slots.insert(n.outputs.begin(), n.outputs.end());
        have.outputs.assign(slots.begin(), slots.end());
        continue;
      }
      if (canonical_key(have) != canonical_key(n))
        throw Error(ErrorCode::InvalidArgument,
                    "node id '" + id + "' names different operations across input DAGs");
    }
    for (const auto& [from, to] : d.edges())
      if (!u.edges().count({from, to})) u.add_edge(from, to);
  }
  std::vector<std::string> answers;
  for (const FaDag& d : dags)
    answers.insert(answers.end(), d.answer_nodes().begin(), d.answer_nodes().end());
  dedupe_preserving_order(answers);
  u.set_answer_nodes(answers);
  return u;
}

inline std::string joined_predecessors(const FaDag& d, const std::string& id) {
  return join(d.predecessors(id), ",");
}

// One unification batch: Access nodes sharing a filter first (their canonical
// keys differ by slot list, so the generic rule cannot see them), then any
// nodes sharing both canonical key and predecessor set. Returns whether the
// DAG changed; batches cascade down the pipeline stages until a fixpoint.
inline bool cse_pass(FaDag& d, RewriteTrace* trace, Renames* renames) {
  nlohmann::json unify = nlohmann::json::array();
  nlohmann::json widen = nlohmann::json::array();

  std::map<std::string, std::vector<std::string>> by_pred;
  for (const auto& [id, n] : d.nodes())
    if (n.kind == OpKind::Access) by_pred[n.predicate->repr()].push_back(id);
  for (const auto& [pred, ids] : by_pred) {
    if (ids.size() < 2) continue;
    std::set<std::string> slots;
    for (const auto& id : ids) {
      const auto& o = d.node(id).outputs;
      slots.insert(o.begin(), o.end());
    }
    unify.push_back({{"kept", ids.front()},
                     {"dropped", std::vector<std::string>(ids.begin() + 1, ids.end())}});
    widen.push_back({{"id", ids.front()},
                     {"outputs", std::vector<std::string>(slots.begin(), slots.end())}});
  }

  if (unify.empty()) {
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> by_work;
    for (const auto& [id, n] : d.nodes())
      by_work[{canonical_key(n), joined_predecessors(d, id)}].push_back(id);
    for (const auto& [key, ids] : by_work) {
      if (ids.size() < 2) continue;
      unify.push_back({{"kept", ids.front()},
                       {"dropped", std::vector<std::string>(ids.begin() + 1, ids.end())}});
    }
  }

  if (unify.empty()) return false;
  nlohmann::json script{{"unify", unify}};
  if (!widen.empty()) script["widen_access"] = widen;
  apply_edit(d, script, renames);
  if (trace) trace->entries.push_back({"merge-common", script});
  return true;
}

// A candidate partition member: an Access whose filter equals the broad
// filter's non-feature part plus one constraint pinning `feature` to a value
// subset strictly inside what the broad filter allows.
struct PartitionPart {
  std::string access_id;
  std::string slug;
  Predicate pred;
  std::vector<std::string> values;
  bool created = false; // remainder chains may not exist yet
};

// Find the first applicable partition rewrite and perform it. The scan is
// deterministic: broad candidates in ascending id order; for each, the
// categorical feature yielding the most members (ties to the smaller name).
inline bool partition_once(FaDag& d, const Schema& schema, RewriteTrace* trace,
                           Renames* renames) {
  std::vector<std::string> access_ids;
  for (const auto& [id, n] : d.nodes())
    if (n.kind == OpKind::Access) access_ids.push_back(id);

  // Only chains following the deterministic naming scheme participate; the
  // rule declines on anything hand-shaped.
  std::map<std::string, Predicate> canon;
  for (const auto& id : access_ids) {
    auto c = canonical(*d.node(id).predicate, schema);
    if (c && id == "acc_" + predicate_slug(*c)) canon[id] = *c;
  }

  auto atoms_on = [](const Predicate& p, const std::string& f, bool keep) {
    Predicate out;
    for (const Atom& a : p.atoms)
      if ((a.feature == f) == keep) out.atoms.push_back(a);
    return out;
  };

  for (const auto& broad_id : access_ids) {
    auto b = canon.find(broad_id);
    if (b == canon.end()) continue;
    const Predicate& p0 = b->second;
    const Node& acc0 = d.node(broad_id);

    // verify the broad chain is an exclusive, straight-line consumer set
    bool shaped = true;
    const std::string slug0 = predicate_slug(p0);
    std::set<std::string> expected_encs;
    for (const std::string& s : acc0.outputs) expected_encs.insert("enc_" + s + "_" + slug0);
    {
      auto succ = d.successors(broad_id);
      if (std::set<std::string>(succ.begin(), succ.end()) != expected_encs) shaped = false;
    }
    for (const std::string& s : acc0.outputs) {
      if (!shaped) break;
      std::string enc = "enc_" + s + "_" + slug0, agg = "agg_" + s + "_" + slug0,
                  dp = "dp_" + s + "_" + slug0, dec = "dec_" + s + "_" + slug0;
      for (const auto& [from, to] :
           std::initializer_list<std::pair<std::string, std::string>>{
               {enc, agg}, {agg, dp}, {dp, dec}})
        if (!d.has_node(from) || !d.has_node(to) || d.successors(from) != std::vector{to} ||
            d.predecessors(to) != std::vector{from})
          shaped = false;
      if (shaped)
        for (const std::string& c : d.successors(dec))
          if (d.node(c).kind != OpKind::Calculate) shaped = false;
    }
    if (!shaped) continue;

    // pick the feature with the most disjoint members
    std::string feature;
    std::vector<PartitionPart> members;
    for (const auto& [fname, fspec] : schema.features) {
      if (fspec.type != FeatureType::Categorical) continue;
      std::vector<std::string> allowed0 = allowed_values(p0, fname, schema);
      if (allowed0.size() < 2) continue;
      Predicate base0 = atoms_on(p0, fname, false).normalized();

      std::vector<PartitionPart> found;
      std::set<std::string> taken;
      for (const auto& [cand_id, cp] : canon) {
        if (cand_id == broad_id) continue;
        if (atoms_on(cp, fname, false).normalized().repr() != base0.repr()) continue;
        std::vector<std::string> vals = allowed_values(cp, fname, schema);
        if (vals.empty() || vals.size() >= allowed0.size()) continue;
        bool inside = std::includes(allowed0.begin(), allowed0.end(), vals.begin(), vals.end());
        bool disjoint = std::none_of(vals.begin(), vals.end(),
                                     [&](const std::string& v) { return taken.count(v); });
        if (!inside || !disjoint) continue;
        taken.insert(vals.begin(), vals.end());
        found.push_back({cand_id, predicate_slug(cp), cp, vals, false});
      }
      if (found.size() > members.size()) {
        members = std::move(found);
        feature = fname;
      }
    }
    if (members.empty()) continue;

    // remainder chain for the uncovered values, reusing an existing chain if
    // one already carries exactly that filter
    std::vector<std::string> allowed0 = allowed_values(p0, feature, schema);
    std::set<std::string> taken;
    for (const auto& m : members) taken.insert(m.values.begin(), m.values.end());
    std::vector<std::string> rem_vals;
    for (const auto& v : allowed0)
      if (!taken.count(v)) rem_vals.push_back(v);

    std::vector<PartitionPart> parts = members;
    if (!rem_vals.empty()) {
      Predicate base0 = atoms_on(p0, feature, false).normalized();
      auto rem_pred = conjoin_categorical(base0, feature, rem_vals, schema);
      // nonempty subset of an enumerated feature cannot contradict base0 here
      PartitionPart rem{"acc_" + predicate_slug(*rem_pred), predicate_slug(*rem_pred),
                        *rem_pred, rem_vals, false};
      if (d.has_node(rem.access_id)) {
        // same id implies same canonical filter by the naming scheme check
        if (!canon.count(rem.access_id)) continue;
      } else {
        rem.created = true;
      }
      parts.push_back(std::move(rem));
    }

    // build the edit script
    nlohmann::json add_nodes = nlohmann::json::object();
    nlohmann::json add_edges = nlohmann::json::array();
    nlohmann::json widen = nlohmann::json::array();
    nlohmann::json rewrites = nlohmann::json::object();
    nlohmann::json removed = nlohmann::json::array();
    nlohmann::json part_ids = nlohmann::json::array();

    for (const PartitionPart& part : parts) {
      part_ids.push_back(part.access_id);
      std::set<std::string> have_slots;
      if (!part.created) {
        const auto& o = d.node(part.access_id).outputs;
        have_slots.insert(o.begin(), o.end());
      }
      std::set<std::string> want_slots = have_slots;
      for (const std::string& s : acc0.outputs) want_slots.insert(s);

      if (part.created) {
        Node a;
        a.id = part.access_id;
        a.kind = OpKind::Access;
        a.predicate = part.pred;
        a.outputs.assign(want_slots.begin(), want_slots.end());
        add_nodes[a.id] = node_to_json(a);
      } else if (want_slots != have_slots) {
        widen.push_back({{"id", part.access_id},
                         {"outputs", std::vector<std::string>(want_slots.begin(),
                                                              want_slots.end())}});
      }

      for (const std::string& s : acc0.outputs) {
        std::string enc = "enc_" + s + "_" + part.slug, agg = "agg_" + s + "_" + part.slug,
                    dp = "dp_" + s + "_" + part.slug, dec = "dec_" + s + "_" + part.slug;
        if (d.has_node(dec) || add_nodes.contains(dec)) continue; // slot already served
        Node e, g, n, dn;
        e.id = enc;
        e.kind = OpKind::Encrypt;
        e.feature = s;
        g.id = agg;
        g.kind = OpKind::Aggregate;
        g.agg_fn = "sum";
        n.id = dp;
        n.kind = OpKind::NoiseAdd;
        n.dp_params = d.node("dp_" + s + "_" + slug0).dp_params; // broad chain's budget
        dn.id = dec;
        dn.kind = OpKind::Decrypt;
        for (Node* nn : {&e, &g, &n, &dn}) add_nodes[nn->id] = node_to_json(*nn);
        add_edges.push_back({part.access_id, enc});
        add_edges.push_back({enc, agg});
        add_edges.push_back({agg, dp});
        add_edges.push_back({dp, dec});
      }
    }

    // per-slot reconstitution and broad-chain removal
    removed.push_back(broad_id);
    for (const std::string& s : acc0.outputs) {
      std::string old_dec = "dec_" + s + "_" + slug0;
      std::string sum_id = "cal_sum_" + s + "_" + slug0;
      std::vector<std::string> terms;
      for (const PartitionPart& part : parts) terms.push_back("dec_" + s + "_" + part.slug);
      Node c;
      c.id = sum_id;
      c.kind = OpKind::Calculate;
      c.calc_expr = join(terms, " + ");
      add_nodes[sum_id] = node_to_json(c);
      for (const std::string& t : terms) add_edges.push_back({t, sum_id});
      for (const std::string& consumer : d.successors(old_dec))
        add_edges.push_back({sum_id, consumer});
      rewrites[old_dec] = sum_id;
      for (const std::string& prefix : {"enc_", "agg_", "dp_", "dec_"})
        removed.push_back(prefix + s + "_" + slug0);
    }

    nlohmann::json script{{"broad", broad_id},   {"feature", feature},
                          {"parts", part_ids},   {"add_nodes", add_nodes},
                          {"add_edges", add_edges}, {"rewrite_refs", rewrites},
                          {"remove_nodes", removed}};
    if (!widen.empty()) script["widen_access"] = widen;
    apply_edit(d, script, renames);
    if (trace) trace->entries.push_back({"partition-predicates", script});
    return true;
  }
  return false;
}

} // namespace detail

// Stage 1: union the preliminaries and unify duplicated work.
inline FaDag merge_common(const std::vector<FaDag>& dags, RewriteTrace* trace = nullptr,
                          detail::Renames* renames = nullptr) {
  for (size_t i = 0; i < dags.size(); ++i) {
    auto violations = check_structure(dags[i]);
    if (!violations.empty())
      throw Error(ErrorCode::InvalidArgument,
                  "input DAG " + std::to_string(i) + " is invalid: " + violations[0].message);
  }
  FaDag u = detail::union_dags(dags);
  while (detail::cse_pass(u, trace, renames)) {
  }
  return u;
}

// Stage 2: replace broad chains by disjoint partition chains plus
// reconstitution sums, repeating until no Access filter is covered by others.
inline FaDag partition_predicates(FaDag d, [[maybe_unused]] const QueryIR& ir,
                                  const Schema& schema, RewriteTrace* trace = nullptr,
                                  detail::Renames* renames = nullptr) {
  while (detail::partition_once(d, schema, trace, renames)) {
  }
  return d;
}

// Stage 3: materialize final_combine expressions over the named sub-answers.
// `sub_answers` carries, per sub-query, the answer node ids in the optimized
// DAG (ungrouped sub-queries have exactly one).
inline FaDag augment_implied(FaDag d, const QueryIR& ir,
                             const std::vector<std::vector<std::string>>& sub_answers,
                             RewriteTrace* trace = nullptr,
                             std::vector<std::string>* combine_ids = nullptr) {
  nlohmann::json add_nodes = nlohmann::json::object();
  nlohmann::json add_edges = nlohmann::json::array();
  nlohmann::json answers = nlohmann::json::array();
  for (size_t k = 0; k < ir.final_combine.size(); ++k) {
    const CombineExpr& c = ir.final_combine[k];
    for (int side : {c.left, c.right})
      if (side < 0 || static_cast<size_t>(side) >= sub_answers.size() ||
          sub_answers[side].size() != 1)
        throw Error(ErrorCode::UnresolvedReference,
                    "final_combine[" + std::to_string(k) +
                        "] needs a single-answer sub-query on both sides");
    const std::string& l = sub_answers[c.left][0];
    const std::string& r = sub_answers[c.right][0];
    std::string id = "cal_combine_" + std::to_string(k);
    std::string expr = l + (c.op == CombineOp::Difference ? " - " : " / ") + r;
    if (d.has_node(id)) {
      if (canonical_calc(d.node(id).calc_expr) != expr)
        throw Error(ErrorCode::InvalidArgument,
                    "node id '" + id + "' already holds a different expression");
      if (combine_ids) combine_ids->push_back(id);
      continue; // already materialized (re-optimization)
    }
    Node n;
    n.id = id;
    n.kind = OpKind::Calculate;
    n.calc_expr = expr;
    add_nodes[id] = node_to_json(n);
    add_edges.push_back({l, id});
    if (r != l) add_edges.push_back({r, id});
    answers.push_back(id);
    if (combine_ids) combine_ids->push_back(id);
  }
  if (add_nodes.empty()) return d;
  nlohmann::json script{
      {"add_nodes", add_nodes}, {"add_edges", add_edges}, {"append_answers", answers}};
  detail::apply_edit(d, script, nullptr);
  if (trace) trace->entries.push_back({"augment-implied", script});
  return d;
}

struct OptimizeResult {
  FaDag dag;
  RewriteTrace trace;
  // per sub-query, the answer node ids in `dag` (group order for grouped subs)
  std::vector<std::vector<std::string>> sub_answers;
  // one node id per final_combine expression
  std::vector<std::string> combine_answers;
};

inline OptimizeResult optimize(const std::vector<FaDag>& dags, const QueryIR& ir,
                               const Schema& schema) {
  if (dags.size() != ir.subqueries.size())
    throw Error(ErrorCode::InvalidArgument,
                "optimizer needs one preliminary DAG per sub-query");
  std::vector<std::vector<std::string>> original;
  for (const FaDag& d : dags) original.push_back(d.answer_nodes());

  OptimizeResult out;
  detail::Renames renames;
  out.dag = merge_common(dags, &out.trace, &renames);
  out.dag = partition_predicates(std::move(out.dag), ir, schema, &out.trace, &renames);

  for (const auto& ids : original) {
    std::vector<std::string> mapped;
    for (const std::string& id : ids) mapped.push_back(detail::resolve(renames, id));
    out.sub_answers.push_back(std::move(mapped));
  }
  out.dag = augment_implied(std::move(out.dag), ir, out.sub_answers, &out.trace,
                            &out.combine_answers);
  return out;
}

// Mechanically re-apply a recorded trace to the same inputs. No rule logic
// runs here: the recorded edit scripts alone rebuild the optimized DAG.
inline FaDag replay(const std::vector<FaDag>& dags, const RewriteTrace& trace) {
  FaDag d = detail::union_dags(dags);
  for (const RewriteTrace::Entry& e : trace.entries) detail::apply_edit(d, e.detail, nullptr);
  return d;
}

} // namespace faforge
