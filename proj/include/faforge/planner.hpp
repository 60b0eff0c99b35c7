#pragma once
//===----------------------------------------------------------------------===//
// Hierarchical planner, deterministic half.
//
// The coarse step turns a query into structured IR (here: parsing the IR
// grammar; an LLM front-end producing the same grammar lives in llm.hpp).
// The fine step instantiates per-intent DAG templates: each sub-query becomes
// one preliminary workflow DAG whose node ids are deterministic functions of
// the content, so identical work planned twice gets identical names — which
// is precisely what lets the optimizer fold duplicated work later.
//
// Template skeletons are data: which Access groups exist (base filter,
// filter+condition, the two comparison sides), which value slots each one
// reads ("one" is the constant-1 count slot), and which arithmetic form
// answers the sub-query.
//===----------------------------------------------------------------------===//

#include <optional>
#include <string>
#include <vector>

#include "faforge/dag.hpp"
#include "faforge/error.hpp"
#include "faforge/ir.hpp"
#include "faforge/predicate.hpp"
#include "faforge/schema.hpp"

namespace faforge {

struct DagTemplate {
  enum class Which { Filter, FilterAndCondition, CompareLeft, CompareRight };
  enum class Slot { Feature, One };
  enum class AnswerForm {
    PlainDecrypt,        // the single chain's Decrypt is the answer
    DivideFeatureByCount,
    DivideCounts,        // first access group over the second
    DifferenceOfMeans,
    DifferenceOfCounts,
  };

  struct AccessSpec {
    Which which;
    std::vector<Slot> slots;
  };

  Intent intent;
  bool requires_feature = false;
  std::vector<AccessSpec> accesses;
  AnswerForm answer;
};

inline std::vector<DagTemplate> default_templates() {
  using W = DagTemplate::Which;
  using S = DagTemplate::Slot;
  using A = DagTemplate::AnswerForm;
  return {
      {Intent::Count, false, {{W::Filter, {S::One}}}, A::PlainDecrypt},
      {Intent::Sum, true, {{W::Filter, {S::Feature}}}, A::PlainDecrypt},
      {Intent::Mean, true, {{W::Filter, {S::Feature, S::One}}}, A::DivideFeatureByCount},
      {Intent::Percentage, false,
       {{W::FilterAndCondition, {S::One}}, {W::Filter, {S::One}}}, A::DivideCounts},
      {Intent::Ratio, false,
       {{W::FilterAndCondition, {S::One}}, {W::Filter, {S::One}}}, A::DivideCounts},
      {Intent::Comparison, true,
       {{W::CompareLeft, {S::Feature, S::One}}, {W::CompareRight, {S::Feature, S::One}}},
       A::DifferenceOfMeans},
      {Intent::Comparison, false,
       {{W::CompareLeft, {S::One}}, {W::CompareRight, {S::One}}}, A::DifferenceOfCounts},
  };
}

namespace detail {

inline const DagTemplate* find_template(const std::vector<DagTemplate>& templates,
                                        const SubQuery& sub) {
  for (const DagTemplate& t : templates) {
    if (t.intent != sub.intent) continue;
    if (sub.intent == Intent::Comparison && t.requires_feature != !sub.feature.empty())
      continue;
    return &t;
  }
  return nullptr;
}

// canonical(a AND b) or a located SchemaMismatch when the conjunction is empty.
inline Predicate conjoin_or_throw(const Predicate& a, const Predicate& b, const Schema& schema,
                                  const std::string& what) {
  Predicate merged = a;
  merged.atoms.insert(merged.atoms.end(), b.atoms.begin(), b.atoms.end());
  auto c = canonical(merged, schema);
  if (!c)
    throw Error(ErrorCode::SchemaMismatch, what + " is unsatisfiable (no client can match)");
  return *c;
}

struct ChainIds {
  std::string acc, enc, agg, dp, dec;
};

// Get-or-create the Access -> ... -> Decrypt chain for one slot under one
// predicate. Ids are pure functions of (slot, predicate), so replanning the
// same work lands on the same nodes.
inline ChainIds ensure_chain(FaDag& d, const Predicate& pred, const std::string& slot,
                             double epsilon, double sensitivity) {
  std::string slug = predicate_slug(pred);
  ChainIds ids{"acc_" + slug, "enc_" + slot + "_" + slug, "agg_" + slot + "_" + slug,
               "dp_" + slot + "_" + slug, "dec_" + slot + "_" + slug};

  if (!d.has_node(ids.acc)) {
    Node a;
    a.id = ids.acc;
    a.kind = OpKind::Access;
    a.predicate = pred;
    a.outputs = {slot};
    d.add_node(a);
  } else {
    Node& a = d.mutable_node(ids.acc);
    if (*a.predicate != pred)
      throw Error(ErrorCode::InvalidArgument,
                  "node id collision: '" + ids.acc + "' names two different predicates");
    if (std::find(a.outputs.begin(), a.outputs.end(), slot) == a.outputs.end()) {
      a.outputs.push_back(slot);
      std::sort(a.outputs.begin(), a.outputs.end());
    }
  }
  if (!d.has_node(ids.enc)) {
    Node e;
    e.id = ids.enc;
    e.kind = OpKind::Encrypt;
    e.feature = slot;
    d.add_node(e);
    d.add_edge(ids.acc, ids.enc);
  }
  if (!d.has_node(ids.agg)) {
    Node g;
    g.id = ids.agg;
    g.kind = OpKind::Aggregate;
    g.agg_fn = "sum";
    d.add_node(g);
    d.add_edge(ids.enc, ids.agg);
  }
  if (!d.has_node(ids.dp)) {
    Node n;
    n.id = ids.dp;
    n.kind = OpKind::NoiseAdd;
    n.dp_params = DpParams{epsilon, sensitivity};
    d.add_node(n);
    d.add_edge(ids.agg, ids.dp);
  }
  if (!d.has_node(ids.dec)) {
    Node dn;
    dn.id = ids.dec;
    dn.kind = OpKind::Decrypt;
    d.add_node(dn);
    d.add_edge(ids.dp, ids.dec);
  }
  return ids;
}

inline std::string ensure_calc(FaDag& d, const std::string& id, const std::string& expr,
                               const std::vector<std::string>& inputs) {
  if (!d.has_node(id)) {
    Node c;
    c.id = id;
    c.kind = OpKind::Calculate;
    c.calc_expr = expr;
    d.add_node(c);
    for (auto& in : inputs) d.add_edge(in, id);
  }
  return id;
}

inline double slot_sensitivity(const std::string& slot, const Schema& schema) {
  if (slot == "one") return 1.0;
  return schema.at(slot).sensitivity;
}

} // namespace detail

// Labels for a sub-query's answers: [""] for plain sub-queries, the group
// values (schema order) for grouped ones.
inline std::vector<std::string> sub_answer_labels(const SubQuery& sub, const Schema& schema) {
  if (!sub.group_by) return {""};
  return schema.at(*sub.group_by).values;
}

// Instantiate the matching template for one sub-query. Answer nodes are
// registered in group order (one per label).
inline FaDag fine_plan(const SubQuery& sub, const std::vector<DagTemplate>& templates,
                       const Schema& schema, double epsilon = 1.0) {
  const DagTemplate* t = detail::find_template(templates, sub);
  if (!t)
    throw Error(ErrorCode::NoTemplate,
                std::string("no DAG template covers intent ") + to_string(sub.intent) +
                    (sub.feature.empty() ? " without a feature" : " with a feature"));

  // expand groups into concrete base filters
  std::vector<Predicate> bases;
  if (sub.group_by) {
    for (auto& v : schema.at(*sub.group_by).values) {
      auto base = conjoin_categorical(sub.filter, *sub.group_by, {v}, schema);
      if (!base)
        throw Error(ErrorCode::SchemaMismatch,
                    "group value '" + v + "' of '" + *sub.group_by +
                        "' contradicts the sub-query filter");
      bases.push_back(*base);
    }
  } else {
    auto base = canonical(sub.filter, schema);
    if (!base)
      throw Error(ErrorCode::SchemaMismatch, "sub-query filter is unsatisfiable");
    bases.push_back(*base);
  }

  FaDag d;
  std::vector<std::string> answers;
  for (const Predicate& base : bases) {
    // resolve each access group's predicate
    std::vector<Predicate> preds;
    for (auto& spec : t->accesses) {
      switch (spec.which) {
        case DagTemplate::Which::Filter:
          preds.push_back(base);
          break;
        case DagTemplate::Which::FilterAndCondition:
          preds.push_back(detail::conjoin_or_throw(base, *sub.condition, schema,
                                                   "filter plus condition"));
          break;
        case DagTemplate::Which::CompareLeft:
          preds.push_back(
              detail::conjoin_or_throw(base, sub.compare->first, schema, "left compare side"));
          break;
        case DagTemplate::Which::CompareRight:
          preds.push_back(
              detail::conjoin_or_throw(base, sub.compare->second, schema, "right compare side"));
          break;
      }
    }

    // build chains
    std::vector<std::map<std::string, detail::ChainIds>> chains(preds.size());
    for (size_t g = 0; g < preds.size(); ++g) {
      for (auto slot_kind : t->accesses[g].slots) {
        std::string slot =
            slot_kind == DagTemplate::Slot::Feature ? sub.feature : std::string("one");
        chains[g][slot] = detail::ensure_chain(d, preds[g], slot, epsilon,
                                               detail::slot_sensitivity(slot, schema));
      }
    }

    // answer node
    auto mean_calc = [&](size_t g) {
      const auto& f = chains[g].at(sub.feature);
      const auto& o = chains[g].at("one");
      return detail::ensure_calc(d,
                                 "cal_mean_" + sub.feature + "_" + predicate_slug(preds[g]),
                                 f.dec + " / " + o.dec, {f.dec, o.dec});
    };
    switch (t->answer) {
      case DagTemplate::AnswerForm::PlainDecrypt: {
        const auto& only = chains[0].begin()->second;
        answers.push_back(only.dec);
        break;
      }
      case DagTemplate::AnswerForm::DivideFeatureByCount:
        answers.push_back(mean_calc(0));
        break;
      case DagTemplate::AnswerForm::DivideCounts: {
        const auto& num = chains[0].at("one");
        const auto& den = chains[1].at("one");
        answers.push_back(detail::ensure_calc(
            d,
            "cal_ratio_" + predicate_slug(preds[0]) + "__" + predicate_slug(preds[1]),
            num.dec + " / " + den.dec,
            num.dec == den.dec ? std::vector<std::string>{num.dec}
                               : std::vector<std::string>{num.dec, den.dec}));
        break;
      }
      case DagTemplate::AnswerForm::DifferenceOfMeans: {
        std::string l = mean_calc(0), r = mean_calc(1);
        answers.push_back(detail::ensure_calc(
            d, "cal_diff_" + predicate_slug(preds[0]) + "__" + predicate_slug(preds[1]),
            l + " - " + r, l == r ? std::vector<std::string>{l} : std::vector<std::string>{l, r}));
        break;
      }
      case DagTemplate::AnswerForm::DifferenceOfCounts: {
        const auto& l = chains[0].at("one");
        const auto& r = chains[1].at("one");
        answers.push_back(detail::ensure_calc(
            d, "cal_diff_" + predicate_slug(preds[0]) + "__" + predicate_slug(preds[1]),
            l.dec + " - " + r.dec,
            l.dec == r.dec ? std::vector<std::string>{l.dec}
                           : std::vector<std::string>{l.dec, r.dec}));
        break;
      }
    }
  }
  d.set_answer_nodes(answers);
  return d;
}

struct PlannedQuery {
  QueryIR ir;
  std::vector<FaDag> preliminaries; // one per sub-query
};

inline PlannedQuery plan(const QueryIR& ir, const Schema& schema,
                         const std::vector<DagTemplate>& templates, double epsilon = 1.0) {
  PlannedQuery out;
  out.ir = ir;
  for (auto& sub : ir.subqueries)
    out.preliminaries.push_back(fine_plan(sub, templates, schema, epsilon));
  return out;
}

} // namespace faforge
