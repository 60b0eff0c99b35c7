#pragma once
//===----------------------------------------------------------------------===//
// Workflow validation.
//
// check_structure enforces the pipeline contract on a decoded DAG:
//   (a) every Encrypt reads exactly one Access; every Aggregate reads only
//       Encrypts; every Decrypt reads exactly one NoiseAdd (differential
//       privacy is mandatory before any decryption)
//   (b) stage order Access < Encrypt < Aggregate < NoiseAdd < Decrypt <
//       Calculate along every edge (NoiseAdd and Calculate may chain)
//   (c) Calculate expressions may only reference predecessor node ids
//   (d) non-answer sinks are dead weight and get flagged
//
// check_completeness asks the semantic question: does the DAG produce an
// answer node for everything the query IR demands? Each required answer is
// matched to a distinct answer node with the right arithmetic capability
// (a Mean needs a division, a Comparison needs a subtraction, ...) via
// maximum bipartite matching.
//
// Violations are data, not exceptions: callers collect them, render them,
// or feed them back to an LLM repair loop.
//===----------------------------------------------------------------------===//

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faforge/calc.hpp"
#include "faforge/dag.hpp"
#include "faforge/dag_json.hpp"
#include "faforge/ir.hpp"

namespace faforge {

enum class ViolationCode {
  UnknownKind,
  MissingParam,
  OrderViolation,
  MissingStage,
  DanglingOutput,
  IncompleteAnswer,
};

inline const char* to_string(ViolationCode c) {
  switch (c) {
    case ViolationCode::UnknownKind: return "UnknownKind";
    case ViolationCode::MissingParam: return "MissingParam";
    case ViolationCode::OrderViolation: return "OrderViolation";
    case ViolationCode::MissingStage: return "MissingStage";
    case ViolationCode::DanglingOutput: return "DanglingOutput";
    case ViolationCode::IncompleteAnswer: return "IncompleteAnswer";
  }
  return "?";
}

struct Violation {
  ViolationCode code;
  std::vector<std::string> node_ids; // offending nodes, may be empty
  std::string message;

  bool operator==(const Violation&) const = default;

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"code", to_string(code)}, {"nodes", node_ids}, {"message", message}};
  }
};

// ---- structural checks -------------------------------------------------------

inline std::vector<Violation> check_structure(const FaDag& d) {
  std::vector<Violation> out;
  auto flag = [&](ViolationCode c, std::vector<std::string> ids, std::string msg) {
    out.push_back({c, std::move(ids), std::move(msg)});
  };

  // edge-level stage discipline
  for (auto& [from, to] : d.edges()) {
    OpKind fk = d.node(from).kind;
    OpKind tk = d.node(to).kind;
    int fs = stage_index(fk), ts = stage_index(tk);
    if (fs > ts) {
      flag(ViolationCode::OrderViolation, {from, to},
           std::string(to_string(fk)) + " '" + from + "' must not feed " + to_string(tk) +
               " '" + to + "': stage order runs Access -> Encrypt -> Aggregate -> "
               "NoiseAdd -> Decrypt -> Calculate");
    } else if (fs == ts) {
      if (fk != OpKind::NoiseAdd && fk != OpKind::Calculate)
        flag(ViolationCode::OrderViolation, {from, to},
             std::string(to_string(fk)) + " '" + from + "' must not feed another " +
                 to_string(tk) + " ('" + to + "')");
    } else if (ts - fs > 1) {
      flag(ViolationCode::MissingStage, {from, to},
           "edge " + from + " -> " + to + " skips the " +
               to_string(static_cast<OpKind>(fs + 1)) + " stage");
    }
  }

  // node-level arity over stage-legal predecessors
  for (auto& [id, n] : d.nodes()) {
    std::vector<std::string> preds = d.predecessors(id);
    auto count_kind_preds = [&](OpKind k) {
      size_t c = 0;
      for (auto& p : preds)
        if (d.node(p).kind == k) ++c;
      return c;
    };
    switch (n.kind) {
      case OpKind::Access:
        break; // in-edges already flagged by the edge rules
      case OpKind::Encrypt: {
        size_t c = count_kind_preds(OpKind::Access);
        if (c == 0)
          flag(ViolationCode::MissingStage, {id}, "Encrypt '" + id + "' has no Access source");
        else if (c > 1 || preds.size() > 1)
          flag(ViolationCode::OrderViolation, {id},
               "Encrypt '" + id + "' must read exactly one Access");
        break;
      }
      case OpKind::Aggregate:
        if (count_kind_preds(OpKind::Encrypt) == 0)
          flag(ViolationCode::MissingStage, {id},
               "Aggregate '" + id + "' has no Encrypt inputs");
        break;
      case OpKind::NoiseAdd: {
        size_t c = count_kind_preds(OpKind::Aggregate) + count_kind_preds(OpKind::NoiseAdd);
        if (c == 0)
          flag(ViolationCode::MissingStage, {id},
               "NoiseAdd '" + id + "' has no Aggregate (or NoiseAdd) input");
        else if (c > 1 || preds.size() > c)
          flag(ViolationCode::OrderViolation, {id},
               "NoiseAdd '" + id + "' must read exactly one aggregate value");
        break;
      }
      case OpKind::Decrypt: {
        size_t c = count_kind_preds(OpKind::NoiseAdd);
        if (c == 0)
          flag(ViolationCode::MissingStage, {id},
               "Decrypt '" + id + "' has no NoiseAdd input: noise addition is mandatory "
               "before decryption");
        else if (c > 1 || preds.size() > c)
          flag(ViolationCode::OrderViolation, {id},
               "Decrypt '" + id + "' must read exactly one NoiseAdd");
        break;
      }
      case OpKind::Calculate: {
        if (preds.empty())
          flag(ViolationCode::MissingStage, {id}, "Calculate '" + id + "' has no inputs");
        std::set<std::string> pred_set(preds.begin(), preds.end());
        try {
          for (auto& ref : calc_refs(n.calc_expr))
            if (!pred_set.count(ref))
              flag(ViolationCode::OrderViolation, {id, ref},
                   "Calculate '" + id + "' references '" + ref +
                       "' which is not one of its predecessors");
        } catch (const Error&) {
          flag(ViolationCode::MissingParam, {id},
               "Calculate '" + id + "' has an unparseable calc_expr");
        }
        break;
      }
    }
  }

  // answer wiring
  std::set<std::string> answers;
  for (auto& a : d.answer_nodes()) {
    answers.insert(a);
    if (!d.has_node(a)) {
      flag(ViolationCode::DanglingOutput, {a}, "answer node '" + a + "' does not exist");
      continue;
    }
    OpKind k = d.node(a).kind;
    if (k != OpKind::Decrypt && k != OpKind::Calculate)
      flag(ViolationCode::DanglingOutput, {a},
           std::string("answer node '") + a + "' is a " + to_string(k) +
               "; only Decrypt or Calculate values are observable answers");
  }
  for (auto& [id, n] : d.nodes()) {
    if (!answers.count(id) && d.successors(id).empty())
      flag(ViolationCode::DanglingOutput, {id},
           std::string(to_string(n.kind)) + " '" + id +
               "' is a sink but is not registered as an answer");
  }
  return out;
}

// ---- completeness -------------------------------------------------------------

namespace detail {

struct AnswerCaps {
  bool division = false;
  bool difference = false;
};

struct RequiredAnswer {
  std::string label;           // human-readable, for messages
  bool needs_division = false;
  bool needs_difference = false;
};

inline std::vector<RequiredAnswer> required_answers(const QueryIR& ir, const Schema& schema) {
  std::vector<RequiredAnswer> req;
  std::set<int> combined;
  for (auto& c : ir.final_combine) {
    combined.insert(c.left);
    combined.insert(c.right);
  }
  // verbatim-duplicated sub-queries ask the same question; one answer node
  // legitimately serves them all (the optimizer folds such duplicates)
  std::set<std::string> seen;
  for (size_t i = 0; i < ir.subqueries.size(); ++i) {
    const SubQuery& s = ir.subqueries[i];
    if (combined.count(static_cast<int>(i)) && !s.group_by)
      continue; // folded into a combine answer
    if (!seen.insert(subquery_to_json(s).dump()).second) continue;
    RequiredAnswer r;
    r.needs_division = s.intent == Intent::Mean || s.intent == Intent::Percentage ||
                       s.intent == Intent::Ratio;
    r.needs_difference = s.intent == Intent::Comparison;
    std::string base = std::string(to_string(s.intent)) +
                       (s.feature.empty() ? "" : " of " + s.feature) + " (sub-query " +
                       std::to_string(i) + ")";
    if (s.group_by) {
      for (auto& v : schema.at(*s.group_by).values) {
        RequiredAnswer g = r;
        g.label = base + " for " + *s.group_by + "=" + v;
        req.push_back(g);
      }
    } else {
      r.label = base;
      req.push_back(r);
    }
  }
  for (size_t k = 0; k < ir.final_combine.size(); ++k) {
    const CombineExpr& c = ir.final_combine[k];
    RequiredAnswer r;
    r.needs_division = c.op == CombineOp::Ratio;
    r.needs_difference = c.op == CombineOp::Difference;
    r.label = std::string(to_string(c.op)) + " of sub-queries " + std::to_string(c.left) +
              " and " + std::to_string(c.right) + " (combine " + std::to_string(k) + ")";
    req.push_back(r);
  }
  return req;
}

inline std::vector<std::pair<std::string, AnswerCaps>> answer_capabilities(const FaDag& d) {
  std::vector<std::pair<std::string, AnswerCaps>> out;
  for (auto& id : d.answer_nodes()) {
    if (!d.has_node(id)) continue; // structural check reports this
    const Node& n = d.node(id);
    AnswerCaps caps;
    if (n.kind == OpKind::Calculate) {
      try {
        CalcPtr ast = parse_calc(n.calc_expr);
        caps.division = calc_contains(ast, CalcNode::Kind::Div);
        caps.difference =
            calc_contains(ast, CalcNode::Kind::Sub) || calc_contains(ast, CalcNode::Kind::Neg);
      } catch (const Error&) {
        // unparseable expressions have no capabilities; structure check flags them
      }
    } else if (n.kind != OpKind::Decrypt) {
      continue;
    }
    out.emplace_back(id, caps);
  }
  return out;
}

} // namespace detail

// Does the DAG provide a distinct, capability-compatible answer node for every
// answer the IR requires? Grouped sub-queries require one answer per group
// value; sub-queries consumed by a final combine are answered by the combine.
inline std::vector<Violation> check_completeness(const FaDag& d, const QueryIR& ir,
                                                 const Schema& schema) {
  std::vector<detail::RequiredAnswer> req = detail::required_answers(ir, schema);
  std::vector<std::pair<std::string, detail::AnswerCaps>> answers =
      detail::answer_capabilities(d);

  auto compatible = [&](const detail::RequiredAnswer& r, const detail::AnswerCaps& c) {
    if (r.needs_division && !c.division) return false;
    if (r.needs_difference && !c.difference) return false;
    return true;
  };

  // Kuhn's augmenting-path maximum matching, requirements on the left.
  std::vector<int> match_of_answer(answers.size(), -1);
  std::vector<int> matched_req(req.size(), -1);

  // try the most constrained requirements first
  std::vector<size_t> order(req.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    auto w = [&](const detail::RequiredAnswer& r) {
      return (r.needs_division ? 2 : 0) + (r.needs_difference ? 2 : 0);
    };
    return w(req[a]) > w(req[b]);
  });

  std::function<bool(size_t, std::vector<bool>&)> try_assign =
      [&](size_t r, std::vector<bool>& visited) -> bool {
    for (size_t a = 0; a < answers.size(); ++a) {
      if (visited[a] || !compatible(req[r], answers[a].second)) continue;
      visited[a] = true;
      if (match_of_answer[a] == -1 ||
          try_assign(static_cast<size_t>(match_of_answer[a]), visited)) {
        match_of_answer[a] = static_cast<int>(r);
        matched_req[r] = static_cast<int>(a);
        return true;
      }
    }
    return false;
  };

  for (size_t r : order) {
    std::vector<bool> visited(answers.size(), false);
    try_assign(r, visited);
  }

  std::vector<Violation> out;
  for (size_t r = 0; r < req.size(); ++r) {
    if (matched_req[r] != -1) continue;
    std::string need;
    if (req[r].needs_division) need = " (needs a division)";
    else if (req[r].needs_difference) need = " (needs a difference)";
    out.push_back({ViolationCode::IncompleteAnswer,
                   {},
                   "no answer node completes: " + req[r].label + need});
  }
  return out;
}

inline std::vector<Violation> check_dag(const FaDag& d, const QueryIR& ir,
                                        const Schema& schema) {
  std::vector<Violation> out = check_structure(d);
  auto comp = check_completeness(d, ir, schema);
  out.insert(out.end(), comp.begin(), comp.end());
  return out;
}

// ---- permissive document-level check -----------------------------------------
//
// For CLI `validate` and LLM repair: inspect a raw JSON document and report
// kind/param problems as violations instead of throwing, falling back to the
// strict decoder + structure checks once the document is shape-sane.

inline std::vector<Violation> check_document(const nlohmann::json& j) {
  std::vector<Violation> out;
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_object()) {
    out.push_back({ViolationCode::MissingParam, {},
                   "document must carry a 'nodes' object (plus 'edges' and 'answer_nodes')"});
    return out;
  }
  for (auto& [id, nj] : j["nodes"].items()) {
    if (!nj.is_object() || !nj.contains("kind") || !nj["kind"].is_string()) {
      out.push_back(
          {ViolationCode::MissingParam, {id}, "node '" + id + "' has no kind"});
      continue;
    }
    std::string kind = nj["kind"].get<std::string>();
    if (!opkind_from_string(kind)) {
      out.push_back({ViolationCode::UnknownKind,
                     {id},
                     "node '" + id + "' has unknown kind '" + kind + "'"});
      continue;
    }
    try {
      Node n = detail::node_from_json(id, nj);
      validate_node_params(n);
    } catch (const Error& e) {
      out.push_back({ViolationCode::MissingParam, {id}, e.what()});
    }
  }
  if (!out.empty()) return out;
  try {
    FaDag d = json_to_dag(j);
    return check_structure(d);
  } catch (const Error& e) {
    // cycles, unknown edge endpoints, malformed answer lists
    out.push_back({ViolationCode::OrderViolation, {}, e.what()});
    return out;
  }
}

// Fraction of per-query completion flags that are set; the benchmark's
// headline number.
inline double completion_ratio(const std::vector<bool>& completed) {
  if (completed.empty())
    throw Error(ErrorCode::EmptyInput, "completion_ratio over an empty run");
  size_t done = 0;
  for (bool b : completed)
    if (b) ++done;
  return static_cast<double>(done) / static_cast<double>(completed.size());
}

} // namespace faforge
