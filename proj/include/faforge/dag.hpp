#pragma once
//===----------------------------------------------------------------------===//
// Workflow DAG model. Six operation kinds form the pipeline
//
//   Access -> Encrypt -> Aggregate -> NoiseAdd -> Decrypt -> Calculate
//
// Nodes are value types keyed by id; the container enforces id uniqueness,
// parameter well-formedness and acyclicity at mutation time, so any FaDag
// instance is structurally a DAG by construction. (Whether the *stages* are
// wired legally is the validator's job, not the container's.)
//===----------------------------------------------------------------------===//

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "faforge/calc.hpp"
#include "faforge/error.hpp"
#include "faforge/predicate.hpp"
#include "faforge/util.hpp"

namespace faforge {

enum class OpKind { Access, Encrypt, Aggregate, NoiseAdd, Decrypt, Calculate };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Access: return "Access";
    case OpKind::Encrypt: return "Encrypt";
    case OpKind::Aggregate: return "Aggregate";
    case OpKind::NoiseAdd: return "NoiseAdd";
    case OpKind::Decrypt: return "Decrypt";
    case OpKind::Calculate: return "Calculate";
  }
  return "?";
}

inline std::optional<OpKind> opkind_from_string(const std::string& s) {
  if (s == "Access") return OpKind::Access;
  if (s == "Encrypt") return OpKind::Encrypt;
  if (s == "Aggregate") return OpKind::Aggregate;
  if (s == "NoiseAdd") return OpKind::NoiseAdd;
  if (s == "Decrypt") return OpKind::Decrypt;
  if (s == "Calculate") return OpKind::Calculate;
  return std::nullopt;
}

// Position in the canonical pipeline; used by the stage-order checks.
inline int stage_index(OpKind k) { return static_cast<int>(k); }

struct DpParams {
  double epsilon = 1.0;
  double sensitivity = 1.0;
  bool operator==(const DpParams&) const = default;
};

struct Node {
  std::string id;
  OpKind kind = OpKind::Access;
  std::optional<Predicate> predicate;  // Access: client filter (TRUE when empty)
  std::vector<std::string> outputs;    // Access: value slots, sorted; "one" = constant 1
  std::string feature;                 // Encrypt: which Access slot to encrypt
  std::string agg_fn;                  // Aggregate: fold function ("sum")
  std::optional<DpParams> dp_params;   // NoiseAdd
  std::string calc_expr;               // Calculate

  bool operator==(const Node&) const = default;
};

inline bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  auto head = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  auto tail = [&](char c) { return head(c) || (c >= '0' && c <= '9'); };
  if (!head(s[0])) return false;
  return std::all_of(s.begin() + 1, s.end(), tail);
}

// Parameter well-formedness for a single node, independent of wiring.
// Stray fields are rejected too: a NoiseAdd carrying a calc_expr is a sign of
// a garbled document and should fail loudly here rather than downstream.
inline void validate_node_params(const Node& n) {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::MalformedParams, "node '" + n.id + "': " + msg);
  };
  if (!valid_identifier(n.id))
    throw Error(ErrorCode::MalformedParams,
                "node id '" + n.id + "' must match [A-Za-z_][A-Za-z0-9_]*");

  if (n.kind != OpKind::Access) {
    if (n.predicate.has_value()) fail("only Access nodes take a predicate");
    if (!n.outputs.empty()) fail("only Access nodes declare outputs");
  }
  if (n.kind != OpKind::Encrypt && !n.feature.empty()) fail("only Encrypt nodes take a feature");
  if (n.kind != OpKind::Aggregate && !n.agg_fn.empty()) fail("only Aggregate nodes take agg_fn");
  if (n.kind != OpKind::NoiseAdd && n.dp_params.has_value()) fail("only NoiseAdd nodes take dp_params");
  if (n.kind != OpKind::Calculate && !n.calc_expr.empty()) fail("only Calculate nodes take calc_expr");

  switch (n.kind) {
    case OpKind::Access: {
      if (n.outputs.empty()) fail("Access needs at least one output slot");
      if (!std::is_sorted(n.outputs.begin(), n.outputs.end())) fail("outputs must be sorted");
      if (std::adjacent_find(n.outputs.begin(), n.outputs.end()) != n.outputs.end())
        fail("outputs must be unique");
      for (auto& o : n.outputs)
        if (!valid_identifier(o)) fail("output slot '" + o + "' is not a valid identifier");
      break;
    }
    case OpKind::Encrypt:
      if (n.feature.empty()) fail("Encrypt needs the feature (slot) to encrypt");
      break;
    case OpKind::Aggregate:
      if (n.agg_fn != "sum") fail("agg_fn must be \"sum\"");
      break;
    case OpKind::NoiseAdd: {
      if (!n.dp_params) fail("NoiseAdd needs dp_params");
      if (!(n.dp_params->epsilon > 0)) fail("dp_params.epsilon must be > 0");
      if (!(n.dp_params->sensitivity > 0)) fail("dp_params.sensitivity must be > 0");
      break;
    }
    case OpKind::Decrypt:
      break;
    case OpKind::Calculate: {
      if (n.calc_expr.empty()) fail("Calculate needs calc_expr");
      try {
        parse_calc(n.calc_expr);
      } catch (const Error& e) {
        fail(std::string("calc_expr does not parse (") + e.what() + ")");
      }
      break;
    }
  }
}

// Content-only canonical key: two nodes with the same key perform the same
// operation regardless of their ids. Predicates compare in normalized form,
// expressions in canonical printed form.
inline std::string canonical_key(const Node& n) {
  std::string pred = n.predicate ? n.predicate->repr() : "";
  std::string dp;
  if (n.dp_params)
    dp = fmt_double(n.dp_params->epsilon) + "," + fmt_double(n.dp_params->sensitivity);
  std::string expr;
  if (!n.calc_expr.empty()) {
    try {
      expr = canonical_calc(n.calc_expr);
    } catch (const Error&) {
      expr = n.calc_expr;
    }
  }
  return std::string(to_string(n.kind)) + "|" + n.feature + "|" + pred + "|" +
         join(n.outputs, ",") + "|" + n.agg_fn + "|" + dp + "|" + expr;
}

class FaDag {
public:
  const std::map<std::string, Node>& nodes() const { return nodes_; }
  const std::set<std::pair<std::string, std::string>>& edges() const { return edges_; }
  const std::vector<std::string>& answer_nodes() const { return answer_nodes_; }

  bool empty() const { return nodes_.empty(); }
  bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }

  const Node& node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(ErrorCode::UnknownId, "no node '" + id + "'");
    return it->second;
  }

  // Mutable access for rewrites. Callers must not change the id.
  Node& mutable_node(const std::string& id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(ErrorCode::UnknownId, "no node '" + id + "'");
    return it->second;
  }

  void add_node(Node n) {
    validate_node_params(n);
    if (nodes_.count(n.id))
      throw Error(ErrorCode::DuplicateId, "node '" + n.id + "' already exists");
    nodes_.emplace(n.id, std::move(n));
  }

  void add_edge(const std::string& from, const std::string& to) {
    if (!has_node(from)) throw Error(ErrorCode::UnknownId, "edge source '" + from + "' not found");
    if (!has_node(to)) throw Error(ErrorCode::UnknownId, "edge target '" + to + "' not found");
    if (from == to)
      throw Error(ErrorCode::WouldCreateCycle, "self edge on '" + from + "'");
    if (has_path(to, from))
      throw Error(ErrorCode::WouldCreateCycle,
                  "edge " + from + " -> " + to + " would close a cycle");
    edges_.emplace(from, to);
  }

  void remove_edge(const std::string& from, const std::string& to) {
    edges_.erase({from, to});
  }

  // Removes the node, its incident edges and any answer registration.
  void remove_node(const std::string& id) {
    if (!nodes_.erase(id)) throw Error(ErrorCode::UnknownId, "no node '" + id + "'");
    for (auto it = edges_.begin(); it != edges_.end();) {
      if (it->first == id || it->second == id) it = edges_.erase(it);
      else ++it;
    }
    answer_nodes_.erase(std::remove(answer_nodes_.begin(), answer_nodes_.end(), id),
                        answer_nodes_.end());
  }

  void set_answer_nodes(std::vector<std::string> ids) {
    for (auto& id : ids)
      if (!has_node(id)) throw Error(ErrorCode::UnknownId, "answer node '" + id + "' not found");
    answer_nodes_ = std::move(ids);
  }

  std::vector<std::string> predecessors(const std::string& id) const {
    std::vector<std::string> out;
    for (auto& [f, t] : edges_)
      if (t == id) out.push_back(f);
    return out; // edge set is ordered, so this is sorted by construction
  }

  std::vector<std::string> successors(const std::string& id) const {
    std::vector<std::string> out;
    for (auto& [f, t] : edges_)
      if (f == id) out.push_back(t);
    return out;
  }

  bool has_path(const std::string& from, const std::string& to) const {
    if (from == to) return true;
    std::set<std::string> seen{from};
    std::vector<std::string> frontier{from};
    while (!frontier.empty()) {
      std::string cur = frontier.back();
      frontier.pop_back();
      for (auto& [f, t] : edges_) {
        if (f != cur || seen.count(t)) continue;
        if (t == to) return true;
        seen.insert(t);
        frontier.push_back(t);
      }
    }
    return false;
  }

  // Deterministic topological order: among ready nodes, smallest id first.
  std::vector<std::string> topo_order() const {
    std::map<std::string, size_t> indeg;
    for (auto& [id, n] : nodes_) indeg[id] = 0;
    for (auto& [f, t] : edges_) ++indeg[t];
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (auto& [id, d] : indeg)
      if (d == 0) ready.push(id);
    std::vector<std::string> order;
    order.reserve(nodes_.size());
    while (!ready.empty()) {
      std::string cur = ready.top();
      ready.pop();
      order.push_back(cur);
      for (auto& [f, t] : edges_)
        if (f == cur && --indeg[t] == 0) ready.push(t);
    }
    if (order.size() != nodes_.size())
      throw Error(ErrorCode::WouldCreateCycle, "graph contains a cycle");
    return order;
  }

  size_t count_kind(OpKind k) const {
    size_t c = 0;
    for (auto& [id, n] : nodes_)
      if (n.kind == k) ++c;
    return c;
  }

  bool operator==(const FaDag&) const = default;

private:
  std::map<std::string, Node> nodes_;
  std::set<std::pair<std::string, std::string>> edges_;
  std::vector<std::string> answer_nodes_;
};

} // namespace faforge
