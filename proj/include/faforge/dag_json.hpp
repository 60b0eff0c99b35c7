#pragma once
//===----------------------------------------------------------------------===//
// Wire format for workflow DAGs.
//
//   {
//     "answer_nodes": ["cal_1"],
//     "edges": [["acc_1", "enc_1"], ...],
//     "nodes": { "acc_1": {"kind": "Access", "outputs": ["salary"],
//                          "predicate": {"atoms": [...]}}, ... }
//   }
//
// Deterministic by construction: object keys sort (std::map-backed json),
// edge lists sort, Access outputs sort, absent optional fields are omitted,
// 2-space indentation. decode(encode(d)) is structurally equal to d.
//===----------------------------------------------------------------------===//

#include <string>

#include <nlohmann/json.hpp>

#include "faforge/dag.hpp"

namespace faforge {

inline nlohmann::json node_to_json(const Node& n) {
  nlohmann::json j;
  j["kind"] = to_string(n.kind);
  switch (n.kind) {
    case OpKind::Access:
      j["outputs"] = n.outputs;
      if (n.predicate && !n.predicate->is_true()) j["predicate"] = predicate_to_json(*n.predicate);
      break;
    case OpKind::Encrypt:
      j["feature"] = n.feature;
      break;
    case OpKind::Aggregate:
      j["agg_fn"] = n.agg_fn;
      break;
    case OpKind::NoiseAdd:
      j["dp_params"] = {{"epsilon", n.dp_params->epsilon},
                        {"sensitivity", n.dp_params->sensitivity}};
      break;
    case OpKind::Decrypt:
      break;
    case OpKind::Calculate:
      j["calc_expr"] = n.calc_expr;
      break;
  }
  return j;
}

inline nlohmann::json dag_to_json(const FaDag& d) {
  nlohmann::json nodes = nlohmann::json::object();
  for (auto& [id, n] : d.nodes()) nodes[id] = node_to_json(n);
  nlohmann::json edges = nlohmann::json::array();
  for (auto& [f, t] : d.edges()) edges.push_back({f, t});
  return nlohmann::json{
      {"answer_nodes", d.answer_nodes()}, {"edges", edges}, {"nodes", nodes}};
}

inline std::string encode_dag(const FaDag& d) { return dag_to_json(d).dump(2) + "\n"; }

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number())
    throw Error(ErrorCode::SchemaViolation, path + " must be a number");
  return j.get<double>();
}

inline Node node_from_json(const std::string& id, const nlohmann::json& j) {
  const std::string path = "nodes." + id;
  if (!j.is_object())
    throw Error(ErrorCode::SchemaViolation, path + " must be an object");
  if (!j.contains("kind") || !j["kind"].is_string())
    throw Error(ErrorCode::SchemaViolation, path + ".kind is required");
  auto kind = opkind_from_string(j["kind"].get<std::string>());
  if (!kind)
    throw Error(ErrorCode::SchemaViolation,
                path + ".kind: unknown kind '" + j["kind"].get<std::string>() + "'");

  Node n;
  n.id = id;
  n.kind = *kind;

  static const std::map<OpKind, std::set<std::string>> allowed = {
      {OpKind::Access, {"kind", "outputs", "predicate"}},
      {OpKind::Encrypt, {"kind", "feature"}},
      {OpKind::Aggregate, {"kind", "agg_fn"}},
      {OpKind::NoiseAdd, {"kind", "dp_params"}},
      {OpKind::Decrypt, {"kind"}},
      {OpKind::Calculate, {"kind", "calc_expr"}},
  };
  for (auto& [key, val] : j.items())
    if (!allowed.at(*kind).count(key))
      throw Error(ErrorCode::SchemaViolation,
                  path + "." + key + ": field not allowed on " + to_string(*kind));

  switch (*kind) {
    case OpKind::Access: {
      if (!j.contains("outputs") || !j["outputs"].is_array())
        throw Error(ErrorCode::SchemaViolation, path + ".outputs is required");
      for (auto& o : j["outputs"]) {
        if (!o.is_string())
          throw Error(ErrorCode::SchemaViolation, path + ".outputs must hold strings");
        n.outputs.push_back(o.get<std::string>());
      }
      std::sort(n.outputs.begin(), n.outputs.end());
      n.outputs.erase(std::unique(n.outputs.begin(), n.outputs.end()), n.outputs.end());
      n.predicate = j.contains("predicate")
                        ? predicate_from_json(j["predicate"], path + ".predicate")
                        : Predicate::always();
      break;
    }
    case OpKind::Encrypt:
      if (!j.contains("feature") || !j["feature"].is_string())
        throw Error(ErrorCode::SchemaViolation, path + ".feature is required");
      n.feature = j["feature"].get<std::string>();
      break;
    case OpKind::Aggregate:
      n.agg_fn = j.contains("agg_fn") ? j["agg_fn"].get<std::string>() : "sum";
      break;
    case OpKind::NoiseAdd: {
      if (!j.contains("dp_params") || !j["dp_params"].is_object())
        throw Error(ErrorCode::SchemaViolation, path + ".dp_params is required");
      const auto& dp = j["dp_params"];
      DpParams params;
      if (!dp.contains("epsilon"))
        throw Error(ErrorCode::SchemaViolation, path + ".dp_params.epsilon is required");
      params.epsilon = require_number(dp["epsilon"], path + ".dp_params.epsilon");
      if (!dp.contains("sensitivity"))
        throw Error(ErrorCode::SchemaViolation, path + ".dp_params.sensitivity is required");
      params.sensitivity = require_number(dp["sensitivity"], path + ".dp_params.sensitivity");
      for (auto& [key, val] : dp.items())
        if (key != "epsilon" && key != "sensitivity")
          throw Error(ErrorCode::SchemaViolation, path + ".dp_params." + key + ": unknown field");
      n.dp_params = params;
      break;
    }
    case OpKind::Decrypt:
      break;
    case OpKind::Calculate:
      if (!j.contains("calc_expr") || !j["calc_expr"].is_string())
        throw Error(ErrorCode::SchemaViolation, path + ".calc_expr is required");
      n.calc_expr = j["calc_expr"].get<std::string>();
      break;
  }
  return n;
}

} // namespace detail

inline FaDag json_to_dag(const nlohmann::json& j) {
  if (!j.is_object())
    throw Error(ErrorCode::SchemaViolation, "document root must be an object");
  for (auto& [key, val] : j.items())
    if (key != "nodes" && key != "edges" && key != "answer_nodes")
      throw Error(ErrorCode::SchemaViolation, "unknown top-level field '" + key + "'");
  for (const char* req : {"nodes", "edges", "answer_nodes"})
    if (!j.contains(req))
      throw Error(ErrorCode::SchemaViolation, std::string("missing '") + req + "'");
  if (!j["nodes"].is_object())
    throw Error(ErrorCode::SchemaViolation, "'nodes' must be an object keyed by node id");
  if (!j["edges"].is_array())
    throw Error(ErrorCode::SchemaViolation, "'edges' must be an array of [from, to] pairs");
  if (!j["answer_nodes"].is_array())
    throw Error(ErrorCode::SchemaViolation, "'answer_nodes' must be an array of node ids");

  FaDag d;
  for (auto& [id, nj] : j["nodes"].items()) {
    Node n = detail::node_from_json(id, nj);
    try {
      d.add_node(std::move(n));
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaViolation, "nodes." + id + ": " + e.what());
    }
  }
  size_t i = 0;
  for (auto& ej : j["edges"]) {
    std::string where = "edges[" + std::to_string(i++) + "]";
    if (!ej.is_array() || ej.size() != 2 || !ej[0].is_string() || !ej[1].is_string())
      throw Error(ErrorCode::SchemaViolation, where + " must be [\"from\", \"to\"]");
    try {
      d.add_edge(ej[0].get<std::string>(), ej[1].get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaViolation, where + ": " + e.what());
    }
  }
  std::vector<std::string> answers;
  std::set<std::string> seen;
  i = 0;
  for (auto& aj : j["answer_nodes"]) {
    std::string where = "answer_nodes[" + std::to_string(i++) + "]";
    if (!aj.is_string())
      throw Error(ErrorCode::SchemaViolation, where + " must be a node id string");
    std::string id = aj.get<std::string>();
    if (!seen.insert(id).second)
      throw Error(ErrorCode::SchemaViolation, where + ": duplicate answer node '" + id + "'");
    answers.push_back(id);
  }
  try {
    d.set_answer_nodes(std::move(answers));
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("answer_nodes: ") + e.what());
  }
  return d;
}

inline FaDag decode_dag(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return json_to_dag(j);
}

} // namespace faforge
