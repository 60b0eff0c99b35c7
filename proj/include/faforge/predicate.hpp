#pragma once
//===----------------------------------------------------------------------===//
// Client-side predicates: conjunctions of typed atoms over schema features.
// An empty conjunction is TRUE ("select every client").
//
// Two normal forms matter:
//  * normalized(): schema-free — atoms sorted and deduplicated. Used for
//    canonical node keys, so content equality is order-insensitive.
//  * canonical(pred, schema): schema-aware — the atoms constraining one
//    categorical feature collapse into the implied value set (eq / in / ne
//    all reduce to set intersection against the enumeration). Returns
//    nullopt when the conjunction is unsatisfiable. This is the form the
//    optimizer reasons over when it looks for partition structure.
//===----------------------------------------------------------------------===//

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "faforge/error.hpp"
#include "faforge/schema.hpp"
#include "faforge/util.hpp"

namespace faforge {

enum class Cmp { Eq, Ne, Lt, Le, Gt, Ge, In };

inline const char* to_string(Cmp op) {
  switch (op) {
    case Cmp::Eq: return "eq";
    case Cmp::Ne: return "ne";
    case Cmp::Lt: return "lt";
    case Cmp::Le: return "le";
    case Cmp::Gt: return "gt";
    case Cmp::Ge: return "ge";
    case Cmp::In: return "in";
  }
  return "?";
}

inline std::optional<Cmp> cmp_from_string(const std::string& s) {
  if (s == "eq") return Cmp::Eq;
  if (s == "ne") return Cmp::Ne;
  if (s == "lt") return Cmp::Lt;
  if (s == "le") return Cmp::Le;
  if (s == "gt") return Cmp::Gt;
  if (s == "ge") return Cmp::Ge;
  if (s == "in") return Cmp::In;
  return std::nullopt;
}

struct Atom {
  std::string feature;
  Cmp op = Cmp::Eq;
  // number (numeric features), category, or category set (op == In)
  std::variant<double, std::string, std::vector<std::string>> value;

  bool operator==(const Atom&) const = default;

  std::string repr() const {
    std::string v;
    if (std::holds_alternative<double>(value)) {
      v = fmt_double(std::get<double>(value));
    } else if (std::holds_alternative<std::string>(value)) {
      v = std::get<std::string>(value);
    } else {
      v = "{" + join(std::get<std::vector<std::string>>(value), ",") + "}";
    }
    return feature + " " + to_string(op) + " " + v;
  }
};

struct Predicate {
  std::vector<Atom> atoms; // conjunction; empty == TRUE

  static Predicate always() { return Predicate{}; }
  bool is_true() const { return atoms.empty(); }
  bool operator==(const Predicate&) const = default;

  // Sorted/deduplicated atom list; no schema knowledge involved.
  Predicate normalized() const {
    Predicate p = *this;
    std::sort(p.atoms.begin(), p.atoms.end(),
              [](const Atom& a, const Atom& b) { return a.repr() < b.repr(); });
    p.atoms.erase(std::unique(p.atoms.begin(), p.atoms.end()), p.atoms.end());
    return p;
  }

  std::string repr() const {
    Predicate p = normalized();
    if (p.atoms.empty()) return "true";
    std::vector<std::string> parts;
    for (auto& a : p.atoms) parts.push_back(a.repr());
    return join(parts, " && ");
  }

  bool matches(const ClientRecord& rec) const {
    for (const Atom& a : atoms) {
      auto it = rec.values.find(a.feature);
      if (it == rec.values.end())
        throw Error(ErrorCode::UnknownFeature,
                    "record has no value for feature '" + a.feature + "'");
      const FeatureValue& fv = it->second;
      bool ok = false;
      if (std::holds_alternative<std::vector<std::string>>(a.value)) {
        if (!std::holds_alternative<std::string>(fv))
          throw Error(ErrorCode::InvalidArgument,
                      "set predicate on non-categorical value for '" + a.feature + "'");
        const auto& set = std::get<std::vector<std::string>>(a.value);
        bool in = std::find(set.begin(), set.end(), std::get<std::string>(fv)) != set.end();
        ok = (a.op == Cmp::In) ? in : false;
      } else if (std::holds_alternative<std::string>(a.value)) {
        if (!std::holds_alternative<std::string>(fv))
          throw Error(ErrorCode::InvalidArgument,
                      "categorical predicate on numeric value for '" + a.feature + "'");
        const std::string& lhs = std::get<std::string>(fv);
        const std::string& rhs = std::get<std::string>(a.value);
        if (a.op == Cmp::Eq) ok = lhs == rhs;
        else if (a.op == Cmp::Ne) ok = lhs != rhs;
        else
          throw Error(ErrorCode::InvalidArgument,
                      "ordering comparison on categorical feature '" + a.feature + "'");
      } else {
        if (!std::holds_alternative<double>(fv))
          throw Error(ErrorCode::InvalidArgument,
                      "numeric predicate on categorical value for '" + a.feature + "'");
        double lhs = std::get<double>(fv);
        double rhs = std::get<double>(a.value);
        switch (a.op) {
          case Cmp::Eq: ok = lhs == rhs; break;
          case Cmp::Ne: ok = lhs != rhs; break;
          case Cmp::Lt: ok = lhs < rhs; break;
          case Cmp::Le: ok = lhs <= rhs; break;
          case Cmp::Gt: ok = lhs > rhs; break;
          case Cmp::Ge: ok = lhs >= rhs; break;
          case Cmp::In: ok = false; break;
        }
      }
      if (!ok) return false;
    }
    return true;
  }
};

// ---- JSON ------------------------------------------------------------------

inline nlohmann::json atom_to_json(const Atom& a) {
  nlohmann::json j;
  j["feature"] = a.feature;
  j["op"] = to_string(a.op);
  if (std::holds_alternative<double>(a.value)) j["value"] = std::get<double>(a.value);
  else if (std::holds_alternative<std::string>(a.value)) j["value"] = std::get<std::string>(a.value);
  else j["value"] = std::get<std::vector<std::string>>(a.value);
  return j;
}

inline Atom atom_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("feature") || !j.contains("op") || !j.contains("value"))
    throw Error(ErrorCode::SchemaViolation,
                where + ": atom must be {feature, op, value}");
  Atom a;
  a.feature = j["feature"].get<std::string>();
  auto op = cmp_from_string(j["op"].get<std::string>());
  if (!op)
    throw Error(ErrorCode::SchemaViolation,
                where + ": unknown comparison op '" + j["op"].get<std::string>() + "'");
  a.op = *op;
  const auto& v = j["value"];
  if (v.is_number()) a.value = v.get<double>();
  else if (v.is_string()) a.value = v.get<std::string>();
  else if (v.is_array()) {
    std::vector<std::string> set;
    for (auto& e : v) {
      if (!e.is_string())
        throw Error(ErrorCode::SchemaViolation, where + ": set values must be strings");
      set.push_back(e.get<std::string>());
    }
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    a.value = std::move(set);
  } else {
    throw Error(ErrorCode::SchemaViolation, where + ": atom value must be number, string or list");
  }
  return a;
}

inline nlohmann::json predicate_to_json(const Predicate& p) {
  nlohmann::json atoms = nlohmann::json::array();
  for (auto& a : p.atoms) atoms.push_back(atom_to_json(a));
  return nlohmann::json{{"atoms", atoms}};
}

// Accepts the object form {"atoms": [...]} or the literal `true`.
inline Predicate predicate_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_boolean()) {
    if (j.get<bool>()) return Predicate::always();
    throw Error(ErrorCode::SchemaViolation, where + ": literal false predicate is not allowed");
  }
  if (!j.is_object() || !j.contains("atoms") || !j["atoms"].is_array())
    throw Error(ErrorCode::SchemaViolation, where + ": predicate must be true or {\"atoms\": [...]}");
  Predicate p;
  size_t i = 0;
  for (auto& aj : j["atoms"])
    p.atoms.push_back(atom_from_json(aj, where + ".atoms[" + std::to_string(i++) + "]"));
  return p;
}

// ---- schema checks ----------------------------------------------------------

inline void validate_predicate(const Predicate& p, const Schema& schema) {
  for (const Atom& a : p.atoms) {
    const FeatureSpec& spec = schema.at(a.feature); // throws UnknownFeature
    if (spec.type == FeatureType::Categorical) {
      if (a.op != Cmp::Eq && a.op != Cmp::Ne && a.op != Cmp::In)
        throw Error(ErrorCode::SchemaViolation,
                    "categorical feature '" + a.feature + "' only supports eq/ne/in");
      std::vector<std::string> vals;
      if (std::holds_alternative<std::string>(a.value)) vals = {std::get<std::string>(a.value)};
      else if (std::holds_alternative<std::vector<std::string>>(a.value))
        vals = std::get<std::vector<std::string>>(a.value);
      else
        throw Error(ErrorCode::SchemaViolation,
                    "categorical feature '" + a.feature + "' compared against a number");
      if (a.op == Cmp::In && !std::holds_alternative<std::vector<std::string>>(a.value))
        throw Error(ErrorCode::SchemaViolation,
                    "'in' predicate on '" + a.feature + "' needs a value list");
      for (auto& v : vals)
        if (std::find(spec.values.begin(), spec.values.end(), v) == spec.values.end())
          throw Error(ErrorCode::SchemaViolation,
                      "'" + v + "' is not a value of feature '" + a.feature + "'");
    } else {
      if (!std::holds_alternative<double>(a.value))
        throw Error(ErrorCode::SchemaViolation,
                    "numeric feature '" + a.feature + "' compared against a non-number");
      if (a.op == Cmp::In)
        throw Error(ErrorCode::SchemaViolation,
                    "'in' predicates are only supported on categorical features ('" +
                        a.feature + "')");
    }
  }
}

// The value set a predicate allows for one categorical feature, starting from
// the feature's full enumeration and intersecting every atom on it.
inline std::vector<std::string> allowed_values(const Predicate& p, const std::string& feature,
                                               const Schema& schema) {
  const FeatureSpec& spec = schema.at(feature);
  if (spec.type != FeatureType::Categorical)
    throw Error(ErrorCode::InvalidArgument, "allowed_values needs a categorical feature");
  std::set<std::string> allowed(spec.values.begin(), spec.values.end());
  for (const Atom& a : p.atoms) {
    if (a.feature != feature) continue;
    if (a.op == Cmp::Eq) {
      const std::string& v = std::get<std::string>(a.value);
      if (allowed.count(v)) allowed = {v};
      else allowed.clear();
    } else if (a.op == Cmp::Ne) {
      allowed.erase(std::get<std::string>(a.value));
    } else if (a.op == Cmp::In) {
      std::set<std::string> next;
      for (auto& v : std::get<std::vector<std::string>>(a.value))
        if (allowed.count(v)) next.insert(v);
      allowed = std::move(next);
    }
  }
  return {allowed.begin(), allowed.end()};
}

// Schema-aware canonical form: categorical constraints collapse to value sets
// (no atom when unconstrained, eq for singletons, sorted in-sets otherwise);
// numeric atoms are kept verbatim; everything sorted. nullopt == unsatisfiable.
inline std::optional<Predicate> canonical(const Predicate& p, const Schema& schema) {
  Predicate out;
  std::set<std::string> cat_features;
  for (const Atom& a : p.atoms) {
    const FeatureSpec& spec = schema.at(a.feature);
    if (spec.type == FeatureType::Categorical) cat_features.insert(a.feature);
    else out.atoms.push_back(a);
  }
  for (const std::string& f : cat_features) {
    std::vector<std::string> allowed = allowed_values(p, f, schema);
    if (allowed.empty()) return std::nullopt;
    const FeatureSpec& spec = schema.at(f);
    if (allowed.size() == spec.values.size()) continue; // unconstrained
    Atom a;
    a.feature = f;
    if (allowed.size() == 1) {
      a.op = Cmp::Eq;
      a.value = allowed.front();
    } else {
      a.op = Cmp::In;
      a.value = allowed;
    }
    out.atoms.push_back(std::move(a));
  }
  return out.normalized();
}

// canonical(base AND feature IN subset); nullopt when that is unsatisfiable.
inline std::optional<Predicate> conjoin_categorical(const Predicate& base,
                                                    const std::string& feature,
                                                    std::vector<std::string> subset,
                                                    const Schema& schema) {
  Predicate p = base;
  std::sort(subset.begin(), subset.end());
  Atom a;
  a.feature = feature;
  a.op = Cmp::In;
  a.value = std::move(subset);
  p.atoms.push_back(std::move(a));
  return canonical(p, schema);
}

// Identifier-safe name fragment for node ids: "all" for TRUE, else the
// normalized atoms joined with "__".
inline std::string predicate_slug(const Predicate& p) {
  Predicate n = p.normalized();
  if (n.atoms.empty()) return "all";
  std::vector<std::string> parts;
  for (const Atom& a : n.atoms) {
    std::string v;
    if (std::holds_alternative<double>(a.value)) {
      v = fmt_double(std::get<double>(a.value));
      // keep sign and decimal point distinguishable after slugification
      for (char& c : v) {
        if (c == '-') c = 'm';
        else if (c == '.') c = 'p';
      }
    } else if (std::holds_alternative<std::string>(a.value)) {
      v = std::get<std::string>(a.value);
    } else {
      v = join(std::get<std::vector<std::string>>(a.value), "_");
    }
    parts.push_back(slugify(a.feature) + "_" + to_string(a.op) + "_" + slugify(v));
  }
  return join(parts, "__");
}

} // namespace faforge
