#pragma once
//===----------------------------------------------------------------------===//
// Dataset schema: the set of client features a deployment exposes, each either
// categorical (closed value enumeration) or numeric (bounded range). The
// schema drives predicate checking, template instantiation, group expansion
// and the default DP sensitivity of each feature.
//===----------------------------------------------------------------------===//

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "faforge/error.hpp"

namespace faforge {

enum class FeatureType { Categorical, Numeric };

struct FeatureSpec {
  FeatureType type = FeatureType::Numeric;
  std::vector<std::string> values; // categorical: closed enumeration (sorted)
  double lo = 0.0;                 // numeric: inclusive bounds
  double hi = 0.0;
  double sensitivity = 1.0;        // DP sensitivity when summing this feature

  bool operator==(const FeatureSpec&) const = default;
};

// One client's row, schema-conformant: numeric cells as double, categorical
// as the enumeration string.
using FeatureValue = std::variant<double, std::string>;

struct ClientRecord {
  std::map<std::string, FeatureValue> values;
};

struct Schema {
  std::map<std::string, FeatureSpec> features;

  bool has(const std::string& name) const { return features.count(name) != 0; }

  const FeatureSpec& at(const std::string& name) const {
    auto it = features.find(name);
    if (it == features.end())
      throw Error(ErrorCode::UnknownFeature, "feature '" + name + "' is not in the schema");
    return it->second;
  }

  static Schema from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("features") || !j["features"].is_object())
      throw Error(ErrorCode::SchemaViolation, "schema document must be {\"features\": {...}}");
    Schema s;
    for (auto& [name, fj] : j["features"].items()) {
      if (!fj.is_object() || !fj.contains("type"))
        throw Error(ErrorCode::SchemaViolation, "feature '" + name + "' must carry a type");
      FeatureSpec spec;
      std::string type = fj["type"].get<std::string>();
      if (type == "categorical") {
        spec.type = FeatureType::Categorical;
        if (!fj.contains("values") || !fj["values"].is_array() || fj["values"].empty())
          throw Error(ErrorCode::SchemaViolation,
                      "categorical feature '" + name + "' needs a non-empty values list");
        for (auto& v : fj["values"]) spec.values.push_back(v.get<std::string>());
        std::sort(spec.values.begin(), spec.values.end());
        spec.values.erase(std::unique(spec.values.begin(), spec.values.end()), spec.values.end());
        spec.sensitivity = 1.0;
      } else if (type == "numeric") {
        spec.type = FeatureType::Numeric;
        if (!fj.contains("bounds") || !fj["bounds"].is_array() || fj["bounds"].size() != 2)
          throw Error(ErrorCode::SchemaViolation,
                      "numeric feature '" + name + "' needs bounds [lo, hi]");
        spec.lo = fj["bounds"][0].get<double>();
        spec.hi = fj["bounds"][1].get<double>();
        if (!(spec.lo <= spec.hi))
          throw Error(ErrorCode::SchemaViolation, "feature '" + name + "': bounds out of order");
        spec.sensitivity = std::max(std::abs(spec.lo), std::abs(spec.hi));
      } else {
        throw Error(ErrorCode::SchemaViolation,
                    "feature '" + name + "': unknown type '" + type + "'");
      }
      if (fj.contains("sensitivity")) spec.sensitivity = fj["sensitivity"].get<double>();
      s.features.emplace(name, std::move(spec));
    }
    if (s.features.empty())
      throw Error(ErrorCode::SchemaViolation, "schema has no features");
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json fj = nlohmann::json::object();
    for (auto& [name, spec] : features) {
      nlohmann::json f;
      if (spec.type == FeatureType::Categorical) {
        f["type"] = "categorical";
        f["values"] = spec.values;
      } else {
        f["type"] = "numeric";
        f["bounds"] = {spec.lo, spec.hi};
      }
      f["sensitivity"] = spec.sensitivity;
      fj[name] = f;
    }
    return nlohmann::json{{"features", fj}};
  }

  static Schema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open schema file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "schema '" + path + "': " + e.what());
    }
    return from_json(j);
  }

  bool operator==(const Schema&) const = default;
};

} // namespace faforge
