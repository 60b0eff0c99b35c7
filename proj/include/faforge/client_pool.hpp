#pragma once
//===----------------------------------------------------------------------===//
// Client pool: the simulated fleet of devices. Each row of the CSV is one
// client's local record; ingestion is strict so that every simulation result
// is backed by schema-conformant data (numeric cells must parse completely,
// categorical cells must be members of the declared enumeration).
//===----------------------------------------------------------------------===//

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "faforge/error.hpp"
#include "faforge/predicate.hpp"
#include "faforge/schema.hpp"

namespace faforge {

struct ClientPool {
  Schema schema;
  std::vector<ClientRecord> records;

  size_t population() const { return records.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

} // namespace detail

inline ClientPool load_clients_text(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::EmptyPool, "client data has no header row");
  std::vector<std::string> header = detail::split_csv_line(line);

  // map feature -> column index; every schema feature must be present
  std::map<std::string, size_t> column;
  for (size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);
  for (auto& [name, spec] : schema.features)
    if (!column.count(name))
      throw Error(ErrorCode::MissingColumn, "data is missing column '" + name + "'");

  ClientPool pool;
  pool.schema = schema;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::CoercionError,
                  "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    ClientRecord rec;
    for (auto& [name, spec] : schema.features) {
      const std::string& cell = cells[column[name]];
      if (spec.type == FeatureType::Numeric) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
          throw Error(ErrorCode::CoercionError,
                      "row " + std::to_string(row) + ", column '" + name + "': '" + cell +
                          "' is not a number");
        rec.values[name] = v;
      } else {
        if (std::find(spec.values.begin(), spec.values.end(), cell) == spec.values.end())
          throw Error(ErrorCode::CoercionError,
                      "row " + std::to_string(row) + ", column '" + name + "': '" + cell +
                          "' is not a value of '" + name + "'");
        rec.values[name] = cell;
      }
    }
    pool.records.push_back(std::move(rec));
  }
  if (pool.records.empty())
    throw Error(ErrorCode::EmptyPool, "client data has no rows");
  return pool;
}

inline ClientPool load_clients(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open client data '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_clients_text(ss.str(), schema);
}

inline size_t matching_clients(const ClientPool& pool, const Predicate& pred) {
  size_t c = 0;
  for (auto& rec : pool.records)
    if (pred.matches(rec)) ++c;
  return c;
}

} // namespace faforge
