#pragma once
//===----------------------------------------------------------------------===//
// Cost metrics and corpus benchmarking. A workflow's cost is measured the way
// the fleet feels it: Access/Encrypt/Aggregate are per-client averages over
// the pool (what one device does, amortized), while NoiseAdd/Decrypt/Calculate
// are server-side node counts. run_corpus drives query sets end-to-end —
// translate, plan, optionally rewrite, validate, execute noise-free, compare
// against the plaintext oracle — and aggregates Table-style method rows.
//===----------------------------------------------------------------------===//

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faforge/engine.hpp"
#include "faforge/error.hpp"
#include "faforge/optimizer.hpp"
#include "faforge/planner.hpp"
#include "faforge/validate.hpp"

namespace faforge {

// ---- Operation counts ----------------------------------------------------------

struct OpCounts {
  double acce = 0.0; // data accesses per client
  double enc = 0.0;  // encryptions per client
  double aggr = 0.0; // aggregation contributions per client
  size_t dp = 0;     // noise nodes
  size_t dec = 0;    // decrypt nodes
  size_t cal = 0;    // calculation nodes

  bool operator==(const OpCounts&) const = default;
};

inline OpCounts count_ops(const FaDag& dag, const ClientPool& pool) {
  if (pool.records.empty())
    throw Error(ErrorCode::EmptyPool, "cannot normalize costs over an empty pool");
  size_t acce_total = 0, enc_total = 0, aggr_total = 0;
  OpCounts c;
  for (const auto& [id, node] : dag.nodes()) {
    switch (node.kind) {
      case OpKind::Access: {
        size_t m = matching_clients(pool, *node.predicate);
        acce_total += m;
        enc_total += m * node.outputs.size();
        break;
      }
      case OpKind::Aggregate: {
        // contributing clients = matches of the access feeding this fold
        std::string enc_id = dag.predecessors(id).front();
        std::string acc_id = dag.predecessors(enc_id).front();
        aggr_total += matching_clients(pool, *dag.node(acc_id).predicate);
        break;
      }
      case OpKind::NoiseAdd: ++c.dp; break;
      case OpKind::Decrypt: ++c.dec; break;
      case OpKind::Calculate: ++c.cal; break;
      default: break;
    }
  }
  const double n = static_cast<double>(pool.records.size());
  c.acce = static_cast<double>(acce_total) / n;
  c.enc = static_cast<double>(enc_total) / n;
  c.aggr = static_cast<double>(aggr_total) / n;
  return c;
}

// ---- Naive (rewrite-free) union -------------------------------------------------

// Side-by-side union of per-sub-query workflows with nothing shared: every
// node id gains a per-sub prefix so identical chains stay duplicated. This is
// the cost baseline the rewriter is measured against, and the execution plan
// when rewriting is disabled.
struct NaiveUnion {
  FaDag dag;
  std::vector<std::vector<std::string>> sub_answers; // prefixed, per sub-query
};

inline NaiveUnion naive_union(const std::vector<FaDag>& dags) {
  NaiveUnion out;
  std::vector<std::string> answers;
  for (size_t i = 0; i < dags.size(); ++i) {
    std::map<std::string, std::string> ren;
    for (const auto& [id, n] : dags[i].nodes()) ren[id] = "s" + std::to_string(i) + "_" + id;
    for (const auto& [id, n] : dags[i].nodes()) {
      Node copy = n;
      copy.id = ren.at(id);
      if (copy.kind == OpKind::Calculate)
        copy.calc_expr = print_calc(rewrite_calc_refs(parse_calc(copy.calc_expr), ren));
      out.dag.add_node(copy);
    }
    for (const auto& [a, b] : dags[i].edges()) out.dag.add_edge(ren.at(a), ren.at(b));
    std::vector<std::string> mine;
    for (const std::string& a : dags[i].answer_nodes()) mine.push_back(ren.at(a));
    answers.insert(answers.end(), mine.begin(), mine.end());
    out.sub_answers.push_back(std::move(mine));
  }
  out.dag.set_answer_nodes(answers);
  return out;
}

// ---- Corpus ----------------------------------------------------------------------

struct CorpusEntry {
  std::string id;
  std::string text;          // natural-language phrasing
  nlohmann::json ir;         // structured form, parsed against the run's schema
  std::map<std::string, double> expected; // optional reference answers by logical name
};

inline std::vector<CorpusEntry> load_corpus_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("corpus is not valid JSON: ") + e.what());
  }
  if (!j.is_array() || j.empty())
    throw Error(ErrorCode::SchemaViolation, "corpus must be a non-empty JSON array");
  std::vector<CorpusEntry> out;
  for (const auto& ej : j) {
    if (!ej.is_object() || !ej.contains("id") || !ej.contains("text") || !ej.contains("ir"))
      throw Error(ErrorCode::SchemaViolation,
                  "corpus entry " + std::to_string(out.size()) +
                      " needs 'id', 'text', and 'ir' fields");
    CorpusEntry e;
    e.id = ej.at("id").get<std::string>();
    e.text = ej.at("text").get<std::string>();
    e.ir = ej.at("ir");
    if (ej.contains("expected"))
      for (const auto& [name, v] : ej.at("expected").items())
        e.expected.emplace(name, v.get<double>());
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<CorpusEntry> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open corpus '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_corpus_text(ss.str());
}

// Translates one corpus entry into the structured query form; throwing marks
// the entry as failed for completion accounting.
using BackendFn = std::function<QueryIR(const CorpusEntry&)>;

// The deterministic backend: takes the entry's bundled structured form as-is.
inline BackendFn ir_backend(const Schema& schema) {
  return [schema](const CorpusEntry& e) { return ir_from_json(e.ir, schema); };
}

// ---- Reports ---------------------------------------------------------------------

struct OpCountMeans {
  double acce = 0, enc = 0, aggr = 0, dp = 0, dec = 0, cal = 0;
  bool operator==(const OpCountMeans&) const = default;
};

struct MethodRow {
  std::string method;
  size_t total = 0;
  size_t completed = 0;
  OpCountMeans means; // over completed queries; zeroed when ratio() < 0.5
  std::vector<std::string> failures;

  double ratio() const { return total == 0 ? 0.0 : static_cast<double>(completed) / total; }
};

struct CorpusReport {
  std::string dataset;
  size_t query_count = 0;
  std::vector<MethodRow> rows;
};

struct CorpusRunConfig {
  std::string method;                                    // row label; defaulted per mode
  std::string dataset = "corpus";
  std::vector<DagTemplate> templates = default_templates();
  double epsilon = 1.0;
  int64_t scale = 100;
  uint64_t seed = 1;
};

namespace detail {

inline bool close_to(double got, double want) {
  return std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want));
}

} // namespace detail

// Runs every corpus entry end-to-end: translate, plan, optionally rewrite,
// validate, execute without noise, and compare exactly against the plaintext
// oracle (plus any bundled reference answers). Failures of any stage count
// against the completion ratio; op-count means cover completed entries only.
inline CorpusReport run_corpus(const std::vector<CorpusEntry>& corpus, const BackendFn& backend,
                               bool use_optimizer, const ClientPool& pool,
                               CorpusRunConfig cfg = {}) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyInput, "corpus has no queries");
  if (cfg.method.empty()) cfg.method = use_optimizer ? "optimized" : "naive";
  const KeyPair keys = mock_keypair(); // values are scheme-independent; noise stays off

  MethodRow row;
  row.method = cfg.method;
  row.total = corpus.size();
  double acce = 0, enc = 0, aggr = 0, dp = 0, dec = 0, cal = 0;

  for (const CorpusEntry& entry : corpus) {
    try {
      QueryIR ir = backend(entry);
      PlannedQuery pq = plan(ir, pool.schema, cfg.templates, cfg.epsilon);

      FaDag dag;
      std::vector<std::vector<std::string>> sub_answers;
      std::vector<std::string> combine_answers; // empty on the naive path
      if (use_optimizer) {
        OptimizeResult opt = optimize(pq.preliminaries, ir, pool.schema);
        std::vector<Violation> v = check_dag(opt.dag, ir, pool.schema);
        if (!v.empty())
          throw Error(ErrorCode::InvalidArgument, "validation failed: " + v.front().message);
        dag = std::move(opt.dag);
        sub_answers = std::move(opt.sub_answers);
        combine_answers = std::move(opt.combine_answers);
      } else {
        for (size_t i = 0; i < pq.preliminaries.size(); ++i) {
          QueryIR one;
          one.subqueries = {ir.subqueries[i]};
          std::vector<Violation> v = check_dag(pq.preliminaries[i], one, pool.schema);
          if (!v.empty())
            throw Error(ErrorCode::InvalidArgument,
                        "validation failed for sub-query " + std::to_string(i) + ": " +
                            v.front().message);
        }
        NaiveUnion nu = naive_union(pq.preliminaries);
        dag = std::move(nu.dag);
        sub_answers = std::move(nu.sub_answers);
      }

      ExecutionResult res = execute_seeded(dag, pool, keys, cfg.seed, false, cfg.scale);

      // answers by logical name, for oracle and reference comparison
      std::map<std::string, Rational> got;
      std::map<size_t, Rational> scalars;
      for (size_t i = 0; i < ir.subqueries.size(); ++i) {
        std::vector<std::string> labels = sub_answer_labels(ir.subqueries[i], pool.schema);
        std::string base = "sub" + std::to_string(i);
        for (size_t k = 0; k < labels.size(); ++k) {
          const Rational& v = res.exact.at(sub_answers.at(i).at(k));
          got.emplace(labels[k].empty() ? base : base + "." + labels[k], v);
          if (labels[k].empty()) scalars.emplace(i, v);
        }
      }
      if (use_optimizer) {
        for (size_t j = 0; j < combine_answers.size(); ++j)
          got.emplace("combine" + std::to_string(j), res.exact.at(combine_answers[j]));
      } else {
        for (auto& [name, v] : compose_answers(ir, scalars)) got.emplace(name, v);
      }

      std::map<std::string, Rational> oracle = plaintext_oracle(ir, pool, cfg.scale);
      for (const auto& [name, want] : oracle) {
        auto it = got.find(name);
        if (it == got.end() || it->second != want)
          throw Error(ErrorCode::InvalidArgument,
                      "pipeline answer for '" + name + "' disagrees with the plaintext oracle");
      }
      for (const auto& [name, want] : entry.expected) {
        auto it = got.find(name);
        if (it == got.end() ||
            !detail::close_to(it->second.convert_to<double>(), want))
          throw Error(ErrorCode::InvalidArgument,
                      "answer for '" + name + "' disagrees with the bundled reference value");
      }

      OpCounts c = count_ops(dag, pool);
      acce += c.acce;
      enc += c.enc;
      aggr += c.aggr;
      dp += static_cast<double>(c.dp);
      dec += static_cast<double>(c.dec);
      cal += static_cast<double>(c.cal);
      ++row.completed;
    } catch (const std::exception& e) {
      row.failures.push_back(entry.id + ": " + e.what());
    }
  }

  if (row.completed > 0 && row.ratio() >= 0.5) {
    const double n = static_cast<double>(row.completed);
    row.means = {acce / n, enc / n, aggr / n, dp / n, dec / n, cal / n};
  }
  CorpusReport report;
  report.dataset = cfg.dataset;
  report.query_count = corpus.size();
  report.rows.push_back(std::move(row));
  return report;
}

// ---- Rendering -------------------------------------------------------------------

namespace detail {

// Shortest decimal text that parses back to exactly the same double.
inline std::string shortest_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

} // namespace detail

// Renders a report. Column order is fixed; methods completing under half the
// corpus show "-" in the op columns (their means are not meaningful).
inline std::string render_report(const CorpusReport& report, const std::string& format) {
  auto op_cells = [](const MethodRow& row, auto fmt) {
    std::vector<std::string> cells;
    if (row.ratio() < 0.5) {
      cells.assign(6, "-");
    } else {
      for (double v : {row.means.acce, row.means.enc, row.means.aggr, row.means.dp,
                       row.means.dec, row.means.cal})
        cells.push_back(fmt(v));
    }
    return cells;
  };

  if (format == "markdown") {
    std::string out = "# " + report.dataset + " (" + std::to_string(report.query_count) +
                      " queries)\n\n"
                      "| Method | Ratio | Acce | Enc | Aggr | DP | Dec | Cal |\n"
                      "|---|---|---|---|---|---|---|---|\n";
    for (const MethodRow& row : report.rows) {
      out += "| " + row.method + " | " + detail::fixed2(row.ratio());
      for (const std::string& c : op_cells(row, detail::fixed2)) out += " | " + c;
      out += " |\n";
    }
    bool any_failures = false;
    for (const MethodRow& row : report.rows)
      for (const std::string& f : row.failures) {
        if (!any_failures) out += "\nFailures:\n";
        any_failures = true;
        out += "- " + row.method + ": " + f + "\n";
      }
    return out;
  }

  if (format == "csv") {
    std::string out = "dataset,queries,method,total,completed,ratio,acce,enc,aggr,dp,dec,cal\n";
    for (const MethodRow& row : report.rows) {
      out += report.dataset + "," + std::to_string(report.query_count) + "," + row.method + "," +
             std::to_string(row.total) + "," + std::to_string(row.completed) + "," +
             detail::shortest_double(row.ratio());
      for (const std::string& c : op_cells(row, detail::shortest_double)) out += "," + c;
      out += "\n";
    }
    return out;
  }

  throw Error(ErrorCode::UnknownFormat,
              "unknown report format '" + format + "' (markdown or csv)");
}

// Reparses a csv rendering back into a report (failure details are a
// presentation-only field and come back empty).
inline CorpusReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "dataset,queries,method,total,completed,ratio,acce,enc,aggr,dp,dec,cal")
    throw Error(ErrorCode::ParseError, "report csv header is missing or unrecognized");

  CorpusReport report;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != 12)
      throw Error(ErrorCode::ParseError, "report csv row has " + std::to_string(cells.size()) +
                                             " cells, expected 12");
    auto num = [&](const std::string& cell, const char* what) -> double {
      if (cell == "-") return 0.0;
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size())
        throw Error(ErrorCode::ParseError,
                    std::string("report csv ") + what + " '" + cell + "' is not a number");
      return v;
    };
    report.dataset = cells[0];
    report.query_count = static_cast<size_t>(num(cells[1], "query count"));
    MethodRow row;
    row.method = cells[2];
    row.total = static_cast<size_t>(num(cells[3], "total"));
    row.completed = static_cast<size_t>(num(cells[4], "completed"));
    num(cells[5], "ratio"); // carried for the fixed column order; derived from the counts
    row.means = {num(cells[6], "acce"), num(cells[7], "enc"),  num(cells[8], "aggr"),
                 num(cells[9], "dp"),   num(cells[10], "dec"), num(cells[11], "cal")};
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty())
    throw Error(ErrorCode::ParseError, "report csv has no data rows");
  return report;
}

} // namespace faforge
