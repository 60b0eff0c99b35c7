//===----------------------------------------------------------------------===//
// Acceptance harness: eight end-to-end gates, one verdict line each.
//
//   1. homomorphic addition decrypts to the exact plaintext sum
//   2. the workflow validator catches every seeded mutation, no false alarms
//   3. optimized execution matches the plaintext oracle on the whole corpus
//   4. the ten-client cost fixture reproduces its exact per-client op counts
//   5. corpus-wide cost trend: rewrites cut heavy ops, add calculations,
//      and the deterministic pipeline completes every query
//   6. noise calibration: count-query noise matches the configured scale
//   7. the command-line binary is byte-deterministic under a fixed seed
//   8. re-running the rewrite stages is a fixpoint and outputs stay valid
//
// Exits with the number of failed gates (0 = all green).
//===----------------------------------------------------------------------===//

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "faforge/faforge.hpp"

using namespace faforge;
namespace fs = std::filesystem;

namespace {

const std::string kDataDir = FAFORGE_DATA_DIR;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Schema university_schema() {
  return Schema::from_json(nlohmann::json::parse(slurp(kDataDir + "/schemas/university.json")));
}

const char* kFig2Ir = R"({"subqueries": [
  {"intent": "Mean", "feature": "salary", "filter": true},
  {"intent": "Mean", "feature": "salary",
   "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "professor"}]}},
  {"intent": "Mean", "feature": "salary",
   "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}],
 "final_combine": [{"op": "difference", "args": [1, 2]}]})";

// Runs one gate, prints its verdict line, returns true on pass. The check
// returns an empty string for success or the failure reason.
bool gate(int index, const std::string& name, const std::function<std::string()>& check) {
  auto t0 = std::chrono::steady_clock::now();
  std::string reason;
  try {
    reason = check();
  } catch (const std::exception& e) {
    reason = e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (reason.empty()) {
    std::printf("[PASS] %d. %s (%.2fs)\n", index, name.c_str(), secs);
    return true;
  }
  std::printf("[FAIL] %d. %s: %s\n", index, name.c_str(), reason.c_str());
  return false;
}

// ---- gate 1: exact homomorphic addition ------------------------------------------

std::string check_additive_homomorphism() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20260818);
  int cases = 0;
  for (int k = 0; k < 25; ++k) {
    KeyPair kp = keygen(64, rng);
    for (int i = 0; i < 40; ++i) {
      // |a|,|b| <= 2^54, far inside the +-n/2 signed range of a 64-bit key
      int64_t a = static_cast<int64_t>(rng() >> 9) - (int64_t(1) << 54);
      int64_t b = static_cast<int64_t>(rng() >> 9) - (int64_t(1) << 54);
      Ciphertext sum = add_cipher(kp.pk, encrypt_signed(kp.pk, a, rng),
                                  encrypt_signed(kp.pk, b, rng));
      BigInt got = residue_to_signed(decrypt(kp, sum), kp.pk.n);
      if (got != BigInt(a) + BigInt(b))
        return "decrypted sum " + got.str() + " != " + std::to_string(a) + " + " +
               std::to_string(b);
      ++cases;
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (cases != 1000) return "expected 1000 cases, ran " + std::to_string(cases);
  if (secs >= 10.0) return "took " + std::to_string(secs) + "s, budget is 10s";
  return "";
}

// ---- gate 2: validator mutation suite ---------------------------------------------

// A fixture is a planner- or rewriter-produced DAG plus the query form it
// must satisfy; all fixtures must validate clean (no false alarms).
struct Fixture {
  std::string name;
  FaDag dag;
  QueryIR ir;
};

std::vector<Fixture> validator_fixtures(const Schema& schema) {
  const char* texts[] = {
      R"({"subqueries": [{"intent": "Count",
          "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}]})",
      R"({"subqueries": [{"intent": "Sum", "feature": "salary", "filter": true}]})",
      R"({"subqueries": [{"intent": "Mean", "feature": "salary",
          "filter": {"atoms": [{"feature": "dept", "op": "eq", "value": "cs"}]}}]})",
      R"({"subqueries": [{"intent": "Percentage", "filter": true,
          "condition": {"atoms": [{"feature": "hours", "op": "gt", "value": 40}]}}]})",
      R"({"subqueries": [{"intent": "Ratio", "filter": true,
          "condition": {"atoms": [{"feature": "role", "op": "eq", "value": "professor"}]}}]})",
      R"({"subqueries": [{"intent": "Comparison", "feature": "salary",
          "compare": [{"atoms": [{"feature": "role", "op": "eq", "value": "professor"}]},
                      {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}]}]})",
      R"({"subqueries": [{"intent": "Count", "filter": true, "group_by": "dept"}]})",
  };
  std::vector<Fixture> out;
  for (const char* text : texts) {
    QueryIR ir = parse_ir(text, schema);
    PlannedQuery pq = plan(ir, schema, default_templates(), 1.0);
    for (size_t i = 0; i < pq.preliminaries.size(); ++i) {
      QueryIR one;
      one.subqueries = {ir.subqueries[i]};
      out.push_back({std::string("planned:") + text, pq.preliminaries[i], one});
    }
  }
  // rewriter outputs are fixtures too
  QueryIR fig2 = parse_ir(kFig2Ir, schema);
  PlannedQuery pq = plan(fig2, schema, default_templates(), 1.0);
  out.push_back({"optimized:fig2", optimize(pq.preliminaries, fig2, schema).dag, fig2});
  return out;
}

// Applies one JSON-level mutation and reports whether ANY defense fired:
// decode rejection, structural violation, or query-completeness violation.
bool mutation_caught(const nlohmann::json& mutated, const QueryIR& ir, const Schema& schema) {
  try {
    FaDag d = decode_dag(mutated.dump());
    return !check_dag(d, ir, schema).empty();
  } catch (const std::exception&) {
    return true; // rejected at decode time
  }
}

std::string check_validator_mutations() {
  auto t0 = std::chrono::steady_clock::now();
  Schema schema = university_schema();
  std::mt19937_64 rng(7);
  int mutations = 0, caught = 0;

  for (const Fixture& fx : validator_fixtures(schema)) {
    std::vector<Violation> clean = check_dag(fx.dag, fx.ir, schema);
    if (!clean.empty())
      return "false alarm on " + fx.name + ": " + clean.front().message;

    nlohmann::json base = dag_to_json(fx.dag);

    // (a) reverse one random edge
    {
      nlohmann::json m = base;
      auto& edges = m.at("edges");
      size_t pick = rng() % edges.size();
      nlohmann::json e = edges.at(pick);
      edges.at(pick) = nlohmann::json::array({e.at(1), e.at(0)});
      ++mutations;
      caught += mutation_caught(m, fx.ir, schema) ? 1 : 0;
    }

    // (b) splice out one noise node (its producer feeds its consumer directly)
    {
      std::vector<std::string> dps;
      for (const auto& [id, n] : fx.dag.nodes())
        if (n.kind == OpKind::NoiseAdd) dps.push_back(id);
      std::string dp = dps.at(rng() % dps.size());
      std::string pred = fx.dag.predecessors(dp).front();
      std::string succ = fx.dag.successors(dp).front();
      nlohmann::json m = base;
      m.at("nodes").erase(dp);
      nlohmann::json kept = nlohmann::json::array();
      for (const auto& e : m.at("edges"))
        if (e.at(0) != dp && e.at(1) != dp) kept.push_back(e);
      kept.push_back(nlohmann::json::array({pred, succ}));
      m["edges"] = kept;
      ++mutations;
      caught += mutation_caught(m, fx.ir, schema) ? 1 : 0;
    }

    // (c) delete one answer-producing Calculate, where the DAG has one
    {
      std::vector<std::string> answer_cals;
      for (const std::string& id : fx.dag.answer_nodes())
        if (fx.dag.node(id).kind == OpKind::Calculate) answer_cals.push_back(id);
      if (!answer_cals.empty()) {
        std::string cal = answer_cals.at(rng() % answer_cals.size());
        nlohmann::json m = base;
        m.at("nodes").erase(cal);
        nlohmann::json kept = nlohmann::json::array();
        for (const auto& e : m.at("edges"))
          if (e.at(0) != cal && e.at(1) != cal) kept.push_back(e);
        m["edges"] = kept;
        nlohmann::json answers = nlohmann::json::array();
        for (const auto& a : m.at("answer_nodes"))
          if (a != cal) answers.push_back(a);
        m["answer_nodes"] = answers;
        ++mutations;
        caught += mutation_caught(m, fx.ir, schema) ? 1 : 0;
      }
    }

    // (d) relabel one random node with an unknown operation kind
    {
      nlohmann::json m = base;
      auto& nodes = m.at("nodes");
      size_t pick = rng() % nodes.size();
      size_t i = 0;
      for (auto& [id, n] : nodes.items()) {
        if (i++ == pick) {
          n["kind"] = "Transmogrify";
          break;
        }
      }
      ++mutations;
      caught += mutation_caught(m, fx.ir, schema) ? 1 : 0;
    }
  }

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (mutations < 20)
    return "only " + std::to_string(mutations) + " mutations generated, need at least 20";
  if (caught != mutations)
    return std::to_string(mutations - caught) + " of " + std::to_string(mutations) +
           " mutations slipped through";
  if (secs >= 5.0) return "took " + std::to_string(secs) + "s, budget is 5s";
  return "";
}

// ---- gates 3 and 5: corpus equivalence and cost trend ------------------------------

struct CorpusSetup {
  Schema schema;
  ClientPool pool;
  std::vector<CorpusEntry> corpus;
  BackendFn backend;
};

CorpusSetup corpus_setup() {
  CorpusSetup s{Schema::from_json(
                    nlohmann::json::parse(slurp(kDataDir + "/schemas/adultpii.json"))),
                {}, {}, {}};
  s.pool = load_clients(kDataDir + "/pools/adultpii_1000.csv", s.schema);
  s.corpus = load_corpus_text(slurp(kDataDir + "/corpus/adultpii_20.json"));
  Schema schema = s.schema;
  s.backend = [schema](const CorpusEntry& e) { return ir_from_json(e.ir, schema); };
  return s;
}

std::string check_oracle_equivalence() {
  auto t0 = std::chrono::steady_clock::now();
  CorpusSetup s = corpus_setup();
  if (s.corpus.size() != 20)
    return "expected 20 bundled queries, found " + std::to_string(s.corpus.size());
  if (s.pool.population() != 1000)
    return "expected a 1000-client pool, found " + std::to_string(s.pool.population());

  CorpusReport rep = run_corpus(s.corpus, s.backend, /*use_optimizer=*/true, s.pool);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const MethodRow& row = rep.rows.front();
  if (row.completed != row.total || !row.failures.empty())
    return "only " + std::to_string(row.completed) + "/" + std::to_string(row.total) +
           " queries matched the oracle; first failure: " + row.failures.front();
  if (secs >= 60.0) return "took " + std::to_string(secs) + "s, budget is 60s";
  return "";
}

std::string check_cost_trend() {
  CorpusSetup s = corpus_setup();
  CorpusReport on = run_corpus(s.corpus, s.backend, true, s.pool);
  CorpusReport off = run_corpus(s.corpus, s.backend, false, s.pool);
  const MethodRow& o = on.rows.front();
  const MethodRow& n = off.rows.front();

  if (o.ratio() != 1.0)
    return "optimized completion ratio is " + std::to_string(o.ratio()) + ", want exactly 1";
  if (n.ratio() != 1.0)
    return "baseline completion ratio is " + std::to_string(n.ratio()) + ", want exactly 1";
  char buf[160];
  if (!(o.means.acce < n.means.acce)) {
    std::snprintf(buf, sizeof(buf), "accesses not reduced: %.4f vs %.4f", o.means.acce,
                  n.means.acce);
    return buf;
  }
  if (!(o.means.enc < n.means.enc)) {
    std::snprintf(buf, sizeof(buf), "encryptions not reduced: %.4f vs %.4f", o.means.enc,
                  n.means.enc);
    return buf;
  }
  if (!(o.means.aggr < n.means.aggr)) {
    std::snprintf(buf, sizeof(buf), "aggregations not reduced: %.4f vs %.4f", o.means.aggr,
                  n.means.aggr);
    return buf;
  }
  if (!(o.means.cal > n.means.cal)) {
    std::snprintf(buf, sizeof(buf), "calculations not increased: %.4f vs %.4f", o.means.cal,
                  n.means.cal);
    return buf;
  }
  return "";
}

// ---- gate 4: exact desk-scale cost fixture ----------------------------------------

std::string check_cost_fixture() {
  Schema schema = university_schema();
  ClientPool pool = load_clients(kDataDir + "/pools/university_10.csv", schema);
  QueryIR ir = parse_ir(kFig2Ir, schema);
  PlannedQuery pq = plan(ir, schema, default_templates(), 1.0);

  OpCounts naive = count_ops(naive_union(pq.preliminaries).dag, pool);
  OpCounts merged = count_ops(optimize(pq.preliminaries, ir, schema).dag, pool);

  char buf[256];
  if (naive.acce != 1.5 || naive.enc != 3.0 || naive.aggr != 3.0 || naive.cal != 3) {
    std::snprintf(buf, sizeof(buf),
                  "baseline counts drifted: acce %.2f enc %.2f aggr %.2f cal %zu "
                  "(want 1.50 3.00 3.00 3)",
                  naive.acce, naive.enc, naive.aggr, naive.cal);
    return buf;
  }
  if (merged.acce != 1.0 || merged.enc != 2.0 || merged.aggr != 2.0 || merged.cal != 6) {
    std::snprintf(buf, sizeof(buf),
                  "optimized counts drifted: acce %.2f enc %.2f aggr %.2f cal %zu "
                  "(want 1.00 2.00 2.00 6)",
                  merged.acce, merged.enc, merged.aggr, merged.cal);
    return buf;
  }
  return "";
}

// ---- gate 6: noise calibration -----------------------------------------------------

std::string check_noise_calibration() {
  Schema schema = university_schema();
  ClientPool pool = load_clients(kDataDir + "/pools/university_10.csv", schema);
  QueryIR ir = parse_ir(R"({"subqueries": [{"intent": "Count", "filter": true}]})", schema);
  PlannedQuery pq = plan(ir, schema, default_templates(), /*epsilon=*/1.0);
  OptimizeResult opt = optimize(pq.preliminaries, ir, schema);
  const std::string answer = opt.sub_answers.at(0).at(0);
  KeyPair keys = mock_keypair();

  const double oracle = 10.0; // population of the ten-client pool
  const int runs = 1000;
  double sum = 0.0, sum_sq = 0.0;
  for (int seed = 1; seed <= runs; ++seed) {
    ExecutionResult res = execute_seeded(opt.dag, pool, keys, seed, /*noise=*/true, 100);
    double err = res.answers.at(answer) - oracle;
    sum += err;
    sum_sq += err * err;
  }
  double mean = sum / runs;
  double stddev = std::sqrt(sum_sq / runs - mean * mean);
  const double target = std::sqrt(2.0); // Laplace std at unit budget and unit sensitivity

  char buf[160];
  if (std::abs(mean) >= 0.1) {
    std::snprintf(buf, sizeof(buf), "noise is biased: mean error %.4f, want |mean| < 0.1",
                  mean);
    return buf;
  }
  if (std::abs(stddev - target) >= 0.05 * target) {
    std::snprintf(buf, sizeof(buf), "noise scale off: std %.5f vs target %.5f (%.1f%%)",
                  stddev, target, 100.0 * std::abs(stddev - target) / target);
    return buf;
  }
  return "";
}

// ---- gate 7: binary determinism ----------------------------------------------------

int run_binary(const std::string& args) {
  int status = std::system((std::string(FAFORGE_CLI_PATH) + " " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string check_binary_determinism() {
  fs::path dir = fs::temp_directory_path() /
                 ("faforge_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::string d = dir.string();
  std::ofstream(d + "/query.json") << kFig2Ir;

  std::string run_args = "run --ir " + d + "/query.json --schema " + kDataDir +
                         "/schemas/university.json --data " + kDataDir +
                         "/pools/university_10.csv --noise --seed 42 >/dev/null 2>&1 --out ";
  if (run_binary(run_args + d + "/r1.json") != 0) return "first run invocation failed";
  if (run_binary(run_args + d + "/r2.json") != 0) return "second run invocation failed";
  if (slurp(d + "/r1.json") != slurp(d + "/r2.json"))
    return "run artifacts differ between identically seeded invocations";

  std::string bench_args = "bench --corpus " + kDataDir + "/corpus/adultpii_20.json" +
                           " --schema " + kDataDir + "/schemas/adultpii.json --data " +
                           kDataDir + "/pools/adultpii_1000.csv --compare --seed 4 " +
                           "--format csv >/dev/null 2>&1 --out ";
  if (run_binary(bench_args + d + "/b1.csv") != 0) return "first bench invocation failed";
  if (run_binary(bench_args + d + "/b2.csv") != 0) return "second bench invocation failed";
  if (slurp(d + "/b1.csv") != slurp(d + "/b2.csv"))
    return "bench artifacts differ between identically seeded invocations";
  return "";
}

// ---- gate 8: rewrite fixpoint and output validity ----------------------------------

std::string check_rewrite_fixpoint() {
  CorpusSetup s = corpus_setup();
  for (const CorpusEntry& entry : s.corpus) {
    QueryIR ir = s.backend(entry);
    PlannedQuery pq = plan(ir, s.schema, default_templates(), 1.0);
    OptimizeResult opt = optimize(pq.preliminaries, ir, s.schema);

    std::vector<Violation> v = check_structure(opt.dag);
    if (!v.empty())
      return entry.id + ": optimizer output is structurally invalid: " + v.front().message;

    std::string once = encode_dag(opt.dag);
    FaDag again = merge_common({opt.dag});
    again = partition_predicates(std::move(again), ir, s.schema);
    again = augment_implied(std::move(again), ir, opt.sub_answers);
    if (encode_dag(again) != once)
      return entry.id + ": re-running the rewrite stages changed the workflow";
  }
  return "";
}

} // namespace

int main() {
  std::printf("acceptance: privacy-preserving analytics pipeline\n");
  int failed = 0;
  failed += gate(1, "homomorphic addition is exact over 1000 seeded cases",
                 check_additive_homomorphism)
                ? 0
                : 1;
  failed += gate(2, "validator catches every seeded workflow mutation",
                 check_validator_mutations)
                ? 0
                : 1;
  failed += gate(3, "optimized corpus execution matches the plaintext oracle exactly",
                 check_oracle_equivalence)
                ? 0
                : 1;
  failed += gate(4, "ten-client fixture reproduces exact per-client op costs",
                 check_cost_fixture)
                ? 0
                : 1;
  failed += gate(5, "corpus trend: fewer heavy ops, more calculations, full completion",
                 check_cost_trend)
                ? 0
                : 1;
  failed += gate(6, "count-query noise matches the configured scale", check_noise_calibration)
                ? 0
                : 1;
  failed += gate(7, "command-line artifacts are byte-deterministic under a fixed seed",
                 check_binary_determinism)
                ? 0
                : 1;
  failed += gate(8, "re-optimization is a fixpoint and outputs validate clean",
                 check_rewrite_fixpoint)
                ? 0
                : 1;
  if (failed == 0)
    std::printf("all 8 gates passed\n");
  else
    std::printf("%d gate(s) failed\n", failed);
  return failed;
}
