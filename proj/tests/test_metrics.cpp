//===----------------------------------------------------------------------===//
// Metrics tests. Cost oracles are hand-derived from the 10-client fixture
// pool (3 professors, 2 phd, 2 postdocs, 3 masters; 5 cs / 3 ee / 2 math):
//
//   mean-difference query, naive:      acce (10+3+2)/10 = 1.5, enc/aggr 3.0
//   mean-difference query, rewritten:  partition covers each client once ->
//                                      acce 1.0, enc/aggr 2.0, cal 3 -> 6
//
//   4-entry corpus means  naive:     acce .85,  enc/aggr 1.225, cal 0.75
//                         rewritten: acce .675, enc/aggr 0.925, cal 1.75
//===----------------------------------------------------------------------===//

#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "faforge/metrics.hpp"
#include "helpers.hpp"

using namespace faforge;

namespace {

ClientPool university_pool() {
  static ClientPool pool =
      load_clients(FAFORGE_DATA_DIR "/pools/university_10.csv", fixtures::university_schema());
  return pool;
}

const char* kMeanDifferenceIr = R"({
  "subqueries": [
    {"intent": "Mean", "feature": "salary", "filter": true},
    {"intent": "Mean", "feature": "salary",
     "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "professor"}]}},
    {"intent": "Mean", "feature": "salary",
     "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}
  ],
  "final_combine": [{"op": "difference", "args": [1, 2]}]
})";

// four-entry corpus over the fixture pool; reference answers are direct
// arithmetic over the csv rows
const char* kCorpus = R"([
  {"id": "q1",
   "text": "How much higher is the average professor salary than the average phd salary?",
   "ir": {
     "subqueries": [
       {"intent": "Mean", "feature": "salary", "filter": true},
       {"intent": "Mean", "feature": "salary",
        "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "professor"}]}},
       {"intent": "Mean", "feature": "salary",
        "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}
     ],
     "final_combine": [{"op": "difference", "args": [1, 2]}]
   },
   "expected": {"sub0": 70600, "sub1": 150000, "sub2": 32500, "combine0": 117500}},
  {"id": "q2", "text": "How many phd students are there?",
   "ir": {"subqueries": [
     {"intent": "Count",
      "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}]},
   "expected": {"sub0": 2}},
  {"id": "q3", "text": "How many graduate students, and how many of them are phd students?",
   "ir": {"subqueries": [
     {"intent": "Count",
      "filter": {"atoms": [{"feature": "role", "op": "in", "value": ["masters", "phd"]}]}},
     {"intent": "Count",
      "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}]},
   "expected": {"sub0": 5, "sub1": 2}},
  {"id": "q4", "text": "How many people are in each department?",
   "ir": {"subqueries": [{"intent": "Count", "filter": true, "group_by": "dept"}]},
   "expected": {"sub0.cs": 5, "sub0.ee": 3, "sub0.math": 2}}
])";

} // namespace

TEST_CASE("unit chain costs one operation per client") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  FaDag dag = fine_plan(sub, default_templates(), sch);

  OpCounts c = count_ops(dag, university_pool());
  CHECK(c == OpCounts{1.0, 1.0, 1.0, 1, 1, 0});
}

TEST_CASE("per-client costs are pool-size invariant for all-match workflows") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Mean;
  sub.feature = "salary";
  FaDag dag = fine_plan(sub, default_templates(), sch);

  ClientPool small = load_clients_text(
      "role,dept,salary,hours\nphd,cs,10,1\nphd,cs,20,1\nphd,cs,30,1\n", sch);

  OpCounts big = count_ops(dag, university_pool());
  OpCounts little = count_ops(dag, small);
  CHECK(big == OpCounts{1.0, 2.0, 2.0, 2, 2, 1});
  CHECK(little == big);
}

TEST_CASE("rewriting the mean-difference query cuts client work") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();
  QueryIR ir = parse_ir(kMeanDifferenceIr, sch);
  PlannedQuery pq = plan(ir, sch, default_templates());

  OpCounts naive = count_ops(naive_union(pq.preliminaries).dag, pool);
  CHECK(naive == OpCounts{1.5, 3.0, 3.0, 6, 6, 3});

  OptimizeResult opt = optimize(pq.preliminaries, ir, sch);
  OpCounts optimized = count_ops(opt.dag, pool);
  CHECK(optimized == OpCounts{1.0, 2.0, 2.0, 6, 6, 6});
}

TEST_CASE("a disjoint partition touches each client exactly once") {
  Schema sch = fixtures::university_schema();
  QueryIR ir = parse_ir(kMeanDifferenceIr, sch);
  PlannedQuery pq = plan(ir, sch, default_templates());
  OptimizeResult opt = optimize(pq.preliminaries, ir, sch);
  CHECK(count_ops(opt.dag, university_pool()).acce == 1.0);
}

TEST_CASE("cost normalization rejects an empty pool") {
  Schema sch = fixtures::university_schema();
  SubQuery sub;
  sub.intent = Intent::Count;
  FaDag dag = fine_plan(sub, default_templates(), sch);
  ClientPool empty;
  empty.schema = sch;
  CHECK_THROWS_MATCHES(count_ops(dag, empty), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("empty-pool")));
}

TEST_CASE("the rewrite-free union keeps duplicate chains separate") {
  Schema sch = fixtures::university_schema();
  QueryIR ir = parse_ir(R"({
    "subqueries": [
      {"intent": "Count", "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}},
      {"intent": "Count", "filter": {"atoms": [{"feature": "role", "op": "eq", "value": "phd"}]}}
    ]
  })",
                        sch);
  PlannedQuery pq = plan(ir, sch, default_templates());
  NaiveUnion nu = naive_union(pq.preliminaries);

  CHECK(nu.dag.nodes().size() == 10); // two full copies of the same 5-node chain
  CHECK(nu.dag.has_node("s0_acc_role_eq_phd"));
  CHECK(nu.dag.has_node("s1_acc_role_eq_phd"));
  CHECK(nu.sub_answers ==
        std::vector<std::vector<std::string>>{{"s0_dec_one_role_eq_phd"},
                                              {"s1_dec_one_role_eq_phd"}});
  CHECK(check_structure(nu.dag).empty());

  // calc references are re-pointed at the prefixed ids
  QueryIR mean = parse_ir(
      R"({"subqueries": [{"intent": "Mean", "feature": "salary", "filter": true}]})", sch);
  NaiveUnion nm = naive_union(plan(mean, sch, default_templates()).preliminaries);
  CHECK(nm.dag.node("s0_cal_mean_salary_all").calc_expr ==
        "s0_dec_salary_all / s0_dec_one_all");
}

TEST_CASE("corpus files parse strictly") {
  std::vector<CorpusEntry> corpus = load_corpus_text(kCorpus);
  REQUIRE(corpus.size() == 4);
  CHECK(corpus[0].id == "q1");
  CHECK(corpus[0].text.find("professor") != std::string::npos);
  CHECK(corpus[0].expected.at("combine0") == 117500.0);
  CHECK(corpus[3].expected.at("sub0.cs") == 5.0);

  CHECK_THROWS_MATCHES(load_corpus_text("not json"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("parse-error")));
  CHECK_THROWS_MATCHES(load_corpus_text("[]"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("non-empty")));
  CHECK_THROWS_MATCHES(load_corpus_text(R"([{"id": "x"}])"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("needs 'id', 'text', and 'ir'")));
}

TEST_CASE("corpus runs complete and favor the rewriter on overlapping queries") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();
  std::vector<CorpusEntry> corpus = load_corpus_text(kCorpus);
  BackendFn backend = ir_backend(sch);

  CorpusRunConfig cfg;
  cfg.dataset = "university";
  CorpusReport on = run_corpus(corpus, backend, true, pool, cfg);
  CorpusReport off = run_corpus(corpus, backend, false, pool, cfg);

  REQUIRE(on.rows.size() == 1);
  REQUIRE(off.rows.size() == 1);
  const MethodRow& o = on.rows[0];
  const MethodRow& n = off.rows[0];
  CHECK(o.method == "optimized");
  CHECK(n.method == "naive");
  CHECK(o.completed == 4);
  CHECK(n.completed == 4);
  CHECK(o.ratio() == 1.0);
  CHECK(o.failures.empty());

  CHECK_THAT(n.means.acce, Catch::Matchers::WithinRel(0.85, 1e-12));
  CHECK_THAT(n.means.enc, Catch::Matchers::WithinRel(1.225, 1e-12));
  CHECK_THAT(n.means.aggr, Catch::Matchers::WithinRel(1.225, 1e-12));
  CHECK_THAT(n.means.cal, Catch::Matchers::WithinRel(0.75, 1e-12));
  CHECK_THAT(o.means.acce, Catch::Matchers::WithinRel(0.675, 1e-12));
  CHECK_THAT(o.means.enc, Catch::Matchers::WithinRel(0.925, 1e-12));
  CHECK_THAT(o.means.aggr, Catch::Matchers::WithinRel(0.925, 1e-12));
  CHECK_THAT(o.means.cal, Catch::Matchers::WithinRel(1.75, 1e-12));

  // the headline directional claims
  CHECK(o.means.acce < n.means.acce);
  CHECK(o.means.enc < n.means.enc);
  CHECK(o.means.aggr < n.means.aggr);
  CHECK(o.means.cal > n.means.cal);
}

TEST_CASE("failed queries count against completion without aborting the run") {
  Schema sch = fixtures::university_schema();
  ClientPool pool = university_pool();
  std::vector<CorpusEntry> corpus = load_corpus_text(kCorpus);

  CorpusEntry bad;
  bad.id = "q_bad";
  bad.text = "How many wizards are there?";
  bad.ir = nlohmann::json::parse(
      R"({"subqueries": [{"intent": "Count",
           "filter": {"atoms": [{"feature": "wizardry", "op": "eq", "value": "high"}]}}]})");
  corpus.push_back(bad);

  CorpusReport r = run_corpus(corpus, ir_backend(sch), true, pool);
  const MethodRow& row = r.rows[0];
  CHECK(row.total == 5);
  CHECK(row.completed == 4);
  REQUIRE(row.failures.size() == 1);
  CHECK(row.failures[0].find("q_bad") != std::string::npos);
  CHECK(row.failures[0].find("wizardry") != std::string::npos);
}

TEST_CASE("withholding the workflow templates fails every query") {
  Schema sch = fixtures::university_schema();
  std::vector<CorpusEntry> corpus = load_corpus_text(kCorpus);
  CorpusRunConfig cfg;
  cfg.templates = {};

  CorpusReport r = run_corpus(corpus, ir_backend(sch), true, university_pool(), cfg);
  CHECK(r.rows[0].completed == 0);
  CHECK(r.rows[0].ratio() == 0.0);
  CHECK(r.rows[0].means == OpCountMeans{}); // zeroed, rendered as "-"
  CHECK(r.rows[0].failures.size() == 4);
}

TEST_CASE("reports render deterministically in both formats") {
  CorpusReport report;
  report.dataset = "university";
  report.query_count = 4;
  MethodRow good{"optimized", 4, 4, {0.675, 0.925, 0.925, 3.0, 3.0, 1.75}, {}};
  MethodRow poor{"ablated", 4, 0, {}, {"q1: no-template: ..."}};
  report.rows = {good, poor};

  SECTION("markdown applies the low-completion dash convention") {
    std::string md = render_report(report, "markdown");
    CHECK(md.find("| Method | Ratio | Acce | Enc | Aggr | DP | Dec | Cal |") !=
          std::string::npos);
    CHECK(md.find("| optimized | 1.00 | 0.68 | 0.93 | 0.93 | 3.00 | 3.00 | 1.75 |") !=
          std::string::npos);
    CHECK(md.find("| ablated | 0.00 | - | - | - | - | - | - |") != std::string::npos);
    CHECK(md.find("Failures:") != std::string::npos);
    CHECK(render_report(report, "markdown") == md);
  }

  SECTION("csv roundtrips exactly") {
    std::string csv = render_report(report, "csv");
    CorpusReport back = parse_report_csv(csv);
    CHECK(back.dataset == report.dataset);
    CHECK(back.query_count == report.query_count);
    REQUIRE(back.rows.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
      CHECK(back.rows[i].method == report.rows[i].method);
      CHECK(back.rows[i].total == report.rows[i].total);
      CHECK(back.rows[i].completed == report.rows[i].completed);
      CHECK(back.rows[i].means == report.rows[i].means);
    }
    CHECK(render_report(back, "csv") == csv);
  }

  SECTION("unknown formats are rejected") {
    CHECK_THROWS_MATCHES(render_report(report, "xml"), Error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("unknown-format")));
  }

  SECTION("malformed csv is rejected") {
    CHECK_THROWS_AS(parse_report_csv("bogus\n"), Error);
    CHECK_THROWS_AS(parse_report_csv(render_report(report, "csv") + "a,b\n"), Error);
  }
}
