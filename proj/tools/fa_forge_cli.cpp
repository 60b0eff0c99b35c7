//===----------------------------------------------------------------------===//
// fa-forge: compiles analytical questions into privacy-preserving aggregation
// workflows and runs them against a simulated client pool.
//
//   gen-keys   create an encryption key pair (paillier or mock)
//   plan       question -> structured form -> per-sub-query workflow DAGs
//   optimize   plan, then rewrite into the merged/partitioned/augmented DAG
//   validate   structural (and, with --ir, completeness) checks on a DAG file
//   run        plan, optimize, execute; prose answer plus a JSON artifact
//   bench      run a query corpus and report completion + per-client op costs
//
// Exit codes: 0 success; 2 validation/planning/input failure; 3 model backend
// failure (unreachable endpoint, unrepairable output). Every command is
// deterministic for a fixed --seed; only the llm-* backends touch the network.
//===----------------------------------------------------------------------===//

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "faforge/faforge.hpp"

using namespace faforge;
using nlohmann::json;

namespace {

// ---- small IO helpers --------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << content;
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

Schema load_schema(const std::string& path) {
  return Schema::from_json(parse_json_text(read_file(path), "schema '" + path + "'"));
}

// stdout by default; a path writes the same bytes to the file instead
void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty())
    std::cout << content;
  else
    write_file(out_path, content);
}

// ---- shared options ------------------------------------------------------------

struct QueryOpts {
  std::string ir;      // structured form: inline JSON or a file path
  std::string nl;      // natural-language question (needs an llm-* backend)
  std::string schema_path;
  std::string backend = "ir";
  double epsilon = 1.0;

  // model endpoint settings, used only by llm-* backends
  std::string llm_url;
  std::string llm_model = "gpt-4";
  std::string llm_key;
  std::string prompts_dir;
  int llm_retries = 2;
};

void add_query_opts(CLI::App* cmd, QueryOpts& o, bool with_epsilon = true) {
  cmd->add_option("--ir", o.ir,
                  "structured query form: inline JSON ('{...}') or a file path");
  cmd->add_option("--nl", o.nl, "natural-language question (uses a model backend)");
  cmd->add_option("--schema", o.schema_path, "feature schema JSON file")->required();
  cmd->add_option("--backend", o.backend,
                  "ir | llm-zero-shot | llm-one-shot | llm-hierarchical");
  if (with_epsilon)
    cmd->add_option("--epsilon", o.epsilon, "privacy budget per noise site (default 1.0)");
  cmd->add_option("--llm-url", o.llm_url, "chat-completion endpoint, e.g. http://host:port/v1");
  cmd->add_option("--llm-model", o.llm_model, "model name sent to the endpoint");
  cmd->add_option("--llm-key", o.llm_key, "API key (defaults to $FA_FORGE_LLM_KEY)");
  cmd->add_option("--prompts", o.prompts_dir, "directory of prompt template overrides");
  cmd->add_option("--llm-retries", o.llm_retries, "repair re-prompts before giving up");
}

LlmConfig make_llm_config(const QueryOpts& o) {
  LlmConfig cfg;
  cfg.base_url = o.llm_url;
  cfg.model = o.llm_model;
  cfg.api_key = o.llm_key.empty() ? api_key_from_env() : o.llm_key;
  cfg.max_retries = o.llm_retries;
  if (cfg.base_url.empty())
    throw Error(ErrorCode::BackendUnavailable,
                "natural-language planning needs a model endpoint: pass --llm-url (plus an "
                "API key via FA_FORGE_LLM_KEY or --llm-key), or supply the structured form "
                "with --ir");
  if (cfg.api_key.empty())
    throw Error(ErrorCode::BackendUnavailable,
                "no API key for the model endpoint: set FA_FORGE_LLM_KEY or pass --llm-key");
  return cfg;
}

QueryIR obtain_ir(const QueryOpts& o, const Schema& schema) {
  if (o.ir.empty() == o.nl.empty())
    throw Error(ErrorCode::InvalidArgument, "pass exactly one of --ir or --nl");
  if (!o.ir.empty()) {
    size_t first = o.ir.find_first_not_of(" \t\r\n");
    std::string text = (first != std::string::npos && o.ir[first] == '{')
                           ? o.ir
                           : read_file(o.ir);
    return parse_ir(text, schema);
  }
  // prose input: default to the hierarchical model pipeline unless overridden
  std::string name = o.backend == "ir" ? "llm-hierarchical" : o.backend;
  PlanBackend backend = backend_from_string(name);
  LlmConfig cfg = make_llm_config(o);
  PromptSet prompts = o.prompts_dir.empty() ? default_prompts() : load_prompts(o.prompts_dir);
  return coarse_decompose(o.nl, backend, schema, cfg, prompts);
}

void print_violations(const std::vector<Violation>& violations) {
  for (const Violation& v : violations) std::cerr << "violation: " << v.message << "\n";
}

// ---- command bodies -------------------------------------------------------------

struct GenKeysOpts {
  std::string scheme = "paillier";
  unsigned bits = 256;
  uint64_t seed = 42;
  std::string out;
};

void cmd_gen_keys(const GenKeysOpts& o) {
  KeyPair keys;
  if (o.scheme == "mock") {
    keys = mock_keypair();
  } else if (o.scheme == "paillier") {
    std::mt19937_64 rng(o.seed);
    keys = keygen(o.bits, rng);
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown scheme '" + o.scheme + "' (paillier or mock)");
  }
  emit(o.out, keys_to_json(keys).dump(2) + "\n");
  std::cerr << "generated " << o.scheme << " keys (" << keys.pk.bits
            << " bits), fingerprint " << keys.pk.fingerprint << "\n";
}

void cmd_plan(const QueryOpts& o, const std::string& out_path) {
  Schema schema = load_schema(o.schema_path);
  QueryIR ir = obtain_ir(o, schema);
  PlannedQuery pq = plan(ir, schema, default_templates(), o.epsilon);

  // a directory target gets one file per artifact; otherwise one JSON document
  if (!out_path.empty() && std::filesystem::is_directory(out_path)) {
    write_file(out_path + "/ir.json", ir_to_json(ir).dump(2) + "\n");
    for (size_t i = 0; i < pq.preliminaries.size(); ++i)
      write_file(out_path + "/preliminary_" + std::to_string(i) + ".json",
                 encode_dag(pq.preliminaries[i]));
    std::cerr << "wrote ir.json and " << pq.preliminaries.size()
              << " preliminary DAG(s) to " << out_path << "\n";
    return;
  }
  json art{{"ir", ir_to_json(ir)}, {"preliminaries", json::array()}};
  for (const FaDag& d : pq.preliminaries) art["preliminaries"].push_back(dag_to_json(d));
  emit(out_path, art.dump(2) + "\n");
}

void cmd_optimize(const QueryOpts& o, bool explain, const std::string& out_path) {
  Schema schema = load_schema(o.schema_path);
  QueryIR ir = obtain_ir(o, schema);
  PlannedQuery pq = plan(ir, schema, default_templates(), o.epsilon);
  OptimizeResult opt = optimize(pq.preliminaries, ir, schema);

  std::vector<Violation> violations = check_dag(opt.dag, ir, schema);
  if (!violations.empty()) {
    print_violations(violations);
    throw Error(ErrorCode::SchemaViolation,
                "optimized workflow failed validation with " +
                    std::to_string(violations.size()) + " violation(s)");
  }

  json art{{"dag", dag_to_json(opt.dag)},
           {"sub_answers", opt.sub_answers},
           {"combine_answers", opt.combine_answers}};
  if (explain) art["trace"] = opt.trace.to_json();
  emit(out_path, art.dump(2) + "\n");
}

struct ValidateOpts {
  std::string dag_path;
  std::string ir;
  std::string schema_path;
};

void cmd_validate(const ValidateOpts& o) {
  FaDag dag = decode_dag(read_file(o.dag_path));
  std::vector<Violation> violations;
  if (!o.ir.empty()) {
    if (o.schema_path.empty())
      throw Error(ErrorCode::InvalidArgument, "--ir checks need --schema as well");
    Schema schema = load_schema(o.schema_path);
    size_t first = o.ir.find_first_not_of(" \t\r\n");
    std::string text = (first != std::string::npos && o.ir[first] == '{')
                           ? o.ir
                           : read_file(o.ir);
    violations = check_dag(dag, parse_ir(text, schema), schema);
  } else {
    violations = check_structure(dag);
  }

  json art = json::array();
  for (const Violation& v : violations) art.push_back(v.to_json());
  std::cout << art.dump(2) << "\n";
  if (!violations.empty()) {
    print_violations(violations);
    throw Error(ErrorCode::SchemaViolation,
                "workflow failed validation with " + std::to_string(violations.size()) +
                    " violation(s)");
  }
  std::cerr << "workflow is valid\n";
}

struct RunOpts {
  QueryOpts query;
  std::string data_path;
  std::string keys_path;
  std::string scheme = "mock";
  unsigned key_bits = 256;
  uint64_t seed = 1;
  bool noise = true;
  int64_t scale = 100;
  bool no_optimizer = false;
  bool explain = false;
  std::string format = "text";
  std::string out;
};

void cmd_run(const RunOpts& o) {
  Schema schema = load_schema(o.query.schema_path);
  ClientPool pool = load_clients(o.data_path, schema);
  QueryIR ir = obtain_ir(o.query, schema);

  KeyPair keys;
  if (!o.keys_path.empty()) {
    keys = load_keys(o.keys_path);
  } else if (o.scheme == "mock") {
    keys = mock_keypair();
  } else if (o.scheme == "paillier") {
    std::mt19937_64 rng(o.seed);
    keys = keygen(o.key_bits, rng);
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown scheme '" + o.scheme + "' (paillier or mock)");
  }

  PlannedQuery pq = plan(ir, schema, default_templates(), o.query.epsilon);

  FaDag dag;
  RewriteTrace trace;
  std::vector<std::vector<std::string>> sub_answers;
  std::vector<std::string> combine_answers; // empty when the optimizer is off
  if (o.no_optimizer) {
    for (size_t i = 0; i < pq.preliminaries.size(); ++i) {
      QueryIR one;
      one.subqueries = {ir.subqueries[i]};
      std::vector<Violation> v = check_dag(pq.preliminaries[i], one, schema);
      if (!v.empty()) {
        print_violations(v);
        throw Error(ErrorCode::SchemaViolation,
                    "preliminary workflow " + std::to_string(i) + " failed validation");
      }
    }
    NaiveUnion nu = naive_union(pq.preliminaries);
    dag = std::move(nu.dag);
    sub_answers = std::move(nu.sub_answers);
  } else {
    OptimizeResult opt = optimize(pq.preliminaries, ir, schema);
    std::vector<Violation> v = check_dag(opt.dag, ir, schema);
    if (!v.empty()) {
      print_violations(v);
      throw Error(ErrorCode::SchemaViolation, "optimized workflow failed validation");
    }
    dag = std::move(opt.dag);
    trace = std::move(opt.trace);
    sub_answers = std::move(opt.sub_answers);
    combine_answers = std::move(opt.combine_answers);
  }

  ExecutionResult res = execute_seeded(dag, pool, keys, o.seed, o.noise, o.scale);

  // answers by logical name ("sub0", "sub0.<label>", "combine0")
  std::map<std::string, Rational> logical;
  std::map<size_t, Rational> scalars;
  for (size_t i = 0; i < ir.subqueries.size(); ++i) {
    std::vector<std::string> labels = sub_answer_labels(ir.subqueries[i], schema);
    std::string base = "sub" + std::to_string(i);
    for (size_t k = 0; k < labels.size(); ++k) {
      const Rational& v = res.exact.at(sub_answers.at(i).at(k));
      logical.emplace(labels[k].empty() ? base : base + "." + labels[k], v);
      if (labels[k].empty()) scalars.emplace(i, v);
    }
  }
  if (o.no_optimizer) {
    for (auto& [name, v] : compose_answers(ir, scalars)) logical.emplace(name, v);
  } else {
    for (size_t j = 0; j < combine_answers.size(); ++j)
      logical.emplace("combine" + std::to_string(j), res.exact.at(combine_answers[j]));
  }

  std::string prose = format_answer(ir, logical);

  json art{{"answer", prose},
           {"answers", json::object()},
           {"answers_exact", json::object()},
           {"execution", res.to_json()}};
  for (const auto& [name, v] : logical) {
    art["answers"][name] = v.convert_to<double>();
    art["answers_exact"][name] = v.str();
  }
  if (o.explain && !o.no_optimizer) art["trace"] = trace.to_json();
  std::string artifact = art.dump(2) + "\n";

  if (o.format == "json") {
    std::cout << artifact;
  } else if (o.format == "text") {
    std::cout << prose << "\n";
    std::cout << "(epsilon spent: " << detail::answer_number(res.total_epsilon)
              << "; noise: " << (o.noise ? "on" : "off") << "; clients: "
              << pool.population() << "; seed: " << o.seed << ")\n";
    if (o.explain && !o.no_optimizer)
      std::cout << trace.to_json().dump(2) << "\n";
  } else {
    throw Error(ErrorCode::UnknownFormat,
                "unknown run format '" + o.format + "' (text or json)");
  }
  if (!o.out.empty()) write_file(o.out, artifact);
}

struct BenchOpts {
  QueryOpts query; // --schema/backend/llm flags; --ir/--nl unused here
  std::string corpus_path;
  std::string data_path;
  std::string method;
  std::string dataset = "corpus";
  bool no_optimizer = false;
  bool compare = false;
  bool no_templates = false;
  uint64_t seed = 1;
  int64_t scale = 100;
  std::string format = "markdown";
  std::string out;
};

void cmd_bench(const BenchOpts& o) {
  Schema schema = load_schema(o.query.schema_path);
  ClientPool pool = load_clients(o.data_path, schema);
  std::vector<CorpusEntry> corpus = load_corpus_text(read_file(o.corpus_path));

  BackendFn backend;
  if (o.query.backend == "ir") {
    backend = [schema](const CorpusEntry& e) { return ir_from_json(e.ir, schema); };
  } else {
    PlanBackend b = backend_from_string(o.query.backend);
    LlmConfig cfg = make_llm_config(o.query);
    PromptSet prompts =
        o.query.prompts_dir.empty() ? default_prompts() : load_prompts(o.query.prompts_dir);
    backend = [schema, b, cfg, prompts](const CorpusEntry& e) {
      return coarse_decompose(e.text, b, schema, cfg, prompts);
    };
  }

  CorpusRunConfig cfg;
  cfg.dataset = o.dataset;
  cfg.epsilon = o.query.epsilon;
  cfg.scale = o.scale;
  cfg.seed = o.seed;
  if (o.no_templates) {
    cfg.templates.clear();
    cfg.method = o.method.empty() ? "ablated" : o.method;
  } else {
    cfg.method = o.method;
  }

  CorpusReport report = run_corpus(corpus, backend, !o.no_optimizer, pool, cfg);
  if (o.compare) {
    CorpusRunConfig cfg2 = cfg;
    cfg2.method.clear(); // pick up the other mode's default label
    CorpusReport second = run_corpus(corpus, backend, o.no_optimizer, pool, cfg2);
    report.rows.push_back(std::move(second.rows.front()));
  }

  std::string rendered = render_report(report, o.format);
  std::cout << rendered;
  if (!o.out.empty()) write_file(o.out, rendered);
}

int guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const Error& e) {
    std::cerr << "fa-forge: " << e.what() << "\n";
    return (e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::Unrepairable)
               ? 3
               : 2;
  } catch (const std::exception& e) {
    std::cerr << "fa-forge: " << e.what() << "\n";
    return 2;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fa-forge: privacy-preserving analytics workflow compiler and simulator"};
  app.require_subcommand(1);
  int rc = 0;

  GenKeysOpts gk;
  CLI::App* gen_keys = app.add_subcommand("gen-keys", "create an encryption key pair");
  gen_keys->add_option("--scheme", gk.scheme, "paillier (default) or mock");
  gen_keys->add_option("--key-bits", gk.bits, "modulus size for paillier (default 256)");
  gen_keys->add_option("--seed", gk.seed, "key generation seed");
  gen_keys->add_option("--out", gk.out, "write keys JSON here instead of stdout");
  gen_keys->callback([&] { rc = guarded([&] { cmd_gen_keys(gk); }); });

  QueryOpts plan_q;
  std::string plan_out;
  CLI::App* plan_cmd = app.add_subcommand("plan", "plan per-sub-query workflow DAGs");
  add_query_opts(plan_cmd, plan_q);
  plan_cmd->add_option("--out", plan_out, "output file, or an existing directory for one file per artifact");
  plan_cmd->callback([&] { rc = guarded([&] { cmd_plan(plan_q, plan_out); }); });

  QueryOpts opt_q;
  std::string opt_out;
  bool opt_explain = false;
  CLI::App* opt_cmd = app.add_subcommand("optimize", "plan and rewrite into one workflow DAG");
  add_query_opts(opt_cmd, opt_q);
  opt_cmd->add_flag("--explain", opt_explain, "include the rewrite trace in the artifact");
  opt_cmd->add_option("--out", opt_out, "output file (default stdout)");
  opt_cmd->callback([&] { rc = guarded([&] { cmd_optimize(opt_q, opt_explain, opt_out); }); });

  ValidateOpts val;
  CLI::App* val_cmd = app.add_subcommand("validate", "check a workflow DAG file");
  val_cmd->add_option("--dag", val.dag_path, "workflow DAG JSON file")->required();
  val_cmd->add_option("--ir", val.ir, "structured query form for completeness checks");
  val_cmd->add_option("--schema", val.schema_path, "feature schema (needed with --ir)");
  val_cmd->callback([&] { rc = guarded([&] { cmd_validate(val); }); });

  RunOpts run;
  CLI::App* run_cmd = app.add_subcommand("run", "execute a query end to end");
  add_query_opts(run_cmd, run.query);
  run_cmd->add_option("--data", run.data_path, "client pool CSV")->required();
  run_cmd->add_option("--keys", run.keys_path, "key file from gen-keys (default: mock keys)");
  run_cmd->add_option("--scheme", run.scheme, "mock (default) or paillier, when no --keys");
  run_cmd->add_option("--key-bits", run.key_bits, "paillier modulus size (default 256)");
  run_cmd->add_option("--seed", run.seed, "seed for noise and encryption randomness");
  run_cmd->add_flag("--noise,!--no-noise", run.noise, "differential-privacy noise (default on)");
  run_cmd->add_option("--scale", run.scale, "fixed-point scale (default 100)");
  run_cmd->add_flag("--no-optimizer", run.no_optimizer, "execute the unmerged workflow union");
  run_cmd->add_flag("--explain", run.explain, "include the rewrite trace");
  run_cmd->add_option("--format", run.format, "stdout format: text (default) or json");
  run_cmd->add_option("--out", run.out, "also write the JSON artifact here");
  run_cmd->callback([&] { rc = guarded([&] { cmd_run(run); }); });

  BenchOpts bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "run a corpus and report costs");
  add_query_opts(bench_cmd, bench.query);
  bench_cmd->get_option("--ir")->description("(unused by bench)");
  bench_cmd->add_option("--corpus", bench.corpus_path, "corpus JSON file")->required();
  bench_cmd->add_option("--data", bench.data_path, "client pool CSV")->required();
  bench_cmd->add_option("--method", bench.method, "row label override");
  bench_cmd->add_option("--dataset", bench.dataset, "dataset label (default 'corpus')");
  bench_cmd->add_flag("--no-optimizer", bench.no_optimizer, "skip the workflow rewrites");
  bench_cmd->add_flag("--compare", bench.compare, "add a second row with the other mode");
  bench_cmd->add_flag("--no-templates", bench.no_templates,
                      "ablation: plan without workflow templates");
  bench_cmd->add_option("--seed", bench.seed, "execution seed");
  bench_cmd->add_option("--scale", bench.scale, "fixed-point scale (default 100)");
  bench_cmd->add_option("--format", bench.format, "markdown (default) or csv");
  bench_cmd->add_option("--out", bench.out, "also write the report here");
  bench_cmd->callback([&] { rc = guarded([&] { cmd_bench(bench); }); });

  CLI11_PARSE(app, argc, argv);
  return rc;
}
