#pragma once
//===----------------------------------------------------------------------===//
// Model-assisted query translation. A chat-completion endpoint turns natural
// language into the structured query form; everything downstream (planning,
// rewriting, validation, execution) stays deterministic. Replies are treated
// as untrusted text: the JSON payload is extracted, validated against the
// schema, and the model is re-prompted with the violation message a bounded
// number of times before the query is declared unrepairable.
//
// The deterministic structured-form backend keeps the whole pipeline testable
// offline; model backends are optional at runtime.
//===----------------------------------------------------------------------===//

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "faforge/error.hpp"
#include "faforge/ir.hpp"
#include "faforge/planner.hpp"

namespace faforge {

// ---- Configuration -------------------------------------------------------------

struct LlmConfig {
  std::string base_url;            // e.g. "http://127.0.0.1:8080/v1"
  std::string model = "gpt-4";
  std::string api_key;             // see api_key_from_env
  double temperature = 0.0;        // deterministic decoding by default
  int timeout_seconds = 30;
  int max_retries = 2;             // repair re-prompts after the first attempt
};

inline std::string api_key_from_env() {
  const char* v = std::getenv("FA_FORGE_LLM_KEY");
  return v ? std::string(v) : std::string();
}

// ---- Transport -----------------------------------------------------------------

namespace detail {

// "http://host:1234/v1" -> {"http://host:1234", "/v1"}
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  size_t scheme = url.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::InvalidArgument,
                "endpoint URL must start with http:// or https://: '" + url + "'");
  size_t path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path), prefix};
}

} // namespace detail

// One blocking chat-completion round trip; returns the raw reply text.
inline std::string llm_complete(const std::string& prompt, const LlmConfig& cfg) {
  if (cfg.base_url.empty())
    throw Error(ErrorCode::BackendUnavailable,
                "no model endpoint configured (set --llm-url or use the structured backend)");
  auto [base, prefix] = detail::split_url(cfg.base_url);

  httplib::Client client(base);
  client.set_connection_timeout(cfg.timeout_seconds, 0);
  client.set_read_timeout(cfg.timeout_seconds, 0);
  client.set_write_timeout(cfg.timeout_seconds, 0);

  nlohmann::json req{
      {"model", cfg.model},
      {"temperature", cfg.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  httplib::Result res = client.Post(prefix + "/chat/completions", headers, req.dump(),
                                    "application/json");
  if (!res)
    throw Error(ErrorCode::BackendUnavailable,
                "cannot reach model endpoint '" + cfg.base_url +
                    "': " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::BackendUnavailable,
                "model endpoint returned HTTP " + std::to_string(res->status) +
                    (res->body.empty() ? "" : ": " + res->body.substr(0, 200)));
  try {
    nlohmann::json j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable,
                std::string("malformed completion response: ") + e.what());
  }
}

// ---- Reply handling --------------------------------------------------------------

// Pulls the first JSON object out of a model reply: a fenced code block if
// present, otherwise the first balanced brace run (string-literal aware).
inline std::string extract_json_block(const std::string& text) {
  size_t fence = text.find("```");
  size_t start = std::string::npos;
  size_t limit = text.size();
  if (fence != std::string::npos) {
    size_t open = text.find('{', fence);
    size_t close_fence = text.find("```", fence + 3);
    if (open != std::string::npos &&
        (close_fence == std::string::npos || open < close_fence)) {
      start = open;
      if (close_fence != std::string::npos) limit = close_fence;
    }
  }
  if (start == std::string::npos) start = text.find('{');
  if (start == std::string::npos)
    throw Error(ErrorCode::ParseError, "model reply contains no JSON object");

  int depth = 0;
  bool in_string = false, escaped = false;
  for (size_t i = start; i < limit; ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return text.substr(start, i - start + 1);
  }
  throw Error(ErrorCode::ParseError, "model reply contains an unterminated JSON object");
}

// Validates a model reply into the structured query form, re-prompting with
// the violation message up to max_retries times.
inline QueryIR repair_llm_output(
    const std::string& first_reply, const Schema& schema,
    const std::function<std::string(const std::string&)>& reprompt, int max_retries) {
  std::string reply = first_reply;
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0) reply = reprompt(last_error);
    try {
      return ir_from_json(nlohmann::json::parse(extract_json_block(reply)), schema);
    } catch (const Error& e) {
      last_error = e.what();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("invalid JSON: ") + e.what();
    }
  }
  throw Error(ErrorCode::Unrepairable,
              "model output failed validation after " + std::to_string(max_retries) +
                  " repair attempts (last problem: " + last_error + ")");
}

// ---- Prompts ---------------------------------------------------------------------

// Editable prompt texts with {{schema}}, {{query}}, {{templates}} placeholders.
struct PromptSet {
  std::string zero_shot;
  std::string one_shot;
  std::string hierarchical;
  std::string answerer;
};

namespace detail {

inline const char* kIrGrammar = R"(Reply with a single JSON object:
  {"subqueries": [...], "final_combine": [...]}
Each sub-query is {"intent": one of Count|Sum|Mean|Percentage|Ratio|Comparison,
"feature": string (required for Sum/Mean, optional for Comparison of means),
"filter": true or {"atoms": [{"feature": f, "op": one of eq|ne|gt|ge|lt|le|in,
"value": constant or list}]}, "condition": predicate (Percentage/Ratio numerators),
"group_by": categorical feature, "compare": [predicate, predicate] (Comparison sides)}.
"final_combine" is optional: [{"op": "difference"|"ratio", "args": [left, right]}]
with 0-based sub-query indices.)";

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return "";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace detail

inline std::string render_prompt(std::string tpl,
                                 const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string tag = "{{" + key + "}}";
    size_t pos = 0;
    while ((pos = tpl.find(tag, pos)) != std::string::npos) {
      tpl.replace(pos, tag.size(), value);
      pos += value.size();
    }
  }
  return tpl;
}

// One line per workflow template: what the model may assume exists.
inline std::string templates_summary(const std::vector<DagTemplate>& templates) {
  std::string out;
  for (const DagTemplate& t : templates) {
    out += "- " + std::string(to_string(t.intent)) +
           (t.requires_feature ? " over a numeric feature" : " over matching clients") + "\n";
  }
  return out;
}

inline PromptSet default_prompts() {
  PromptSet p;
  p.zero_shot = std::string(
                    "Translate the analytical question into the structured query form.\n\n"
                    "Data schema:\n{{schema}}\n\n") +
                detail::kIrGrammar +
                "\n\nQuestion: {{query}}\n\nJSON only, no commentary.";
  p.one_shot = std::string(
                   "Translate the analytical question into the structured query form.\n\n"
                   "Data schema:\n{{schema}}\n\n") +
               detail::kIrGrammar +
               "\n\nExample.\nQuestion: What is the average salary overall, and how much "
               "higher is it for professors than for phd students?\nAnswer:\n"
               "{\"subqueries\": ["
               "{\"intent\": \"Mean\", \"feature\": \"salary\", \"filter\": true}, "
               "{\"intent\": \"Mean\", \"feature\": \"salary\", \"filter\": {\"atoms\": "
               "[{\"feature\": \"role\", \"op\": \"eq\", \"value\": \"professor\"}]}}, "
               "{\"intent\": \"Mean\", \"feature\": \"salary\", \"filter\": {\"atoms\": "
               "[{\"feature\": \"role\", \"op\": \"eq\", \"value\": \"phd\"}]}}], "
               "\"final_combine\": [{\"op\": \"difference\", \"args\": [1, 2]}]}"
               "\n\nQuestion: {{query}}\n\nJSON only, no commentary.";
  p.hierarchical =
      std::string(
          "You decompose analytical questions for a privacy-preserving aggregation "
          "pipeline. Work in two steps, then output JSON.\n"
          "Step 1 - segmentation: split the question into single-intent parts, watching "
          "for connectives ('and', 'vs', 'compared to') and per-group phrasing "
          "('across', 'by', 'for each'). Each part must match one supported workflow "
          "shape:\n{{templates}}\n"
          "Step 2 - differences or ratios the question implies between parts go into "
          "final_combine instead of extra sub-queries.\n\n"
          "Data schema:\n{{schema}}\n\n") +
      detail::kIrGrammar + "\n\nQuestion: {{query}}\n\nJSON only, no commentary.";
  p.answerer =
      "Phrase the computed results as a direct answer to the question. Use every number "
      "verbatim as given; do not round or recompute.\n\nQuestion: {{query}}\n\n"
      "Results:\n{{results}}\n\nOne short paragraph.";
  return p;
}

// Loads prompt overrides from a directory (zero_shot.txt, one_shot.txt,
// hierarchical.txt, answerer.txt); files that are absent keep the defaults.
inline PromptSet load_prompts(const std::string& dir) {
  PromptSet p = default_prompts();
  if (std::string t = detail::read_text_file(dir + "/zero_shot.txt"); !t.empty()) p.zero_shot = t;
  if (std::string t = detail::read_text_file(dir + "/one_shot.txt"); !t.empty()) p.one_shot = t;
  if (std::string t = detail::read_text_file(dir + "/hierarchical.txt"); !t.empty())
    p.hierarchical = t;
  if (std::string t = detail::read_text_file(dir + "/answerer.txt"); !t.empty()) p.answerer = t;
  return p;
}

// ---- Backends --------------------------------------------------------------------

enum class PlanBackend { Ir, LlmZeroShot, LlmOneShot, LlmHierarchical };

inline PlanBackend backend_from_string(const std::string& s) {
  if (s == "ir") return PlanBackend::Ir;
  if (s == "llm-zero-shot") return PlanBackend::LlmZeroShot;
  if (s == "llm-one-shot") return PlanBackend::LlmOneShot;
  if (s == "llm-hierarchical") return PlanBackend::LlmHierarchical;
  throw Error(ErrorCode::InvalidArgument,
              "unknown backend '" + s +
                  "' (ir, llm-zero-shot, llm-one-shot, llm-hierarchical)");
}

// Turns a question into the structured query form. The "ir" backend expects
// `query` to BE the structured JSON; model backends prompt, extract, validate,
// and repair.
inline QueryIR coarse_decompose(const std::string& query, PlanBackend backend,
                                const Schema& schema, const LlmConfig& cfg = {},
                                const PromptSet& prompts = default_prompts(),
                                const std::vector<DagTemplate>& templates = default_templates()) {
  if (backend == PlanBackend::Ir) return parse_ir(query, schema);

  const std::string& tpl = backend == PlanBackend::LlmZeroShot  ? prompts.zero_shot
                           : backend == PlanBackend::LlmOneShot ? prompts.one_shot
                                                                : prompts.hierarchical;
  std::string prompt = render_prompt(tpl, {{"schema", schema.to_json().dump(2)},
                                           {"query", query},
                                           {"templates", templates_summary(templates)}});
  std::string conversation = prompt;
  std::string first = llm_complete(conversation, cfg);
  return repair_llm_output(
      first, schema,
      [&](const std::string& problem) {
        conversation += "\n\nYour previous reply was rejected: " + problem +
                        "\nReply again with corrected JSON only.";
        return llm_complete(conversation, cfg);
      },
      cfg.max_retries);
}

} // namespace faforge
