#pragma once
//===----------------------------------------------------------------------===//
// Presentation layer: turns executed results into prose. Sentences come from
// fixed templates keyed by query intent, so the wording is deterministic and
// every number is the exact execution result — shares are scaled to percent
// at formatting time, never earlier.
//===----------------------------------------------------------------------===//

#include <charconv>
#include <map>
#include <string>
#include <vector>

#include "faforge/calc.hpp"
#include "faforge/ir.hpp"

namespace faforge {
namespace detail {

inline std::string answer_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string answer_number(const Rational& v) {
  return answer_number(v.convert_to<double>());
}

inline std::string clients_phrase(const Predicate& p) {
  return p.is_true() ? "all clients" : "clients where " + p.repr();
}

} // namespace detail

// Renders one sentence per sub-query result plus one per combination.
// `answers` is keyed by logical name: "sub<i>", "sub<i>.<label>" (grouped),
// "combine<j>". Values are exact; shares print as percentages.
inline std::string format_answer(const QueryIR& ir,
                                 const std::map<std::string, Rational>& answers) {
  std::vector<std::string> lines;

  for (size_t i = 0; i < ir.subqueries.size(); ++i) {
    const SubQuery& sub = ir.subqueries[i];
    const std::string base = "sub" + std::to_string(i);

    // Gather this sub-query's values: either one scalar or one per group label.
    std::vector<std::pair<std::string, Rational>> values; // label ("" = scalar) -> value
    if (auto it = answers.find(base); it != answers.end()) {
      values.emplace_back("", it->second);
    } else {
      for (auto it = answers.lower_bound(base + "."); it != answers.end(); ++it) {
        if (it->first.rfind(base + ".", 0) != 0) break;
        values.emplace_back(it->first.substr(base.size() + 1), it->second);
      }
    }
    if (values.empty()) {
      lines.push_back("Result " + std::to_string(i + 1) + ": unavailable.");
      continue;
    }

    const bool percent = sub.intent == Intent::Percentage;
    auto render = [&](const Rational& v) {
      return percent ? detail::answer_number(v * 100) + "%" : detail::answer_number(v);
    };

    std::string sentence;
    switch (sub.intent) {
      case Intent::Count:
        sentence = "the number of " + detail::clients_phrase(sub.filter);
        break;
      case Intent::Sum:
        sentence = "the total " + sub.feature + " over " + detail::clients_phrase(sub.filter);
        break;
      case Intent::Mean:
        sentence = "the average " + sub.feature + " over " + detail::clients_phrase(sub.filter);
        break;
      case Intent::Percentage:
        sentence = "the share of " + detail::clients_phrase(sub.filter) + " with " +
                   sub.condition->repr();
        break;
      case Intent::Ratio:
        sentence = "the fraction of " + detail::clients_phrase(sub.filter) + " with " +
                   sub.condition->repr();
        break;
      case Intent::Comparison:
        sentence = (sub.feature.empty() ? "the difference in client count between "
                                        : "the difference in average " + sub.feature +
                                              " between ") +
                   detail::clients_phrase(sub.compare->first) + " and " +
                   detail::clients_phrase(sub.compare->second);
        break;
    }

    std::string line = "Result " + std::to_string(i + 1) + ": " + sentence;
    if (values.size() == 1 && values.front().first.empty()) {
      line += " is " + render(values.front().second) + ".";
    } else {
      line += ", by " + *sub.group_by + ":";
      for (size_t k = 0; k < values.size(); ++k)
        line += (k ? "; " : " ") + values[k].first + " = " + render(values[k].second);
      line += ".";
    }
    lines.push_back(std::move(line));
  }

  for (size_t j = 0; j < ir.final_combine.size(); ++j) {
    const CombineExpr& c = ir.final_combine[j];
    std::string line;
    if (auto it = answers.find("combine" + std::to_string(j)); it != answers.end()) {
      line = (c.op == CombineOp::Difference ? "The difference between result "
                                            : "The ratio of result ") +
             std::to_string(c.left + 1) +
             (c.op == CombineOp::Difference ? " and result " : " to result ") +
             std::to_string(c.right + 1) + " is " + detail::answer_number(it->second) + ".";
    } else {
      line = "Combined result " + std::to_string(j + 1) + ": unavailable.";
    }
    lines.push_back(std::move(line));
  }

  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) out += (i ? " " : "") + lines[i];
  return out;
}

} // namespace faforge
