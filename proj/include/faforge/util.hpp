#pragma once
//===----------------------------------------------------------------------===//
// Small shared helpers: deterministic double formatting, string munging,
// FNV-1a hashing for key fingerprints.
//===----------------------------------------------------------------------===//

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <string>
#include <vector>

namespace faforge {

// Shortest round-trip decimal form of a double ("42", "0.5", "1.5e-07").
// Used everywhere a double must serialize byte-deterministically.
inline std::string fmt_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Identifier-safe slug: lowercase, [a-z0-9_] only, runs of other chars -> '_'.
inline std::string slugify(const std::string& s) {
  std::string out;
  bool last_us = false;
  for (unsigned char c : to_lower(s)) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (ok) {
      out += static_cast<char>(c);
      last_us = (c == '_');
    } else if (!last_us && !out.empty()) {
      out += '_';
      last_us = true;
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  size_t lead = out.find_first_not_of('_');
  return lead == std::string::npos ? std::string() : out.substr(lead);
}

inline uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

} // namespace faforge
