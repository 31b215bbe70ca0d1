#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polscale {

// Error taxonomy. The CLI maps each class to its own exit code, so the
// distinction between "your config is wrong" and "the provider misbehaved"
// survives into scripts.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProviderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parse failures keep the offending text so callers can archive it for
// inspection instead of losing the reply that refused to parse.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg, std::string raw = "")
      : std::runtime_error(msg), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts,
                        std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(),
                        needle.end(), [](char a, char b) {
                          return std::tolower(static_cast<unsigned char>(a)) ==
                                 std::tolower(static_cast<unsigned char>(b));
                        });
  return it != haystack.end();
}

// Shortest round-trip decimal form. Used everywhere a double reaches a file,
// so regenerated outputs stay byte-identical.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Fixed-precision form for chart coordinates.
inline std::string format_fixed(double v, int precision) {
  char buf[64];
  auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

// Dates are carried as ISO-8601 strings and validated at the edges.
inline bool valid_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  auto digits = [&](size_t from, size_t len) {
    for (size_t i = from; i < from + len; ++i)
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
  };
  if (!digits(0, 4) || !digits(5, 2) || !digits(8, 2)) return false;
  int m = (s[5] - '0') * 10 + (s[6] - '0');
  int d = (s[8] - '0') * 10 + (s[9] - '0');
  return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

inline int date_year(std::string_view iso_date) {
  if (!valid_iso_date(iso_date))
    throw DataError("not an ISO-8601 date: '" + std::string(iso_date) + "'");
  return (iso_date[0] - '0') * 1000 + (iso_date[1] - '0') * 100 +
         (iso_date[2] - '0') * 10 + (iso_date[3] - '0');
}

// Filesystem-safe identifier for topics and axis names.
inline std::string slugify(std::string_view s) {
  std::string out;
  bool pending_dash = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (pending_dash && !out.empty()) out += '-';
      pending_dash = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_dash = true;
    }
  }
  if (out.empty()) out = "x";
  return out;
}

}  // namespace polscale
