#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "digitwise/core/error.hpp"

namespace digitwise {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (is_missing(v)) return {};
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

/// %.{digits}g formatting, used where a fixed number of significant
/// digits is part of a file contract.
inline std::string format_significant(double v, int digits) {
  if (is_missing(v)) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int64(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc{} && ptr == s.data() + s.size()) return v;
  // Accept integral values written in floating notation ("1.6e12").
  auto d = parse_double(s);
  if (d && std::isfinite(*d) && std::floor(*d) == *d && std::fabs(*d) < 9.0e18)
    return static_cast<std::int64_t>(*d);
  return std::nullopt;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimal RFC 4180 CSV.

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_escape(fields[i]);
  }
  os << '\n';
}

/// Reads one logical record at a time; quoted fields may span lines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& is) : is_(is) {}

  /// Returns false at end of input. `malformed` is set when the record had
  /// an unterminated quote or stray characters after a closing quote.
  bool next(std::vector<std::string>& fields, bool& malformed) {
    fields.clear();
    malformed = false;
    std::string line;
    if (!std::getline(is_, line)) return false;
    std::string field;
    bool in_quotes = false;
    bool after_quote = false;
    while (true) {
      for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
          if (c == '"') {
            if (i + 1 < line.size() && line[i + 1] == '"') {
              field += '"';
              ++i;
            } else {
              in_quotes = false;
              after_quote = true;
            }
          } else {
            field += c;
          }
        } else if (c == ',') {
          fields.push_back(std::move(field));
          field.clear();
          after_quote = false;
        } else if (c == '"' && field.empty() && !after_quote) {
          in_quotes = true;
        } else if (c == '\r' && i + 1 == line.size()) {
          // tolerate CRLF
        } else {
          if (after_quote) malformed = true;
          field += c;
        }
      }
      if (!in_quotes) break;
      if (!std::getline(is_, line)) {
        malformed = true;
        break;
      }
      field += '\n';
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::istream& is_;
};

}  // namespace digitwise
