#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "bdx/error.hpp"

namespace bdx::text {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Lines without terminators; a trailing newline does not produce an empty line.
inline std::vector<std::string> lines(std::string_view s) {
  std::vector<std::string> out = split(s, '\n');
  if (!out.empty() && out.back().empty()) out.pop_back();
  for (auto& l : out)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  return out;
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == s.npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

template <typename T>
T parse_number(std::string_view s, ErrorKind kind, std::string_view what) {
  std::string t = trim(s);
  T v{};
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || p != t.data() + t.size())
    fail(kind, "invalid " + std::string(what) + ": '" + t + "'");
  return v;
}

template <typename T>
std::vector<T> parse_list(std::string_view s, ErrorKind kind, std::string_view what) {
  std::vector<T> out;
  for (auto& item : split(s, ',')) out.push_back(parse_number<T>(item, kind, what));
  return out;
}

}  // namespace bdx::text
