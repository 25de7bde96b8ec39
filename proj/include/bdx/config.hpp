#pragma once

// Flat `key = value` configuration files. Blank lines and lines starting
// with '#' are ignored; later keys override earlier ones.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bdx/binary_io.hpp"
#include "bdx/text.hpp"

namespace bdx {

class KeyValues {
 public:
  static KeyValues parse(std::string_view content, const std::string& origin = "config") {
    KeyValues kv;
    kv.origin_ = origin;
    std::size_t lineno = 0;
    for (const auto& raw : text::lines(content)) {
      ++lineno;
      auto line = text::trim(raw);
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": expected key = value");
      auto key = text::trim(line.substr(0, eq));
      if (key.empty()) fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": empty key");
      kv.values_[key] = text::trim(line.substr(eq + 1));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::Config, "config file not found: " + path.string());
    return parse(io::read_text(path), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string str(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = text::lower(it->second);
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      fail(ErrorKind::Config, origin_ + ": invalid boolean for " + key + ": '" + it->second + "'");
    } else {
      return text::parse_number<T>(it->second, ErrorKind::Config, origin_ + " key " + key);
    }
  }

  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return text::parse_list<T>(it->second, ErrorKind::Config, origin_ + " key " + key);
  }

  /// Keys present in the file that no getter asked for.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string origin_ = "config";
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace bdx
