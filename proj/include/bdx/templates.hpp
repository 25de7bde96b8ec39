#pragma once

// Task prompt templates and deterministic text responses for a predicted class.

#include <filesystem>
#include <map>
#include <string>

#include "bdx/alignment.hpp"
#include "bdx/binary_io.hpp"
#include "bdx/error.hpp"
#include "bdx/text.hpp"

namespace bdx {

inline constexpr std::string_view kPlaceholder = "#placeholder#";

/// Task ids A (anomaly detection), B (fault diagnosis), C (maintenance), D (risk analysis).
class ResponseTemplateSet {
 public:
  /// `task_id<TAB>template` lines; every template holds exactly one placeholder.
  static ResponseTemplateSet parse(std::string_view content, const std::string& origin = "templates") {
    ResponseTemplateSet set;
    std::size_t lineno = 0;
    for (const auto& line : text::lines(content)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      const auto tab = line.find('\t');
      require(tab != std::string::npos, ErrorKind::Config, where + ": expected task_id<TAB>template");
      std::string id = text::trim(line.substr(0, tab));
      std::string body = line.substr(tab + 1);
      require(id.size() == 1 && id[0] >= 'A' && id[0] <= 'D', ErrorKind::Config, where + ": task id must be A, B, C or D");
      require(count_placeholders(body) == 1, ErrorKind::Config, where + ": template must contain exactly one #placeholder#");
      require(set.templates_.emplace(id[0], std::move(body)).second, ErrorKind::Config, where + ": duplicate task " + id);
    }
    for (char t : {'A', 'B', 'C', 'D'})
      require(set.templates_.count(t) != 0, ErrorKind::Config, origin + ": missing template for task " + std::string(1, t));
    return set;
  }

  static ResponseTemplateSet load(const std::filesystem::path& path) { return parse(io::read_text(path), path.string()); }

  static std::size_t count_placeholders(std::string_view s) {
    std::size_t n = 0;
    for (auto pos = s.find(kPlaceholder); pos != std::string_view::npos; pos = s.find(kPlaceholder, pos + kPlaceholder.size()))
      ++n;
    return n;
  }

  const std::string& get(char task) const {
    auto it = templates_.find(task);
    if (it == templates_.end()) fail(ErrorKind::Config, "unknown task '" + std::string(1, task) + "' (expected A, B, C or D)");
    return it->second;
  }

  /// Template with the placeholder replaced by `description`.
  std::string prompt(char task, std::string_view description) const {
    std::string t = get(task);
    t.replace(t.find(kPlaceholder), kPlaceholder.size(), description);
    return t;
  }

 private:
  std::map<char, std::string> templates_;
};

struct Response {
  std::string prompt;
  std::string answer;
};

/// Task A answers yes/no by label != 0; the others report the class description.
inline Response respond(const ResponseTemplateSet& templates, const FaultDescriptionSet& descriptions, char task, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < descriptions.size(), ErrorKind::Label,
          "label " + std::to_string(label) + " has no description");
  const std::string& desc = descriptions.texts[static_cast<std::size_t>(label)];
  Response r{templates.prompt(task, desc), {}};
  if (task == 'A') {
    r.answer = label != 0 ? "yes" : "no";
  } else if (label == 0) {
    r.answer = "The bearing is in normal condition (" + desc + ").";
  } else {
    r.answer = "The bearing shows a " + desc + ".";
  }
  return r;
}

}  // namespace bdx
