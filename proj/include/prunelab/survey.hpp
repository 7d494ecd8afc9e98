#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prunelab/stats.hpp"

namespace prunelab::survey {

/// Reader-study style rows: one score given by a reader to one image.
struct Response {
  std::string group;        // e.g. "PIE" / "non-PIE"
  std::string question_id;
  double score = 0.0;
};

struct GroupSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct QuestionResult {
  stats::TestResult test;
  std::map<std::string, GroupSummary> groups;
};

/// CSV with header `group,question_id,score`.
std::vector<Response> load_responses(const std::filesystem::path& path);

/// One Kruskal-Wallis test per question comparing the groups. Throws
/// InvalidArgument when a question has fewer than two groups.
std::map<std::string, QuestionResult> analyze(const std::vector<Response>& responses);

std::string to_json(const std::map<std::string, QuestionResult>& results);

}  // namespace prunelab::survey
