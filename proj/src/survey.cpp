#include "prunelab/survey.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "prunelab/error.hpp"
#include "text_io.hpp"

namespace prunelab::survey {

std::vector<Response> load_responses(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "group,question_id,score") {
    throw ParseError(path.string() + ":1: expected header 'group,question_id,score'");
  }
  std::vector<Response> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 3) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    auto score = detail::parse_double(fields[2]);
    if (!score || !std::isfinite(*score)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": invalid score '" + std::string(fields[2]) + "'");
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]), *score});
  }
  if (out.empty()) throw ParseError(path.string() + ": no responses");
  return out;
}

std::map<std::string, QuestionResult> analyze(const std::vector<Response>& responses) {
  std::map<std::string, std::map<std::string, std::vector<double>>> by_question;
  for (const auto& r : responses) by_question[r.question_id][r.group].push_back(r.score);

  std::map<std::string, QuestionResult> out;
  for (const auto& [question, groups] : by_question) {
    if (groups.size() < 2) {
      throw InvalidArgument("question '" + question + "' has a single group; Kruskal-Wallis needs at least two");
    }
    QuestionResult qr;
    std::vector<std::vector<double>> samples;
    for (const auto& [name, values] : groups) {
      GroupSummary g;
      g.n = values.size();
      g.mean = stats::mean(values);
      g.sd = values.size() > 1 ? std::sqrt(stats::sample_variance(values)) : 0.0;
      qr.groups[name] = g;
      samples.push_back(values);
    }
    qr.test = stats::kruskal_wallis(samples);
    out[question] = qr;
  }
  return out;
}

std::string to_json(const std::map<std::string, QuestionResult>& results) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [question, qr] : results) {
    nlohmann::json q;
    q["test"] = "kruskal_wallis";
    q["statistic"] = qr.test.statistic;
    q["degrees_of_freedom"] = qr.test.degrees_of_freedom;
    q["p_value"] = qr.test.p_value;
    for (const auto& [name, g] : qr.groups) q["groups"][name] = {{"n", g.n}, {"mean", g.mean}, {"sd", g.sd}};
    j[question] = q;
  }
  return j.dump(2) + "\n";
}

}  // namespace prunelab::survey
