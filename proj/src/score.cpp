#include "hybridbench/score.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "hybridbench/error.hpp"

namespace hybridbench {

double loose_score(const Picks& picks, const std::set<std::string>& truth, int m) {
  if (!picks || m <= 0) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : *picks) hits += truth.count(p);
  return static_cast<double>(hits) / static_cast<double>(m);
}

double tight_score(const Picks& picks, const std::set<std::string>& truth) {
  return picks && *picks == truth ? 1.0 : 0.0;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return r;
}

double guess_baseline(int m, int n) {
  if (!(0 < m && m < n)) {
    throw PreconditionError("guess_baseline requires 0 < m < n, got m=" +
                            std::to_string(m) + " n=" + std::to_string(n));
  }
  return 1.0 / static_cast<double>(binomial(n, m));
}

std::vector<double> weighted_mcq_scores(std::span<const int> option_counts) {
  if (option_counts.empty()) throw PreconditionError("weighted_mcq_scores: empty list");
  double total = 0.0;
  for (int c : option_counts) {
    if (c < 2) {
      throw PreconditionError("weighted_mcq_scores: option count " + std::to_string(c) +
                              " is below 2");
    }
    total += c;
  }
  std::vector<double> w;
  w.reserve(option_counts.size());
  for (int c : option_counts) w.push_back(100.0 * c / total);
  return w;
}

std::string_view to_string(Protocol p) {
  return p == Protocol::Generation ? "generation" : "perplexity";
}

namespace {

template <typename Record>
std::string single_model(std::span<const Record> records) {
  if (records.empty()) return {};
  for (const auto& r : records) {
    if (r.model != records.front().model) {
      throw PreconditionError("records from several models: '" + records.front().model +
                              "' and '" + r.model + "'");
    }
  }
  return records.front().model;
}

}  // namespace

ScoreReport aggregate_generation(std::span<const GenEvalRecord> records,
                                 std::span<const HybridQuestion> bank,
                                 bool exclude_failed) {
  std::unordered_map<std::string, const HybridQuestion*> by_id;
  for (const auto& q : bank) by_id.emplace(q.id, &q);

  ScoreReport report;
  report.model = single_model(records);
  report.protocol = Protocol::Generation;
  std::unordered_set<std::string> seen;
  double loose_sum = 0.0, tight_sum = 0.0, base_sum = 0.0;
  for (const auto& r : records) {
    auto it = by_id.find(r.question_id);
    if (it == by_id.end()) {
      throw PreconditionError("record references unknown question '" + r.question_id + "'");
    }
    if (!seen.insert(r.question_id).second) {
      throw PreconditionError("duplicate record for question '" + r.question_id + "'");
    }
    if (r.failed && exclude_failed) continue;
    const HybridQuestion& q = *it->second;
    std::set<std::string> truth;
    for (const auto& e : q.items) {
      if (e.truth) truth.insert(e.label);
    }
    QuestionScore s;
    s.question_id = q.id;
    s.malformed = r.malformed || !r.picks;
    const Picks picks = s.malformed ? Picks{} : r.picks;
    s.loose = loose_score(picks, truth, q.m);
    s.tight = tight_score(picks, truth);
    if (s.malformed) ++report.malformed_count;
    loose_sum += s.loose;
    tight_sum += s.tight;
    base_sum += guess_baseline(q.m, q.n);
    report.per_question.push_back(std::move(s));
  }
  if (!report.per_question.empty()) {
    const auto count = static_cast<double>(report.per_question.size());
    report.loose = 100.0 * loose_sum / count;
    report.tight = 100.0 * tight_sum / count;
    report.baseline_tight = 100.0 * base_sum / count;
  }
  return report;
}

ScoreReport aggregate_perplexity(std::span<const PplEvalRecord> records,
                                 std::span<const McqQuestion> bank) {
  std::unordered_map<std::string, const McqQuestion*> by_id;
  for (const auto& q : bank) by_id.emplace(q.id, &q);

  ScoreReport report;
  report.model = single_model(records);
  report.protocol = Protocol::Perplexity;

  std::vector<const McqQuestion*> questions;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    auto it = by_id.find(r.question_id);
    if (it == by_id.end()) {
      throw PreconditionError("record references unknown question '" + r.question_id + "'");
    }
    if (!seen.insert(r.question_id).second) {
      throw PreconditionError("duplicate record for question '" + r.question_id + "'");
    }
    questions.push_back(it->second);
  }
  if (records.empty()) return report;

  std::vector<int> counts;
  for (const auto* q : questions) counts.push_back(static_cast<int>(q->option_count()));
  const auto weights = weighted_mcq_scores(counts);
  double points = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    QuestionScore s;
    s.question_id = records[i].question_id;
    s.weight = weights[i];
    s.correct = records[i].chosen == questions[i]->correct_index;
    s.tight = s.loose = s.correct ? 1.0 : 0.0;
    if (s.correct) points += weights[i];
    report.baseline_tight += weights[i] / counts[i];
    report.per_question.push_back(std::move(s));
  }
  report.loose = report.tight = std::min(points, 100.0);
  return report;
}

Json to_json(const ScoreReport& r) {
  Json j;
  j["model"] = r.model;
  j["protocol"] = to_string(r.protocol);
  j["loose"] = r.loose;
  j["tight"] = r.tight;
  j["baseline_tight"] = r.baseline_tight;
  j["malformed_count"] = r.malformed_count;
  Json rows = Json::array();
  for (const auto& s : r.per_question) {
    Json q;
    q["question_id"] = s.question_id;
    if (r.protocol == Protocol::Generation) {
      q["loose"] = s.loose;
      q["tight"] = s.tight;
      q["malformed"] = s.malformed;
    } else {
      q["weight"] = s.weight;
      q["correct"] = s.correct;
    }
    rows.push_back(std::move(q));
  }
  j["per_question"] = std::move(rows);
  return j;
}

std::string to_csv(std::span<const ScoreReport> reports) {
  std::string out = "model,protocol,loose,tight,baseline_tight,malformed_count,questions\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%s,%.4f,%.4f,%.4f,%d,%zu\n",
                  std::string(to_string(r.protocol)).c_str(), r.loose, r.tight,
                  r.baseline_tight, r.malformed_count, r.per_question.size());
    std::string name = r.model;
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : name) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      name = quoted + "\"";
    }
    out += name + buf;
  }
  return out;
}

}  // namespace hybridbench
