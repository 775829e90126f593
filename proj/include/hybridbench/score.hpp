#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hybridbench/assemble.hpp"
#include "hybridbench/evaluate.hpp"
#include "hybridbench/io.hpp"

namespace hybridbench {

// |picks ∩ truth| / m; 0 for Malformed.
double loose_score(const Picks& picks, const std::set<std::string>& truth, int m);
// 1 iff picks == truth.
double tight_score(const Picks& picks, const std::set<std::string>& truth);

std::uint64_t binomial(int n, int k);

// Expected tight accuracy of a uniform random guesser: 1 / C(n, m).
double guess_baseline(int m, int n);

// Per-question weights summing to 100 with w_i / c_i equal across
// questions, so that random guessing earns the same expected points on each.
std::vector<double> weighted_mcq_scores(std::span<const int> option_counts);

enum class Protocol { Generation, Perplexity };
std::string_view to_string(Protocol p);

struct QuestionScore {
  std::string question_id;
  double loose = 0.0;
  double tight = 0.0;
  bool malformed = false;
  // Perplexity protocol only.
  double weight = 0.0;
  bool correct = false;
};

struct ScoreReport {
  std::string model;
  Protocol protocol = Protocol::Generation;
  double loose = 0.0;  // 0..100
  double tight = 0.0;  // 0..100
  double baseline_tight = 0.0;
  int malformed_count = 0;
  std::vector<QuestionScore> per_question;
};

// Records must all belong to one model and reference questions in the bank.
// Failed records count as zero unless exclude_failed is set.
ScoreReport aggregate_generation(std::span<const GenEvalRecord> records,
                                 std::span<const HybridQuestion> bank,
                                 bool exclude_failed = false);
ScoreReport aggregate_perplexity(std::span<const PplEvalRecord> records,
                                 std::span<const McqQuestion> bank);

Json to_json(const ScoreReport& r);
// Leaderboard rows: model,protocol,loose,tight,baseline_tight,malformed_count,questions
std::string to_csv(std::span<const ScoreReport> reports);

}  // namespace hybridbench
