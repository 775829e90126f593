#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridbench/io.hpp"
#include "hybridbench/provider.hpp"

namespace hybridbench {

enum class Outcome { Correct, Incorrect, Unparseable };

std::string_view to_string(Outcome outcome);
Outcome parse_outcome(std::string_view text);

struct Verdict {
  std::string item_id;
  std::string judge;
  int round = 1;
  Outcome outcome = Outcome::Unparseable;
  std::string raw;
};

struct VerdictTally {
  std::string item_id;
  int correct = 0;
  int incorrect = 0;
  int unparseable = 0;
  int total = 0;
  // False when some judge request failed outright; such tallies are
  // rejected by both filters with an error.
  bool complete = true;
};

// Threshold parameters of the two filtration stages. Construction enforces
//   k1 > m1*n1/2   and   m3*n3/2 < k3 <= k4 <= m3*n3 - 2.
class FilterParams {
 public:
  FilterParams(int m1, int n1, int k1, int m3, int n3, int k3, int k4);

  // The thresholds used for the reference algebraic-geometry benchmark.
  static FilterParams defaults() { return {4, 3, 8, 4, 3, 7, 10}; }

  // True iff the tuple satisfies every constraint (no throw).
  static bool admissible(int m1, int n1, int k1, int m3, int n3, int k3, int k4);

  int m1() const { return m1_; }
  int n1() const { return n1_; }
  int k1() const { return k1_; }
  int m3() const { return m3_; }
  int n3() const { return n3_; }
  int k3() const { return k3_; }
  int k4() const { return k4_; }

 private:
  int m1_, n1_, k1_, m3_, n3_, k3_, k4_;
};

// Accept iff tally.correct >= k1. Throws PreconditionError on an incomplete
// tally or one whose total is not m1*n1.
bool filter_seed(const VerdictTally& tally, const FilterParams& params);
// Accept iff k3 <= tally.incorrect <= k4. Same preconditions with m3*n3.
bool filter_distractor(const VerdictTally& tally, const FilterParams& params);

// Outcome named by the last line of the form `VERDICT: correct|incorrect`
// (case-insensitive, surrounding whitespace allowed); nullopt if none.
std::optional<Outcome> parse_verdict(std::string_view response);

std::string verdict_prompt(std::string_view item_text);
std::string verdict_reask_prompt(std::string_view item_text);
extern const char* const kVerdictPromptTemplate;

VerdictTally tally_verdicts(std::string item_id, std::span<const Verdict> verdicts,
                            bool complete = true);

struct JudgedItem {
  std::string id;
  std::string text;
};

struct CollectedVerdicts {
  VerdictTally tally;
  std::vector<Verdict> verdicts;
  std::vector<std::string> failures;
};

// Asks every judge `rounds` times about every item, re-asking up to
// `max_reasks` times when no verdict line can be parsed. Requests fan out
// across threads; the provider layer bounds parallelism. Output order
// follows `items`, verdicts within an item ordered by (judge, round).
std::vector<CollectedVerdicts> collect_verdicts(
    std::span<const JudgedItem> items, std::span<Provider* const> judges,
    int rounds, std::string_view stage, int max_reasks = 2);

CollectedVerdicts collect_verdicts(const JudgedItem& item,
                                   std::span<Provider* const> judges, int rounds,
                                   std::string_view stage, int max_reasks = 2);

Json to_json(const Verdict& v);
Json to_json(const VerdictTally& t);

}  // namespace hybridbench
