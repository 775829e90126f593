#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridbench/assemble.hpp"
#include "hybridbench/io.hpp"
#include "hybridbench/provider.hpp"

namespace hybridbench {

// A parsed answer: exactly m distinct labels, or nullopt for Malformed.
using Picks = std::optional<std::set<std::string>>;

std::string build_eval_prompt(const HybridQuestion& question);
std::string build_eval_reask_prompt(const HybridQuestion& question);
extern const char* const kEvalPromptTemplate;

// Tries, in order: the last `ANSWER: ...` line, the last `\boxed{...}`, and
// the last line whose only alphabetic tokens are exactly m distinct valid
// labels. The first rule that yields m distinct labels among the first n
// wins; otherwise Malformed.
Picks extract_picks(std::string_view response, int n, int m);

struct GenEvalRecord {
  std::string question_id;
  std::string model;
  std::string raw;
  Picks picks;
  bool malformed = true;
  // The provider failed outright; raw holds the error message.
  bool failed = false;
};

// One record per question, in input order. A Malformed answer is re-asked
// once with a format reminder.
std::vector<GenEvalRecord> evaluate_generation(Provider& model,
                                               std::span<const HybridQuestion> questions);

// exp of the mean negative log-likelihood per token.
double option_perplexity(const TokenScore& score);

struct Choice {
  int index = 0;
  bool tie = false;
};

// Lowest value; ties go to the lowest index and are flagged.
Choice choose_lowest(std::span<const double> perplexities);

extern const char* const kPerplexityStem;

// Context and continuation used to score one option. Proposition-proof
// options are scored on the proof, conditioned on the stem plus the shared
// statement; definitions are scored whole with an empty context.
struct OptionScoringInput {
  std::string context;
  std::string continuation;
};
OptionScoringInput option_scoring_input(std::string_view option_text);

struct PplEvalRecord {
  std::string question_id;
  std::string model;
  std::vector<double> perplexities;
  int chosen = 0;
  bool tie = false;
};

// Throws CapabilityError before any request when the model cannot score tokens.
std::vector<PplEvalRecord> evaluate_perplexity(Provider& model,
                                               std::span<const McqQuestion> bank);

Json to_json(const GenEvalRecord& r);
GenEvalRecord gen_record_from_json(const Json& j);
Json to_json(const PplEvalRecord& r);
PplEvalRecord ppl_record_from_json(const Json& j);

}  // namespace hybridbench
