#include "hybridbench/judge.hpp"

#include <regex>

#include "hybridbench/error.hpp"
#include "hybridbench/parallel.hpp"

namespace hybridbench {

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Correct: return "correct";
    case Outcome::Incorrect: return "incorrect";
    case Outcome::Unparseable: return "unparseable";
  }
  return "unparseable";
}

Outcome parse_outcome(std::string_view text) {
  if (text == "correct") return Outcome::Correct;
  if (text == "incorrect") return Outcome::Incorrect;
  if (text == "unparseable") return Outcome::Unparseable;
  throw Error("unknown verdict outcome '" + std::string(text) + "'");
}

bool FilterParams::admissible(int m1, int n1, int k1, int m3, int n3, int k3,
                              int k4) {
  if (m1 < 1 || n1 < 1 || k1 < 1 || m3 < 1 || n3 < 1 || k3 < 1 || k4 < 1) {
    return false;
  }
  // Integer forms of k1 > m1*n1/2 and m3*n3/2 < k3.
  return 2 * k1 > m1 * n1 && 2 * k3 > m3 * n3 && k3 <= k4 &&
         k4 <= m3 * n3 - 2;
}

FilterParams::FilterParams(int m1, int n1, int k1, int m3, int n3, int k3, int k4)
    : m1_(m1), n1_(n1), k1_(k1), m3_(m3), n3_(n3), k3_(k3), k4_(k4) {
  if (m1 < 1 || n1 < 1 || k1 < 1 || m3 < 1 || n3 < 1 || k3 < 1 || k4 < 1) {
    throw ConfigError("filter parameters must be positive integers");
  }
  if (!(2 * k1 > m1 * n1)) {
    throw ConfigError("k1 = " + std::to_string(k1) + " must exceed m1*n1/2 = " +
                      std::to_string(m1 * n1) + "/2");
  }
  if (!(2 * k3 > m3 * n3)) {
    throw ConfigError("k3 = " + std::to_string(k3) + " must exceed m3*n3/2 = " +
                      std::to_string(m3 * n3) + "/2");
  }
  if (!(k3 <= k4)) {
    throw ConfigError("k3 = " + std::to_string(k3) + " must not exceed k4 = " +
                      std::to_string(k4));
  }
  if (!(k4 <= m3 * n3 - 2)) {
    throw ConfigError("k4 = " + std::to_string(k4) + " must be at most m3*n3-2 = " +
                      std::to_string(m3 * n3 - 2));
  }
}

namespace {

void require_complete(const VerdictTally& tally, int expected_total,
                      const char* stage) {
  if (!tally.complete) {
    throw PreconditionError(std::string(stage) + ": tally for '" + tally.item_id +
                            "' is incomplete");
  }
  if (tally.correct + tally.incorrect + tally.unparseable != tally.total) {
    throw PreconditionError(std::string(stage) + ": tally for '" + tally.item_id +
                            "' does not add up");
  }
  if (tally.total != expected_total) {
    throw PreconditionError(std::string(stage) + ": tally for '" + tally.item_id +
                            "' has " + std::to_string(tally.total) +
                            " verdicts, expected " + std::to_string(expected_total));
  }
}

}  // namespace

bool filter_seed(const VerdictTally& tally, const FilterParams& params) {
  require_complete(tally, params.m1() * params.n1(), "filter_seed");
  return tally.correct >= params.k1();
}

bool filter_distractor(const VerdictTally& tally, const FilterParams& params) {
  require_complete(tally, params.m3() * params.n3(), "filter_distractor");
  return tally.incorrect >= params.k3() && tally.incorrect <= params.k4();
}

std::optional<Outcome> parse_verdict(std::string_view response) {
  static const std::regex kLine(R"(^\s*VERDICT:\s*(correct|incorrect)\s*$)",
                                std::regex::icase);
  std::optional<Outcome> found;
  std::size_t pos = 0;
  while (pos <= response.size()) {
    std::size_t end = response.find('\n', pos);
    if (end == std::string_view::npos) end = response.size();
    std::match_results<std::string_view::const_iterator> m;
    auto first = response.begin() + static_cast<std::ptrdiff_t>(pos);
    auto last = response.begin() + static_cast<std::ptrdiff_t>(end);
    if (std::regex_match(first, last, m, kLine)) {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(*m[1].first)));
      found = c == 'c' ? Outcome::Correct : Outcome::Incorrect;
    }
    pos = end + 1;
  }
  return found;
}

const char* const kVerdictPromptTemplate =
    "You are reviewing one item from a mathematics reference text.\n"
    "\n"
    "{item}\n"
    "\n"
    "Decide whether the item is mathematically correct. A definition is "
    "correct if it is consistent and matches standard usage. A proposition "
    "with proof is correct only if the proposition is true and every step of "
    "the proof is valid.\n"
    "Explain your reasoning briefly, then end your reply with exactly one "
    "final line:\n"
    "VERDICT: correct\n"
    "or\n"
    "VERDICT: incorrect\n";

std::string verdict_prompt(std::string_view item_text) {
  std::string prompt = kVerdictPromptTemplate;
  prompt.replace(prompt.find("{item}"), 6, item_text);
  return prompt;
}

std::string verdict_reask_prompt(std::string_view item_text) {
  return verdict_prompt(item_text) +
         "\nYour previous reply did not end with a verdict line. Answer again "
         "and make the last line exactly `VERDICT: correct` or "
         "`VERDICT: incorrect`.\n";
}

VerdictTally tally_verdicts(std::string item_id, std::span<const Verdict> verdicts,
                            bool complete) {
  VerdictTally t;
  t.item_id = std::move(item_id);
  t.complete = complete;
  for (const auto& v : verdicts) {
    switch (v.outcome) {
      case Outcome::Correct: ++t.correct; break;
      case Outcome::Incorrect: ++t.incorrect; break;
      case Outcome::Unparseable: ++t.unparseable; break;
    }
    ++t.total;
  }
  return t;
}

std::vector<CollectedVerdicts> collect_verdicts(
    std::span<const JudgedItem> items, std::span<Provider* const> judges,
    int rounds, std::string_view stage, int max_reasks) {
  if (judges.empty()) throw PreconditionError("collect_verdicts: no judges");
  if (rounds < 1) throw PreconditionError("collect_verdicts: rounds must be >= 1");

  const std::size_t per_item = judges.size() * static_cast<std::size_t>(rounds);
  struct Slot {
    std::optional<Verdict> verdict;
    std::string failure;
  };
  std::vector<Slot> slots(items.size() * per_item);

  std::size_t workers = 0;
  for (const Provider* j : judges) workers += static_cast<std::size_t>(j->spec().max_concurrency);

  parallel_for(slots.size(), workers, [&](std::size_t idx) {
    const JudgedItem& item = items[idx / per_item];
    const std::size_t r = idx % per_item;
    Provider& judge = *judges[r / static_cast<std::size_t>(rounds)];
    const int round = static_cast<int>(r % static_cast<std::size_t>(rounds)) + 1;
    try {
      Verdict v;
      v.item_id = item.id;
      v.judge = judge.spec().name;
      v.round = round;
      for (int attempt = 0; attempt <= max_reasks; ++attempt) {
        CompletionRequest req{std::string(stage), item.id, round, attempt,
                              attempt == 0 ? verdict_prompt(item.text)
                                           : verdict_reask_prompt(item.text)};
        Completion c = judge.complete(req);
        v.raw = c.text;
        if (auto outcome = parse_verdict(c.text)) {
          v.outcome = *outcome;
          break;
        }
        v.outcome = Outcome::Unparseable;
      }
      slots[idx].verdict = std::move(v);
    } catch (const ProviderError& e) {
      slots[idx].failure = judge.spec().name + " round " + std::to_string(round) +
                           ": " + e.what() + " [" + e.request_key() + "]";
    }
  });

  std::vector<CollectedVerdicts> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CollectedVerdicts& cv = out[i];
    for (std::size_t r = 0; r < per_item; ++r) {
      Slot& s = slots[i * per_item + r];
      if (s.verdict) {
        cv.verdicts.push_back(std::move(*s.verdict));
      } else {
        cv.failures.push_back(std::move(s.failure));
      }
    }
    cv.tally = tally_verdicts(items[i].id, cv.verdicts, cv.failures.empty());
  }
  return out;
}

CollectedVerdicts collect_verdicts(const JudgedItem& item,
                                   std::span<Provider* const> judges, int rounds,
                                   std::string_view stage, int max_reasks) {
  return std::move(collect_verdicts(std::span(&item, 1), judges, rounds, stage,
                                    max_reasks)
                       .front());
}

Json to_json(const Verdict& v) {
  Json j;
  j["item_id"] = v.item_id;
  j["judge"] = v.judge;
  j["round"] = v.round;
  j["outcome"] = to_string(v.outcome);
  j["raw"] = v.raw;
  return j;
}

Json to_json(const VerdictTally& t) {
  Json j;
  j["item_id"] = t.item_id;
  j["correct"] = t.correct;
  j["incorrect"] = t.incorrect;
  j["unparseable"] = t.unparseable;
  j["total"] = t.total;
  j["complete"] = t.complete;
  return j;
}

}  // namespace hybridbench
