#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hybridbench/corpus.hpp"
#include "hybridbench/io.hpp"
#include "hybridbench/provider.hpp"

namespace hybridbench {

// A deliberately flawed variant of a seed item. id is
// "<origin>#<generator>#<round>".
struct Distractor {
  std::string id;
  std::string origin;
  std::string generator;
  int round = 1;
  std::string text;
  std::string fingerprint;

  friend bool operator==(const Distractor&, const Distractor&) = default;
};

std::string distractor_id(std::string_view origin, std::string_view generator,
                          int round);

// m2 generators, n2 candidates requested from each, k2 kept per generator.
class GenParams {
 public:
  GenParams(int m2, int n2, int k2);
  static GenParams defaults() { return {5, 6, 2}; }
  static bool admissible(int m2, int n2, int k2);

  int m2() const { return m2_; }
  int n2() const { return n2_; }
  int k2() const { return k2_; }

 private:
  int m2_, n2_, k2_;
};

// Removes every Unicode White_Space code point from UTF-8 text. Bytes that
// are not valid UTF-8 pass through unchanged.
std::string normalize_fingerprint(std::string_view text);

std::string generation_prompt(const SeedItem& seed);
extern const char* const kGenerationPromptTemplate;

// Text between the first "<<<" and the following ">>>", with surrounding
// blank lines removed.
std::optional<std::string> extract_delimited(std::string_view response);

// Turns one raw generator response into canonical distractor text, or
// returns the reason it is unusable: no delimiters, wrong shape, a changed
// proposition statement, or text identical to the seed up to whitespace.
struct CandidateOutcome {
  std::optional<std::string> text;
  std::string rejection;
};
CandidateOutcome check_candidate(const SeedItem& seed, std::string_view response);

struct GenerationReport {
  std::vector<Distractor> distractors;
  std::vector<std::string> discarded;
  std::vector<std::string> warnings;
  std::vector<std::string> failures;
};

// For each seed and generator requests n2 candidates (rounds 1..n2), keeps
// the usable ones, and selects k2 uniformly at random among them. Selection
// randomness is derived from (seed, origin, generator), so the result does
// not depend on request scheduling. Output is ordered by (seed input order,
// generator order, round).
GenerationReport generate_distractors(std::span<const SeedItem> seeds,
                                      std::span<Provider* const> generators,
                                      const GenParams& params, std::uint64_t seed);

GenerationReport generate_distractors(const SeedItem& seed,
                                      std::span<Provider* const> generators,
                                      const GenParams& params, std::uint64_t rng_seed);

// Keeps the first distractor of each fingerprint, in input order, and drops
// any whose fingerprint equals its origin's (looked up in
// origin_fingerprints; origins absent from the map are not checked).
std::vector<Distractor> dedup(
    std::span<const Distractor> distractors,
    const std::unordered_map<std::string, std::string>& origin_fingerprints = {});

Json to_json(const Distractor& d);
Distractor distractor_from_json(const Json& j);

}  // namespace hybridbench
