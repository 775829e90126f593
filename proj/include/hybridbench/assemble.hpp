#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hybridbench/corpus.hpp"
#include "hybridbench/distract.hpp"
#include "hybridbench/io.hpp"

namespace hybridbench {

// An item available for assembly. For seeds, origin == id.
struct PoolItem {
  std::string id;
  std::string origin;
  std::string text;

  friend bool operator==(const PoolItem&, const PoolItem&) = default;
};

PoolItem pool_item(const SeedItem& seed);
PoolItem pool_item(const Distractor& d);

struct HybridEntry {
  std::string label;
  std::string text;
  std::string origin;
  bool truth = false;
  // Id of the seed or distractor this entry came from (not persisted).
  std::string item_id;
};

struct HybridQuestion {
  std::string id;
  int m = 0;
  int n = 0;
  std::vector<HybridEntry> items;
};

struct AssemblyResult {
  std::vector<HybridQuestion> questions;
  std::vector<PoolItem> residual_seeds;
  std::vector<PoolItem> residual_distractors;
};

// Label of the i-th item: "A", "B", ...
std::string item_label(std::size_t index);

// Repeatedly draws m seeds and then n-m distractors whose origins are
// distinct from each other and from the drawn seeds, until no further
// question can be completed. A distractor slot with no eligible candidate
// ends assembly and returns that draft's items to the pools. Residual pools
// keep input order. Requires 0 < m < n <= 26.
AssemblyResult assemble_hybrid(std::span<const PoolItem> seeds,
                               std::span<const PoolItem> distractors, int m, int n,
                               std::uint64_t rng_seed);

// Every violated HybridQuestion invariant, as readable messages. Empty if
// the question is valid.
std::vector<std::string> validate_hybrid(const HybridQuestion& q);

struct McqQuestion {
  std::string id;
  std::string origin;
  std::vector<std::string> options;
  int correct_index = 0;

  std::size_t option_count() const { return options.size(); }
};

// Packs a seed and its accepted distractors into one multiple-choice question
// with a deterministic shuffle of the options. Distractors duplicating another
// option up to whitespace are dropped. Throws PreconditionError if no distinct
// distractor remains or a distractor belongs to another origin.
McqQuestion assemble_mcq(const SeedItem& seed, std::span<const Distractor> distractors,
                         std::uint64_t rng_seed);

struct McqBank {
  std::vector<McqQuestion> questions;
  // Seeds with no accepted distractor.
  std::vector<std::string> excluded;
};

McqBank build_mcq_bank(std::span<const SeedItem> seeds,
                       std::span<const Distractor> distractors, std::uint64_t rng_seed);

Json to_json(const HybridQuestion& q);
// Same, without truth and origin.
Json to_public_json(const HybridQuestion& q);
HybridQuestion hybrid_from_json(const Json& j);
Json to_json(const McqQuestion& q);
McqQuestion mcq_from_json(const Json& j);

}  // namespace hybridbench
