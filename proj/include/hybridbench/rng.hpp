#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hybridbench {

// Seeded generator with platform-independent integer draws.
// std::uniform_int_distribution differs between standard libraries, so the
// bounded draw is done here by rejection on top of mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Mixes a label into a base seed so independent sub-streams (per stage,
// per item, per generator) do not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

// k distinct indices from [0, n), uniform over all n-choose-k subsets,
// returned in increasing order.
std::vector<std::size_t> choose_subset(std::size_t n, std::size_t k, Rng& rng);

}  // namespace hybridbench
