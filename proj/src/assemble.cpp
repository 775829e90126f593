#include "hybridbench/assemble.hpp"

#include <map>
#include <set>
#include <unordered_set>

#include "hybridbench/error.hpp"
#include "hybridbench/rng.hpp"

namespace hybridbench {

PoolItem pool_item(const SeedItem& seed) { return {seed.id, seed.id, item_text(seed)}; }

PoolItem pool_item(const Distractor& d) { return {d.id, d.origin, d.text}; }

std::string item_label(std::size_t index) {
  if (index >= 26) throw PreconditionError("at most 26 items per question");
  return std::string(1, static_cast<char>('A' + index));
}

namespace {

// Draws uniformly among the first `limit` slots of `alive` whose origin is
// not in `used` and moves the pick to position limit-1. Returns false when
// no slot is eligible.
bool draw_eligible(std::vector<std::size_t>& alive, std::size_t limit,
                   std::span<const PoolItem> pool,
                   const std::unordered_set<std::string>& used, Rng& rng) {
  constexpr int kRejectionTries = 64;
  for (int t = 0; t < kRejectionTries; ++t) {
    std::size_t r = static_cast<std::size_t>(rng.below(limit));
    if (!used.count(pool[alive[r]].origin)) {
      std::swap(alive[r], alive[limit - 1]);
      return true;
    }
  }
  std::vector<std::size_t> eligible;
  for (std::size_t r = 0; r < limit; ++r) {
    if (!used.count(pool[alive[r]].origin)) eligible.push_back(r);
  }
  if (eligible.empty()) return false;
  std::size_t r = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
  std::swap(alive[r], alive[limit - 1]);
  return true;
}

}  // namespace

AssemblyResult assemble_hybrid(std::span<const PoolItem> seeds,
                               std::span<const PoolItem> distractors, int m, int n,
                               std::uint64_t rng_seed) {
  if (!(0 < m && m < n)) throw PreconditionError("assemble_hybrid requires 0 < m < n");
  if (n > 26) throw PreconditionError("assemble_hybrid supports at most 26 items");
  const auto sm = static_cast<std::size_t>(m);
  const auto dn = static_cast<std::size_t>(n - m);

  Rng rng(rng_seed);
  std::vector<std::size_t> alive_s(seeds.size()), alive_d(distractors.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) alive_s[i] = i;
  for (std::size_t i = 0; i < distractors.size(); ++i) alive_d[i] = i;
  std::vector<bool> used_s(seeds.size()), used_d(distractors.size());

  AssemblyResult result;
  while (alive_s.size() >= sm && alive_d.size() >= dn) {
    std::unordered_set<std::string> origins;
    // Draft: picks accumulate at the tail of each alive vector.
    bool ok = true;
    for (std::size_t j = 0; j < sm && ok; ++j) {
      ok = draw_eligible(alive_s, alive_s.size() - j, seeds, origins, rng);
      if (ok) origins.insert(seeds[alive_s[alive_s.size() - 1 - j]].origin);
    }
    for (std::size_t j = 0; j < dn && ok; ++j) {
      ok = draw_eligible(alive_d, alive_d.size() - j, distractors, origins, rng);
      if (ok) origins.insert(distractors[alive_d[alive_d.size() - 1 - j]].origin);
    }
    if (!ok) break;

    HybridQuestion q;
    q.m = m;
    q.n = n;
    for (std::size_t j = 0; j < sm; ++j) {
      const std::size_t idx = alive_s.back();
      alive_s.pop_back();
      used_s[idx] = true;
      q.items.push_back({"", seeds[idx].text, seeds[idx].origin, true, seeds[idx].id});
    }
    for (std::size_t j = 0; j < dn; ++j) {
      const std::size_t idx = alive_d.back();
      alive_d.pop_back();
      used_d[idx] = true;
      q.items.push_back({"", distractors[idx].text, distractors[idx].origin, false,
                         distractors[idx].id});
    }
    rng.shuffle(q.items);
    for (std::size_t i = 0; i < q.items.size(); ++i) q.items[i].label = item_label(i);
    char id[32];
    std::snprintf(id, sizeof id, "hq-%05zu", result.questions.size() + 1);
    q.id = id;
    result.questions.push_back(std::move(q));
  }

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!used_s[i]) result.residual_seeds.push_back(seeds[i]);
  }
  for (std::size_t i = 0; i < distractors.size(); ++i) {
    if (!used_d[i]) result.residual_distractors.push_back(distractors[i]);
  }
  return result;
}

std::vector<std::string> validate_hybrid(const HybridQuestion& q) {
  std::vector<std::string> errors;
  if (!(0 < q.m && q.m < q.n)) errors.push_back("requires 0 < m < n");
  if (static_cast<int>(q.items.size()) != q.n) {
    errors.push_back("has " + std::to_string(q.items.size()) + " items, n = " +
                     std::to_string(q.n));
  }
  int truths = 0;
  std::set<std::string> origins;
  for (std::size_t i = 0; i < q.items.size(); ++i) {
    const auto& e = q.items[i];
    if (e.truth) ++truths;
    if (!origins.insert(e.origin).second) {
      errors.push_back("origin '" + e.origin + "' appears twice");
    }
    if (i < 26 && e.label != item_label(i)) {
      errors.push_back("item " + std::to_string(i) + " labelled '" + e.label + "'");
    }
    if (e.text.empty()) errors.push_back("item " + e.label + " has empty text");
  }
  if (truths != q.m) {
    errors.push_back(std::to_string(truths) + " true items, m = " + std::to_string(q.m));
  }
  return errors;
}

McqQuestion assemble_mcq(const SeedItem& seed, std::span<const Distractor> distractors,
                         std::uint64_t rng_seed) {
  std::vector<std::string> options{item_text(seed)};
  std::unordered_set<std::string> seen{normalize_fingerprint(options.front())};
  for (const auto& d : distractors) {
    if (d.origin != seed.id) {
      throw PreconditionError("assemble_mcq: distractor '" + d.id +
                              "' does not derive from '" + seed.id + "'");
    }
    if (seen.insert(normalize_fingerprint(d.text)).second) options.push_back(d.text);
  }
  if (options.size() < 2) {
    throw PreconditionError("assemble_mcq: seed '" + seed.id +
                            "' has no accepted distractor");
  }
  std::vector<std::size_t> order(options.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(rng_seed, seed.id));
  rng.shuffle(order);

  McqQuestion q;
  q.id = "mcq-" + seed.id;
  q.origin = seed.id;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == 0) q.correct_index = static_cast<int>(i);
    q.options.push_back(std::move(options[order[i]]));
  }
  return q;
}

McqBank build_mcq_bank(std::span<const SeedItem> seeds,
                       std::span<const Distractor> distractors,
                       std::uint64_t rng_seed) {
  std::map<std::string, std::vector<Distractor>> by_origin;
  for (const auto& d : distractors) by_origin[d.origin].push_back(d);
  McqBank bank;
  for (const auto& seed : seeds) {
    auto it = by_origin.find(seed.id);
    if (it == by_origin.end()) {
      bank.excluded.push_back(seed.id);
      continue;
    }
    try {
      bank.questions.push_back(assemble_mcq(seed, it->second, rng_seed));
    } catch (const PreconditionError&) {
      bank.excluded.push_back(seed.id);
    }
  }
  return bank;
}

Json to_json(const HybridQuestion& q) {
  Json j;
  j["id"] = q.id;
  j["m"] = q.m;
  j["n"] = q.n;
  Json items = Json::array();
  for (const auto& e : q.items) {
    Json item;
    item["label"] = e.label;
    item["text"] = e.text;
    item["origin"] = e.origin;
    item["truth"] = e.truth;
    items.push_back(std::move(item));
  }
  j["items"] = std::move(items);
  return j;
}

Json to_public_json(const HybridQuestion& q) {
  Json j;
  j["id"] = q.id;
  j["m"] = q.m;
  j["n"] = q.n;
  Json items = Json::array();
  for (const auto& e : q.items) {
    Json item;
    item["label"] = e.label;
    item["text"] = e.text;
    items.push_back(std::move(item));
  }
  j["items"] = std::move(items);
  return j;
}

HybridQuestion hybrid_from_json(const Json& j) {
  HybridQuestion q;
  q.id = j.at("id").get<std::string>();
  q.m = j.at("m").get<int>();
  q.n = j.at("n").get<int>();
  for (const auto& item : j.at("items")) {
    HybridEntry e;
    e.label = item.at("label").get<std::string>();
    e.text = item.at("text").get<std::string>();
    e.origin = item.value("origin", std::string());
    e.truth = item.value("truth", false);
    q.items.push_back(std::move(e));
  }
  return q;
}

Json to_json(const McqQuestion& q) {
  Json j;
  j["id"] = q.id;
  j["origin"] = q.origin;
  j["options"] = q.options;
  j["correct_index"] = q.correct_index;
  return j;
}

McqQuestion mcq_from_json(const Json& j) {
  McqQuestion q;
  q.id = j.at("id").get<std::string>();
  q.origin = j.at("origin").get<std::string>();
  q.options = j.at("options").get<std::vector<std::string>>();
  q.correct_index = j.at("correct_index").get<int>();
  if (q.options.size() < 2 || q.correct_index < 0 ||
      q.correct_index >= static_cast<int>(q.options.size())) {
    throw Error("mcq question '" + q.id + "' is malformed");
  }
  return q;
}

}  // namespace hybridbench
