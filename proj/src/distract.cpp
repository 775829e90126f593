#include "hybridbench/distract.hpp"

#include <unordered_set>

#include "hybridbench/error.hpp"
#include "hybridbench/parallel.hpp"
#include "hybridbench/rng.hpp"

namespace hybridbench {

std::string distractor_id(std::string_view origin, std::string_view generator,
                          int round) {
  return std::string(origin) + "#" + std::string(generator) + "#" +
         std::to_string(round);
}

bool GenParams::admissible(int m2, int n2, int k2) {
  return m2 >= 1 && n2 >= 1 && k2 >= 1 && k2 <= n2;
}

GenParams::GenParams(int m2, int n2, int k2) : m2_(m2), n2_(n2), k2_(k2) {
  if (m2 < 1 || n2 < 1 || k2 < 1) {
    throw ConfigError("generation parameters must be positive integers");
  }
  if (k2 > n2) {
    throw ConfigError("k2 = " + std::to_string(k2) + " must not exceed n2 = " +
                      std::to_string(n2));
  }
}

namespace {

bool is_white_space(char32_t cp) {
  // Unicode White_Space property.
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 ||
         cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

// Length of the UTF-8 sequence at s[i] and its code point; 0 if invalid.
std::size_t decode_utf8(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len;
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

}  // namespace

std::string normalize_fingerprint(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp = 0;
    std::size_t len = decode_utf8(text, i, cp);
    if (len == 0) {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    if (!is_white_space(cp)) out.append(text.substr(i, len));
    i += len;
  }
  return out;
}

const char* const kGenerationPromptTemplate =
    "Below is an item from a mathematics reference text.\n"
    "\n"
    "{item}\n"
    "\n"
    "Write a close but mathematically flawed variant of this item. Alter "
    "exactly one keyword, condition, or formula so that the result is wrong "
    "while still looking plausible to an expert. {rule} Keep the header "
    "lines exactly as they are.\n"
    "Output only the modified item, between the delimiters <<< and >>>.\n";

std::string generation_prompt(const SeedItem& seed) {
  std::string prompt = kGenerationPromptTemplate;
  const char* rule =
      seed.kind == ItemKind::PropositionProof
          ? "Modify only the proof; copy the proposition verbatim."
          : "Modify the definition itself.";
  prompt.replace(prompt.find("{rule}"), 6, rule);
  prompt.replace(prompt.find("{item}"), 6, item_text(seed));
  return prompt;
}

std::optional<std::string> extract_delimited(std::string_view response) {
  const auto open = response.find("<<<");
  if (open == std::string_view::npos) return std::nullopt;
  const auto close = response.find(">>>", open + 3);
  if (close == std::string_view::npos) return std::nullopt;
  std::string body = strip_blank_lines(response.substr(open + 3, close - open - 3));
  if (normalize_fingerprint(body).empty()) return std::nullopt;
  return body;
}

CandidateOutcome check_candidate(const SeedItem& seed, std::string_view response) {
  auto body = extract_delimited(response);
  if (!body) return {std::nullopt, "no <<< >>> delimited text"};
  auto split = split_item_text(*body);
  if (!split) return {std::nullopt, "PROPOSITION: without a PROOF: line"};
  if (split->kind != seed.kind) return {std::nullopt, "item kind changed"};

  std::string text;
  if (seed.kind == ItemKind::PropositionProof) {
    if (split->statement != seed.statement) {
      return {std::nullopt, "proposition statement was modified"};
    }
    if (normalize_fingerprint(split->proof.value_or("")).empty()) {
      return {std::nullopt, "empty proof"};
    }
    text = render_item(seed.kind, seed.statement, *split->proof);
  } else {
    if (normalize_fingerprint(split->statement).empty()) {
      return {std::nullopt, "empty definition"};
    }
    text = render_item(seed.kind, split->statement, std::nullopt);
  }
  if (normalize_fingerprint(text) == normalize_fingerprint(item_text(seed))) {
    return {std::nullopt, "identical to origin"};
  }
  return {std::move(text), {}};
}

GenerationReport generate_distractors(std::span<const SeedItem> seeds,
                                      std::span<Provider* const> generators,
                                      const GenParams& params,
                                      std::uint64_t rng_seed) {
  if (static_cast<int>(generators.size()) != params.m2()) {
    throw PreconditionError("generate_distractors: " +
                            std::to_string(generators.size()) +
                            " generators bound, m2 = " + std::to_string(params.m2()));
  }
  const std::size_t n2 = static_cast<std::size_t>(params.n2());
  const std::size_t per_seed = generators.size() * n2;

  struct Slot {
    std::optional<std::string> response;
    std::string failure;
  };
  std::vector<Slot> slots(seeds.size() * per_seed);
  std::size_t workers = 0;
  for (const Provider* g : generators) workers += static_cast<std::size_t>(g->spec().max_concurrency);

  parallel_for(slots.size(), workers, [&](std::size_t idx) {
    const SeedItem& seed = seeds[idx / per_seed];
    const std::size_t r = idx % per_seed;
    Provider& gen = *generators[r / n2];
    const int round = static_cast<int>(r % n2) + 1;
    try {
      slots[idx].response =
          gen.complete({"generate", seed.id, round, 0, generation_prompt(seed)}).text;
    } catch (const ProviderError& e) {
      slots[idx].failure = distractor_id(seed.id, gen.spec().name, round) + ": " +
                           e.what() + " [" + e.request_key() + "]";
    }
  });

  GenerationReport report;
  const auto k2 = static_cast<std::size_t>(params.k2());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const SeedItem& seed = seeds[s];
    for (std::size_t g = 0; g < generators.size(); ++g) {
      const std::string& gen_name = generators[g]->spec().name;
      std::vector<Distractor> usable;
      for (std::size_t r = 0; r < n2; ++r) {
        Slot& slot = slots[s * per_seed + g * n2 + r];
        const int round = static_cast<int>(r) + 1;
        const std::string id = distractor_id(seed.id, gen_name, round);
        if (!slot.response) {
          report.failures.push_back(std::move(slot.failure));
          continue;
        }
        CandidateOutcome outcome = check_candidate(seed, *slot.response);
        if (!outcome.text) {
          report.discarded.push_back(id + ": " + outcome.rejection);
          continue;
        }
        Distractor d;
        d.id = id;
        d.origin = seed.id;
        d.generator = gen_name;
        d.round = round;
        d.fingerprint = normalize_fingerprint(*outcome.text);
        d.text = std::move(*outcome.text);
        usable.push_back(std::move(d));
      }
      if (usable.size() < k2) {
        report.warnings.push_back(seed.id + "#" + gen_name + ": only " +
                                  std::to_string(usable.size()) +
                                  " usable candidates, wanted " + std::to_string(k2));
        for (auto& d : usable) report.distractors.push_back(std::move(d));
        continue;
      }
      Rng rng(derive_seed(rng_seed, seed.id + "#" + gen_name));
      for (std::size_t idx : choose_subset(usable.size(), k2, rng)) {
        report.distractors.push_back(std::move(usable[idx]));
      }
    }
  }
  return report;
}

GenerationReport generate_distractors(const SeedItem& seed,
                                      std::span<Provider* const> generators,
                                      const GenParams& params,
                                      std::uint64_t rng_seed) {
  return generate_distractors(std::span(&seed, 1), generators, params, rng_seed);
}

std::vector<Distractor> dedup(
    std::span<const Distractor> distractors,
    const std::unordered_map<std::string, std::string>& origin_fingerprints) {
  std::vector<Distractor> out;
  std::unordered_set<std::string> seen;
  for (const auto& d : distractors) {
    if (auto it = origin_fingerprints.find(d.origin);
        it != origin_fingerprints.end() && it->second == d.fingerprint) {
      continue;
    }
    if (seen.insert(d.fingerprint).second) out.push_back(d);
  }
  return out;
}

Json to_json(const Distractor& d) {
  Json j;
  j["id"] = d.id;
  j["origin"] = d.origin;
  j["generator"] = d.generator;
  j["text"] = d.text;
  return j;
}

Distractor distractor_from_json(const Json& j) {
  Distractor d;
  d.id = j.at("id").get<std::string>();
  d.origin = j.at("origin").get<std::string>();
  d.generator = j.at("generator").get<std::string>();
  d.text = j.at("text").get<std::string>();
  d.fingerprint = normalize_fingerprint(d.text);
  const auto last = d.id.rfind('#');
  if (last != std::string::npos) {
    try {
      d.round = std::stoi(d.id.substr(last + 1));
    } catch (const std::exception&) {
      d.round = 0;
    }
  }
  return d;
}

}  // namespace hybridbench
