#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridbench/io.hpp"

namespace hybridbench {

enum class ItemKind { Definition, PropositionProof };

std::string_view to_string(ItemKind kind);
// Accepts "definition" and "proposition-proof". Throws CorpusError otherwise.
ItemKind parse_item_kind(std::string_view text);

struct SourceLocation {
  std::string document;
  std::uint64_t offset = 0;

  friend bool operator==(const SourceLocation&, const SourceLocation&) = default;
};

// A ground-truth item taken from the corpus. `proof` is set iff the item is a
// proposition-proof pair.
struct SeedItem {
  std::string id;
  ItemKind kind = ItemKind::Definition;
  std::string statement;
  std::optional<std::string> proof;
  SourceLocation source;

  friend bool operator==(const SeedItem&, const SeedItem&) = default;
};

// A block that was skipped, with the byte offset of its header line.
struct CorpusDiagnostic {
  std::uint64_t offset = 0;
  std::string message;
};

struct ParsedCorpus {
  std::vector<SeedItem> items;
  std::vector<CorpusDiagnostic> diagnostics;
};

// Parses the tagged block format:
//
//   [ITEM tag=<id> kind=<definition|proposition-proof>]
//   [STATEMENT]
//   ...
//   [PROOF]        (optional)
//   ...
//   [END]
//
// Malformed blocks are skipped and reported. A duplicate tag or a block with
// no [END] throws CorpusError.
ParsedCorpus parse_corpus(std::string_view text,
                          std::string_view document = "<corpus>");

// One JSON object per line: {tag, kind, statement, proof?}.
ParsedCorpus parse_corpus_jsonl(std::string_view text,
                                std::string_view document = "<corpus>");

// Inverse of parse_corpus for valid items.
std::string serialize_corpus(std::span<const SeedItem> items);

// Uniform sample without replacement, returned in input order.
std::vector<SeedItem> sample_seeds(std::span<const SeedItem> items,
                                   std::size_t count, std::uint64_t seed);

// Throws CorpusError if the item violates a SeedItem invariant.
void validate_seed(const SeedItem& item);

// Canonical rendering used wherever an item is shown to a model or placed in
// a question. Definitions render as "DEFINITION:\n<statement>", pairs as
// "PROPOSITION:\n<statement>\nPROOF:\n<proof>".
std::string item_text(const SeedItem& item);
std::string render_item(ItemKind kind, std::string_view statement,
                        std::optional<std::string_view> proof);

struct SplitItem {
  ItemKind kind = ItemKind::Definition;
  std::string statement;
  std::optional<std::string> proof;
};

// Inverse of render_item. Text without a DEFINITION:/PROPOSITION: header is
// read as a bare definition; a PROPOSITION: header without a PROOF: line
// yields nullopt.
std::optional<SplitItem> split_item_text(std::string_view text);

// Removes leading and trailing whitespace-only lines; interior bytes are kept.
std::string strip_blank_lines(std::string_view text);

Json to_json(const SeedItem& item);
SeedItem seed_from_json(const Json& j);

}  // namespace hybridbench
