#include "hybridbench/corpus.hpp"

#include <algorithm>
#include <regex>
#include <unordered_map>

#include "hybridbench/error.hpp"
#include "hybridbench/rng.hpp"

namespace hybridbench {

std::string_view to_string(ItemKind kind) {
  return kind == ItemKind::Definition ? "definition" : "proposition-proof";
}

ItemKind parse_item_kind(std::string_view text) {
  if (text == "definition") return ItemKind::Definition;
  if (text == "proposition-proof") return ItemKind::PropositionProof;
  throw CorpusError("unknown item kind '" + std::string(text) + "'");
}

namespace {

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\f\v") == std::string_view::npos;
}

std::string_view trim_right(std::string_view s) {
  auto end = s.find_last_not_of(" \t\r");
  return end == std::string_view::npos ? std::string_view{} : s.substr(0, end + 1);
}

struct Line {
  std::uint64_t offset;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back({pos, text.substr(pos, end - pos)});
    pos = end + 1;
  }
  return lines;
}

std::string join_lines(const std::vector<std::string_view>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out.append(lines[i]);
  }
  return out;
}

// Shared by both ingestion paths: rejects duplicates, collects the rest.
class CorpusBuilder {
 public:
  explicit CorpusBuilder(std::string_view document) : document_(document) {}

  void add(SeedItem item) {
    auto [it, inserted] = offsets_.emplace(item.id, item.source.offset);
    if (!inserted) {
      throw CorpusError("duplicate tag '" + item.id + "' at byte offsets " +
                        std::to_string(it->second) + " and " +
                        std::to_string(item.source.offset) + " in " +
                        document_);
    }
    result_.items.push_back(std::move(item));
  }

  void skip(std::uint64_t offset, std::string message) {
    result_.diagnostics.push_back({offset, std::move(message)});
  }

  const std::string& document() const { return document_; }
  ParsedCorpus finish() && { return std::move(result_); }

 private:
  std::string document_;
  std::unordered_map<std::string, std::uint64_t> offsets_;
  ParsedCorpus result_;
};

// Returns an error message if the fields do not form a valid SeedItem.
std::optional<std::string> check_fields(ItemKind kind,
                                        const std::string& statement,
                                        const std::optional<std::string>& proof) {
  if (std::all_of(statement.begin(), statement.end(),
                  [](unsigned char c) { return std::isspace(c); })) {
    return "empty statement";
  }
  if (kind == ItemKind::PropositionProof) {
    if (!proof) return "proposition-proof item has no [PROOF] section";
    if (std::all_of(proof->begin(), proof->end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      return "proposition-proof item has an empty proof";
    }
  } else if (proof) {
    return "definition item must not have a [PROOF] section";
  }
  return std::nullopt;
}

}  // namespace

std::string strip_blank_lines(std::string_view text) {
  auto lines = split_lines(text);
  // split_lines drops the empty tail after a final newline; that tail is a
  // blank line anyway.
  std::size_t first = 0, last = lines.size();
  while (first < last && is_blank(lines[first].text)) ++first;
  while (last > first && is_blank(lines[last - 1].text)) --last;
  std::vector<std::string_view> kept;
  for (std::size_t i = first; i < last; ++i) kept.push_back(lines[i].text);
  return join_lines(kept);
}

void validate_seed(const SeedItem& item) {
  static const std::regex kTag("[A-Za-z0-9_-]+");
  if (item.id.empty()) throw CorpusError("seed item has an empty id");
  if (!std::regex_match(item.id, kTag)) {
    throw CorpusError("seed item id '" + item.id + "' has invalid characters");
  }
  if (auto err = check_fields(item.kind, item.statement, item.proof)) {
    throw CorpusError("seed item '" + item.id + "': " + *err);
  }
}

ParsedCorpus parse_corpus(std::string_view text, std::string_view document) {
  static const std::regex kHeader(
      R"(\[ITEM tag=([A-Za-z0-9_-]+) kind=(definition|proposition-proof)\])");

  enum class State { Outside, ExpectStatement, Statement, Proof };

  CorpusBuilder builder(document);
  State state = State::Outside;
  std::uint64_t block_offset = 0;
  std::string tag;
  ItemKind kind = ItemKind::Definition;
  std::optional<std::string> defect;
  bool has_proof = false;
  std::vector<std::string_view> statement_lines, proof_lines;

  auto open_block = [&](std::uint64_t offset) {
    block_offset = offset;
    defect.reset();
    has_proof = false;
    statement_lines.clear();
    proof_lines.clear();
    state = State::ExpectStatement;
  };

  for (const Line& line : split_lines(text)) {
    const std::string_view s = line.text;
    if (state == State::Outside) {
      if (s.rfind("[ITEM", 0) == 0) {
        open_block(line.offset);
        std::match_results<std::string_view::const_iterator> m;
        if (std::regex_match(s.begin(), s.end(), m, kHeader)) {
          tag = m[1].str();
          kind = parse_item_kind(std::string_view(&*m[2].first, m[2].length()));
        } else {
          defect = "malformed [ITEM] header";
        }
      } else if (!is_blank(s)) {
        builder.skip(line.offset, "text outside any block");
      }
      continue;
    }

    if (s.rfind("[ITEM", 0) == 0) {
      throw CorpusError("unterminated block at byte offset " +
                        std::to_string(block_offset) + " in " +
                        builder.document() + " (next block starts at " +
                        std::to_string(line.offset) + ")");
    }
    if (s == "[END]") {
      state = State::Outside;
      if (defect) {
        builder.skip(block_offset, *defect);
        continue;
      }
      SeedItem item;
      item.id = tag;
      item.kind = kind;
      item.statement = strip_blank_lines(join_lines(statement_lines));
      if (has_proof) item.proof = strip_blank_lines(join_lines(proof_lines));
      if (auto err = check_fields(item.kind, item.statement, item.proof)) {
        builder.skip(block_offset, "block '" + tag + "': " + *err);
        continue;
      }
      item.source = {builder.document(), block_offset};
      builder.add(std::move(item));
      continue;
    }
    if (defect) continue;

    switch (state) {
      case State::ExpectStatement:
        if (s == "[STATEMENT]") {
          state = State::Statement;
        } else {
          defect = "expected [STATEMENT] after header";
        }
        break;
      case State::Statement:
        if (s == "[PROOF]") {
          has_proof = true;
          state = State::Proof;
        } else if (s == "[STATEMENT]") {
          defect = "repeated [STATEMENT] section";
        } else {
          statement_lines.push_back(s);
        }
        break;
      case State::Proof:
        if (s == "[PROOF]" || s == "[STATEMENT]") {
          defect = "unexpected section marker inside [PROOF]";
        } else {
          proof_lines.push_back(s);
        }
        break;
      case State::Outside:
        break;
    }
  }
  if (state != State::Outside) {
    throw CorpusError("unterminated block at byte offset " +
                      std::to_string(block_offset) + " in " +
                      builder.document());
  }
  return std::move(builder).finish();
}

ParsedCorpus parse_corpus_jsonl(std::string_view text,
                                std::string_view document) {
  CorpusBuilder builder(document);
  for (const Line& line : split_lines(text)) {
    if (is_blank(line.text)) continue;
    Json row;
    try {
      row = Json::parse(line.text);
    } catch (const nlohmann::json::parse_error&) {
      builder.skip(line.offset, "invalid JSON");
      continue;
    }
    if (!row.is_object() || !row.contains("tag") || !row["tag"].is_string() ||
        !row.contains("kind") || !row["kind"].is_string() ||
        !row.contains("statement") || !row["statement"].is_string() ||
        (row.contains("proof") && !row["proof"].is_string())) {
      builder.skip(line.offset, "row lacks string fields tag/kind/statement");
      continue;
    }
    SeedItem item;
    item.id = row["tag"].get<std::string>();
    const auto kind_text = row["kind"].get<std::string>();
    if (kind_text != "definition" && kind_text != "proposition-proof") {
      builder.skip(line.offset, "unknown kind '" + kind_text + "'");
      continue;
    }
    item.kind = parse_item_kind(kind_text);
    item.statement = strip_blank_lines(row["statement"].get<std::string>());
    if (row.contains("proof")) {
      item.proof = strip_blank_lines(row["proof"].get<std::string>());
    }
    item.source = {builder.document(), line.offset};
    try {
      validate_seed(item);
    } catch (const CorpusError& e) {
      builder.skip(line.offset, e.what());
      continue;
    }
    builder.add(std::move(item));
  }
  return std::move(builder).finish();
}

std::string serialize_corpus(std::span<const SeedItem> items) {
  std::string out;
  for (const auto& item : items) {
    out += "[ITEM tag=" + item.id + " kind=" + std::string(to_string(item.kind)) +
           "]\n[STATEMENT]\n" + item.statement + "\n";
    if (item.proof) out += "[PROOF]\n" + *item.proof + "\n";
    out += "[END]\n";
  }
  return out;
}

std::vector<SeedItem> sample_seeds(std::span<const SeedItem> items,
                                   std::size_t count, std::uint64_t seed) {
  if (count == 0) throw PreconditionError("sample count must be positive");
  if (count > items.size()) {
    throw PreconditionError("cannot sample " + std::to_string(count) +
                            " seeds from a corpus of " +
                            std::to_string(items.size()));
  }
  Rng rng(seed);
  std::vector<SeedItem> out;
  out.reserve(count);
  for (std::size_t idx : choose_subset(items.size(), count, rng)) {
    out.push_back(items[idx]);
  }
  return out;
}

std::string render_item(ItemKind kind, std::string_view statement,
                        std::optional<std::string_view> proof) {
  if (kind == ItemKind::Definition) {
    return "DEFINITION:\n" + std::string(statement);
  }
  return "PROPOSITION:\n" + std::string(statement) + "\nPROOF:\n" +
         std::string(proof.value_or(""));
}

std::string item_text(const SeedItem& item) {
  std::optional<std::string_view> proof;
  if (item.proof) proof = *item.proof;
  return render_item(item.kind, item.statement, proof);
}

std::optional<SplitItem> split_item_text(std::string_view text) {
  std::string body = strip_blank_lines(text);
  auto lines = split_lines(body);
  if (lines.empty()) return std::nullopt;
  const auto head = trim_right(lines.front().text);
  SplitItem out;
  if (head == "PROPOSITION:") {
    out.kind = ItemKind::PropositionProof;
    std::vector<std::string_view> stmt, proof;
    bool in_proof = false;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (!in_proof && trim_right(lines[i].text) == "PROOF:") {
        in_proof = true;
        continue;
      }
      (in_proof ? proof : stmt).push_back(lines[i].text);
    }
    if (!in_proof) return std::nullopt;
    out.statement = strip_blank_lines(join_lines(stmt));
    out.proof = strip_blank_lines(join_lines(proof));
    return out;
  }
  out.kind = ItemKind::Definition;
  if (head == "DEFINITION:") {
    std::vector<std::string_view> rest;
    for (std::size_t i = 1; i < lines.size(); ++i) rest.push_back(lines[i].text);
    out.statement = strip_blank_lines(join_lines(rest));
  } else {
    out.statement = body;
  }
  return out;
}

Json to_json(const SeedItem& item) {
  Json j;
  j["tag"] = item.id;
  j["kind"] = to_string(item.kind);
  j["statement"] = item.statement;
  if (item.proof) j["proof"] = *item.proof;
  j["source"] = {{"document", item.source.document},
                 {"offset", item.source.offset}};
  return j;
}

SeedItem seed_from_json(const Json& j) {
  SeedItem item;
  item.id = j.at("tag").get<std::string>();
  item.kind = parse_item_kind(j.at("kind").get<std::string>());
  item.statement = j.at("statement").get<std::string>();
  if (j.contains("proof")) item.proof = j.at("proof").get<std::string>();
  if (j.contains("source")) {
    item.source.document = j["source"].value("document", "");
    item.source.offset = j["source"].value("offset", std::uint64_t{0});
  }
  validate_seed(item);
  return item;
}

}  // namespace hybridbench
