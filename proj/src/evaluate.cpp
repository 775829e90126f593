#include "hybridbench/evaluate.hpp"

#include <cctype>
#include <cmath>
#include <regex>

#include "hybridbench/corpus.hpp"
#include "hybridbench/error.hpp"
#include "hybridbench/parallel.hpp"

namespace hybridbench {

const char* const kEvalPromptTemplate =
    "Below are {n} items taken from mathematical texts. Each item is either a "
    "definition or a proposition together with its proof. Exactly {m} of the "
    "{n} items are mathematically correct; each of the others contains a "
    "mathematical error.\n"
    "\n"
    "{items}"
    "Judge the mathematical correctness of each item and identify the {m} "
    "correct ones. End your reply with a final line of the form\n"
    "ANSWER: {example}\n"
    "listing exactly {m} distinct labels separated by commas.\n";

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

// Parses "C, E" / "C,F" / "c e" into labels. Every token must be a label.
Picks parse_label_list(std::string_view content, int n, int m) {
  std::set<std::string> labels;
  std::string token;
  auto flush = [&]() -> bool {
    if (token.empty()) return true;
    std::string t = token;
    token.clear();
    while (!t.empty() && std::string_view("*$.()[]{}_`'\"").find(t.back()) != std::string_view::npos) t.pop_back();
    std::size_t start = 0;
    while (start < t.size() && std::string_view("*$.()[]{}_`'\"").find(t[start]) != std::string_view::npos) ++start;
    t = t.substr(start);
    if (t.empty()) return true;
    if (t.size() != 1 || !std::isalpha(static_cast<unsigned char>(t[0]))) return false;
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    if (c - 'A' >= n) return false;
    labels.insert(std::string(1, c));
    return true;
  };
  for (char ch : content) {
    if (ch == ',' || ch == ';' || std::isspace(static_cast<unsigned char>(ch))) {
      if (!flush()) return std::nullopt;
    } else {
      token.push_back(ch);
    }
  }
  if (!flush()) return std::nullopt;
  if (static_cast<int>(labels.size()) != m) return std::nullopt;
  return labels;
}

Picks rule_answer_line(std::string_view response, int n, int m) {
  static const std::regex kAnswer(R"(^\s*[*_#>]*\s*ANSWER\s*[*_]*\s*:(.*)$)",
                                  std::regex::icase);
  std::optional<std::string> last;
  for (auto line : lines_of(response)) {
    std::match_results<std::string_view::const_iterator> mr;
    if (std::regex_match(line.begin(), line.end(), mr, kAnswer)) last = mr[1].str();
  }
  if (!last) return std::nullopt;
  return parse_label_list(*last, n, m);
}

Picks rule_boxed(std::string_view response, int n, int m) {
  const auto pos = response.rfind("\\boxed{");
  if (pos == std::string_view::npos) return std::nullopt;
  const auto start = pos + 7;
  const auto end = response.find('}', start);
  if (end == std::string_view::npos) return std::nullopt;
  return parse_label_list(response.substr(start, end - start), n, m);
}

Picks rule_bare_line(std::string_view response, int n, int m) {
  auto lines = lines_of(response);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::set<std::string> labels;
    bool has_letters = false, valid = true;
    std::string_view line = *it;
    for (std::size_t i = 0; i < line.size() && valid;) {
      if (!std::isalpha(static_cast<unsigned char>(line[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < line.size() && std::isalpha(static_cast<unsigned char>(line[j]))) ++j;
      has_letters = true;
      const char c = line[i];
      if (j - i != 1 || !std::isupper(static_cast<unsigned char>(c)) || c - 'A' >= n) {
        valid = false;
      } else {
        labels.insert(std::string(1, c));
      }
      i = j;
    }
    if (!has_letters || !valid) continue;
    if (static_cast<int>(labels.size()) == m) return labels;
  }
  return std::nullopt;
}

}  // namespace

std::string build_eval_prompt(const HybridQuestion& question) {
  std::string items;
  for (const auto& e : question.items) {
    items += "Item " + e.label + ":\n" + e.text + "\n\n";
  }
  std::string example;
  for (int i = 0; i < question.m; ++i) {
    if (i) example += ",";
    example += "<label>";
  }
  std::string prompt = kEvalPromptTemplate;
  replace_all(prompt, "{items}", items);
  replace_all(prompt, "{n}", std::to_string(question.n));
  replace_all(prompt, "{m}", std::to_string(question.m));
  replace_all(prompt, "{example}", example);
  return prompt;
}

std::string build_eval_reask_prompt(const HybridQuestion& question) {
  return build_eval_prompt(question) +
         "\nReminder: your previous reply could not be graded. The last line "
         "of your reply must be `ANSWER: ` followed by exactly " +
         std::to_string(question.m) + " distinct labels separated by commas.\n";
}

Picks extract_picks(std::string_view response, int n, int m) {
  if (!(0 < m && m < n) || n > 26) return std::nullopt;
  if (auto p = rule_answer_line(response, n, m)) return p;
  if (auto p = rule_boxed(response, n, m)) return p;
  return rule_bare_line(response, n, m);
}

std::vector<GenEvalRecord> evaluate_generation(Provider& model,
                                               std::span<const HybridQuestion> questions) {
  std::vector<GenEvalRecord> records(questions.size());
  parallel_for(questions.size(), static_cast<std::size_t>(model.spec().max_concurrency),
               [&](std::size_t i) {
                 const HybridQuestion& q = questions[i];
                 GenEvalRecord& rec = records[i];
                 rec.question_id = q.id;
                 rec.model = model.spec().name;
                 try {
                   for (int attempt = 0; attempt < 2; ++attempt) {
                     CompletionRequest req{"eval-gen", q.id, 1, attempt,
                                           attempt == 0 ? build_eval_prompt(q)
                                                        : build_eval_reask_prompt(q)};
                     rec.raw = model.complete(req).text;
                     rec.picks = extract_picks(rec.raw, q.n, q.m);
                     if (rec.picks) break;
                   }
                 } catch (const ProviderError& e) {
                   rec.failed = true;
                   rec.picks.reset();
                   rec.raw = std::string(e.what()) + " [" + e.request_key() + "]";
                 }
                 rec.malformed = !rec.picks.has_value();
               });
  return records;
}

double option_perplexity(const TokenScore& score) {
  if (score.logprobs.empty()) {
    throw PreconditionError("option_perplexity: empty token list");
  }
  double sum = 0.0;
  for (double lp : score.logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(score.logprobs.size()));
}

Choice choose_lowest(std::span<const double> perplexities) {
  if (perplexities.empty()) throw PreconditionError("choose_lowest: no options");
  Choice c;
  for (std::size_t i = 1; i < perplexities.size(); ++i) {
    if (perplexities[i] < perplexities[static_cast<std::size_t>(c.index)]) {
      c.index = static_cast<int>(i);
    }
  }
  int count = 0;
  for (double p : perplexities) {
    if (p == perplexities[static_cast<std::size_t>(c.index)]) ++count;
  }
  c.tie = count > 1;
  return c;
}

const char* const kPerplexityStem = "Complete the following mathematical item:\n";

OptionScoringInput option_scoring_input(std::string_view option_text) {
  auto split = split_item_text(option_text);
  if (!split) return {"", std::string(option_text)};
  if (split->kind == ItemKind::PropositionProof) {
    return {std::string(kPerplexityStem) + "PROPOSITION:\n" + split->statement +
                "\nPROOF:\n",
            split->proof.value_or("")};
  }
  return {"", split->statement};
}

std::vector<PplEvalRecord> evaluate_perplexity(Provider& model,
                                               std::span<const McqQuestion> bank) {
  if (!model.spec().token_scoring) {
    throw CapabilityError("provider '" + model.spec().name +
                          "' does not support token scoring");
  }
  struct Task {
    std::size_t question;
    std::size_t option;
  };
  std::vector<Task> tasks;
  std::vector<PplEvalRecord> records(bank.size());
  for (std::size_t q = 0; q < bank.size(); ++q) {
    records[q].question_id = bank[q].id;
    records[q].model = model.spec().name;
    records[q].perplexities.assign(bank[q].options.size(), 0.0);
    for (std::size_t o = 0; o < bank[q].options.size(); ++o) tasks.push_back({q, o});
  }
  parallel_for(tasks.size(), static_cast<std::size_t>(model.spec().max_concurrency),
               [&](std::size_t t) {
                 const auto [q, o] = tasks[t];
                 OptionScoringInput in = option_scoring_input(bank[q].options[o]);
                 ScoreRequest req{"eval-ppl", bank[q].id, static_cast<int>(o) + 1,
                                  std::move(in.context), std::move(in.continuation)};
                 records[q].perplexities[o] = option_perplexity(model.score_tokens(req));
               });
  for (auto& r : records) {
    const Choice c = choose_lowest(r.perplexities);
    r.chosen = c.index;
    r.tie = c.tie;
  }
  return records;
}

Json to_json(const GenEvalRecord& r) {
  Json j;
  j["question_id"] = r.question_id;
  j["model"] = r.model;
  j["raw"] = r.raw;
  if (r.picks) {
    j["picks"] = std::vector<std::string>(r.picks->begin(), r.picks->end());
  } else {
    j["picks"] = nullptr;
  }
  j["malformed"] = r.malformed;
  if (r.failed) j["failed"] = true;
  return j;
}

GenEvalRecord gen_record_from_json(const Json& j) {
  GenEvalRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.raw = j.value("raw", std::string());
  if (j.contains("picks") && j["picks"].is_array()) {
    auto v = j["picks"].get<std::vector<std::string>>();
    r.picks = std::set<std::string>(v.begin(), v.end());
  }
  r.malformed = j.value("malformed", !r.picks.has_value());
  r.failed = j.value("failed", false);
  return r;
}

Json to_json(const PplEvalRecord& r) {
  Json j;
  j["question_id"] = r.question_id;
  j["model"] = r.model;
  j["perplexities"] = r.perplexities;
  j["chosen"] = r.chosen;
  j["tie"] = r.tie;
  return j;
}

PplEvalRecord ppl_record_from_json(const Json& j) {
  PplEvalRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.perplexities = j.at("perplexities").get<std::vector<double>>();
  r.chosen = j.at("chosen").get<int>();
  r.tie = j.value("tie", false);
  return r;
}

}  // namespace hybridbench
