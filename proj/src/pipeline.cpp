#include "hybridbench/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <unordered_map>

#include "hybridbench/assemble.hpp"
#include "hybridbench/corpus.hpp"
#include "hybridbench/distract.hpp"
#include "hybridbench/error.hpp"
#include "hybridbench/evaluate.hpp"
#include "hybridbench/judge.hpp"
#include "hybridbench/rng.hpp"
#include "hybridbench/score.hpp"

namespace fs = std::filesystem;

namespace hybridbench {

namespace {

constexpr const char* kManifest = "manifest.json";

struct StageInfo {
  Stage stage;
  const char* name;
  std::vector<std::string> outputs;
  std::vector<std::string> inputs;  // upstream artifacts
};

const std::vector<StageInfo>& stage_table() {
  static const std::vector<StageInfo> table = {
      {Stage::Ingest, "ingest", {"seeds.jsonl", "ingest_report.json"}, {}},
      {Stage::FilterSeeds,
       "filter-seeds",
       {"seeds_accepted.jsonl", "seed_tallies.jsonl", "seed_verdicts.jsonl"},
       {"seeds.jsonl"}},
      {Stage::Generate,
       "generate",
       {"distractors.jsonl", "generate_report.json"},
       {"seeds_accepted.jsonl"}},
      {Stage::FilterDistractors,
       "filter-distractors",
       {"distractors_accepted.jsonl", "distractor_tallies.jsonl",
        "distractor_verdicts.jsonl"},
       {"distractors.jsonl"}},
      {Stage::Assemble,
       "assemble",
       {"questions.jsonl", "mcq.jsonl", "residual.json"},
       {"seeds_accepted.jsonl", "distractors_accepted.jsonl"}},
      {Stage::EvalGen, "eval-gen", {"eval_gen.jsonl"}, {"questions.jsonl"}},
      {Stage::EvalPpl, "eval-ppl", {"eval_ppl.jsonl"}, {"mcq.jsonl"}},
      {Stage::Score,
       "score",
       {"report.json", "leaderboard.csv"},
       {"questions.jsonl", "mcq.jsonl", "eval_gen.jsonl", "eval_ppl.jsonl"}},
  };
  return table;
}

const StageInfo& info(Stage stage) {
  for (const auto& s : stage_table()) {
    if (s.stage == stage) return s;
  }
  throw Error("unknown stage");
}

// Stage that writes a given artifact.
const StageInfo* producer(const std::string& artifact) {
  for (const auto& s : stage_table()) {
    for (const auto& out : s.outputs) {
      if (out == artifact) return &s;
    }
  }
  return nullptr;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string dump_pretty(const Json& j) { return j.dump(2) + "\n"; }

std::vector<SeedItem> read_seeds(const std::string& text, std::string_view name) {
  std::vector<SeedItem> out;
  for (const auto& row : parse_jsonl(text, name)) out.push_back(seed_from_json(row));
  return out;
}

std::vector<Distractor> read_distractors(const std::string& text, std::string_view name) {
  std::vector<Distractor> out;
  for (const auto& row : parse_jsonl(text, name)) out.push_back(distractor_from_json(row));
  return out;
}

}  // namespace

std::string_view to_string(Stage stage) { return info(stage).name; }

Stage parse_stage(std::string_view name) {
  for (const auto& s : stage_table()) {
    if (name == s.name) return s.stage;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

const std::vector<std::string>& stage_outputs(Stage stage) { return info(stage).outputs; }

Json prompt_template_hashes() {
  Json j;
  j["verdict"] = sha256_hex(kVerdictPromptTemplate);
  j["generation"] = sha256_hex(kGenerationPromptTemplate);
  j["evaluation"] = sha256_hex(kEvalPromptTemplate);
  j["perplexity_stem"] = sha256_hex(kPerplexityStem);
  return j;
}

Pipeline::Pipeline(PipelineConfig config, fs::path run_dir,
                   std::optional<std::string> mock_script)
    : config_(std::move(config)),
      run_dir_(std::move(run_dir)),
      mock_script_(std::move(mock_script)) {
  validate_config(config_);
  config_hash_ = config_hash(config_);
  if (mock_script_) backend_ = MockBackend::from_jsonl(*mock_script_);
  fs::create_directories(run_dir_);
  cache_ = std::make_shared<ResponseCache>(run_dir_ / "cache");
  load_manifest();
}

void Pipeline::load_manifest() {
  const fs::path path = run_dir_ / kManifest;
  const Json mock_hash = mock_script_ ? Json(sha256_hex(*mock_script_)) : Json(nullptr);
  if (!fs::exists(path)) {
    manifest_ = Json::object();
    manifest_["version"] = 1;
    manifest_["config_hash"] = config_hash_;
    manifest_["rng_seed"] = config_.rng_seed;
    manifest_["mock_script_hash"] = mock_hash;
    manifest_["config"] = to_json(config_);
    manifest_["decode"] = config_.decode;
    manifest_["prompt_templates"] = prompt_template_hashes();
    manifest_["perplexity_stem"] = kPerplexityStem;
    manifest_["stages"] = Json::object();
    return;
  }
  try {
    manifest_ = Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("run directory has an unreadable manifest: " + std::string(e.what()));
  }
  if (manifest_.value("config_hash", std::string()) != config_hash_) {
    throw ConfigError("config hash mismatch with " + path.string() +
                      "; refusing to resume (use a new run directory)");
  }
  if (manifest_.value("mock_script_hash", Json(nullptr)) != mock_hash) {
    throw ConfigError("mock script differs from the one recorded in " + path.string() +
                      "; refusing to resume");
  }
}

void Pipeline::save_manifest() {
  write_file_atomic(run_dir_ / kManifest, dump_pretty(manifest_));
}

std::uint64_t Pipeline::stage_seed(Stage stage) const {
  return derive_seed(config_.rng_seed, to_string(stage));
}

std::string Pipeline::artifact(const std::string& name) const {
  const fs::path path = run_dir_ / name;
  if (!fs::exists(path)) {
    const StageInfo* p = producer(name);
    throw StageError("missing upstream artifact " + name + "; run stage " +
                         (p ? p->name : "?") + " first",
                     p ? p->name : "");
  }
  return read_file(path);
}

std::map<std::string, std::string> Pipeline::stage_inputs(Stage stage) const {
  std::map<std::string, std::string> inputs;
  if (stage == Stage::Ingest) {
    for (std::size_t i = 0; i < config_.corpus.size(); ++i) {
      const auto& path = config_.corpus[i];
      std::string text;
      try {
        text = read_file(path);
      } catch (const Error&) {
        throw ConfigError("cannot read corpus file " + path.string());
      }
      inputs["corpus/" + std::to_string(i) + "/" + path.filename().string()] =
          sha256_hex(text);
    }
    return inputs;
  }
  for (const auto& name : info(stage).inputs) {
    const fs::path path = run_dir_ / name;
    inputs[name] = fs::exists(path) ? sha256_hex(read_file(path)) : std::string();
  }
  return inputs;
}

void Pipeline::check_upstream(Stage stage) const {
  for (const auto& name : info(stage).inputs) {
    const StageInfo* p = producer(name);
    const std::string pname = p ? p->name : "";
    if (!fs::exists(run_dir_ / name)) {
      throw StageError("missing upstream artifact " + name + "; run stage " + pname +
                           " first",
                       pname);
    }
    const Json& stages = manifest_["stages"];
    if (!stages.contains(pname) || !stages[pname]["outputs"].contains(name)) {
      throw StageError("artifact " + name + " is not recorded in the manifest; run stage " +
                           pname + " first",
                       pname);
    }
    if (stages[pname]["outputs"][name].get<std::string>() !=
        sha256_hex(read_file(run_dir_ / name))) {
      throw StageError("artifact " + name + " does not match the manifest hash", pname);
    }
  }
}

bool Pipeline::up_to_date(Stage stage,
                          const std::map<std::string, std::string>& inputs) const {
  const Json& stages = manifest_["stages"];
  const std::string name(to_string(stage));
  if (!stages.contains(name)) return false;
  const Json& rec = stages[name];
  if (rec.value("inputs", Json::object()) != Json(inputs)) return false;
  for (const auto& out : info(stage).outputs) {
    const fs::path path = run_dir_ / out;
    if (!rec["outputs"].contains(out) || !fs::exists(path)) return false;
    if (rec["outputs"][out].get<std::string>() != sha256_hex(read_file(path))) return false;
  }
  return true;
}

Provider& Pipeline::provider(const std::string& name) {
  if (auto it = providers_.find(name); it != providers_.end()) return *it->second;
  const ProviderSpec& spec = config_.provider(name);
  std::shared_ptr<Backend> backend = backend_;
  if (!backend) {
    if (spec.adapter == "mock") {
      throw ConfigError("provider '" + name + "' uses the mock adapter; pass --mock-script");
    }
    backend = std::make_shared<HttpBackend>();
  }
  RetryPolicy retry;
  retry.base_delay = std::chrono::milliseconds(config_.retry_base_delay_ms);
  auto p = std::make_unique<Provider>(spec, backend, cache_, retry, config_.decode);
  Provider& ref = *p;
  providers_.emplace(name, std::move(p));
  return ref;
}

std::vector<Provider*> Pipeline::providers(const std::vector<std::string>& names) {
  std::vector<Provider*> out;
  for (const auto& n : names) out.push_back(&provider(n));
  return out;
}

StageResult Pipeline::run_stage(Stage stage, bool force) {
  check_upstream(stage);
  const auto inputs = stage_inputs(stage);
  StageResult result{stage, false, info(stage).outputs, {}};
  if (!force && up_to_date(stage, inputs)) return result;

  std::size_t calls_before = 0, hits_before = 0;
  for (const auto& [_, p] : providers_) {
    calls_before += p->upstream_calls();
    hits_before += p->cache_hits();
  }

  Produced produced = execute(stage);

  for (const auto& [name, contents] : produced.files) {
    const fs::path path = run_dir_ / name;
    if (fs::exists(path) && read_file(path) != contents) {
      throw StageError("artifact " + name +
                           " already exists with different contents; artifacts are "
                           "immutable, use a new run directory",
                       std::string(to_string(stage)));
    }
  }
  Json outputs = Json::object();
  for (const auto& name : info(stage).outputs) {
    const std::string& contents = produced.files.at(name);
    write_file_atomic(run_dir_ / name, contents);
    outputs[name] = sha256_hex(contents);
  }

  std::size_t calls_after = 0, hits_after = 0;
  for (const auto& [_, p] : providers_) {
    calls_after += p->upstream_calls();
    hits_after += p->cache_hits();
  }
  Json rec;
  rec["inputs"] = Json(inputs);
  rec["outputs"] = std::move(outputs);
  rec["stage_seed"] = stage_seed(stage);
  rec["upstream_requests"] = calls_after - calls_before;
  rec["cache_hits"] = hits_after - hits_before;
  rec["notes"] = produced.notes;
  rec["completed_at"] = utc_now();
  manifest_["stages"][std::string(to_string(stage))] = std::move(rec);
  save_manifest();

  result.executed = true;
  result.notes = std::move(produced.notes);
  return result;
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> results;
  bool force = false;
  for (Stage stage : kAllStages) {
    results.push_back(run_stage(stage, force));
    force = force || results.back().executed;
  }
  return results;
}

fs::path Pipeline::export_public(std::optional<fs::path> out) {
  const fs::path target = out.value_or(run_dir_ / "questions_public.jsonl");
  std::vector<Json> rows;
  for (const auto& row : parse_jsonl(artifact("questions.jsonl"), "questions.jsonl")) {
    rows.push_back(to_public_json(hybrid_from_json(row)));
  }
  write_file_atomic(target, to_jsonl(rows));
  return target;
}

Pipeline::Produced Pipeline::execute(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return do_ingest();
    case Stage::FilterSeeds: return do_filter_seeds();
    case Stage::Generate: return do_generate();
    case Stage::FilterDistractors: return do_filter_distractors();
    case Stage::Assemble: return do_assemble();
    case Stage::EvalGen: return do_eval_gen();
    case Stage::EvalPpl: return do_eval_ppl();
    case Stage::Score: return do_score();
  }
  throw Error("unknown stage");
}

Pipeline::Produced Pipeline::do_ingest() {
  if (config_.corpus.empty()) throw ConfigError("paths.corpus lists no corpus files");
  std::vector<SeedItem> items;
  std::unordered_map<std::string, std::string> owner;
  Json documents = Json::array();
  for (const auto& path : config_.corpus) {
    const std::string text = read_file(path);
    const std::string doc = path.filename().string();
    ParsedCorpus parsed = path.extension() == ".jsonl" ? parse_corpus_jsonl(text, doc)
                                                       : parse_corpus(text, doc);
    Json diags = Json::array();
    for (const auto& d : parsed.diagnostics) {
      diags.push_back({{"offset", d.offset}, {"message", d.message}});
    }
    documents.push_back(
        {{"document", doc}, {"items", parsed.items.size()}, {"diagnostics", diags}});
    for (auto& item : parsed.items) {
      auto [it, inserted] = owner.emplace(item.id, doc);
      if (!inserted) {
        throw CorpusError("duplicate tag '" + item.id + "' in " + it->second + " and " + doc);
      }
      items.push_back(std::move(item));
    }
  }
  const std::size_t ingested = items.size();
  if (config_.sample > 0) {
    items = sample_seeds(items, config_.sample, stage_seed(Stage::Ingest));
  }
  std::vector<Json> rows;
  for (const auto& item : items) rows.push_back(to_json(item));

  Json report;
  report["documents"] = std::move(documents);
  report["ingested"] = ingested;
  report["kept"] = items.size();
  Produced p;
  p.files["seeds.jsonl"] = to_jsonl(rows);
  p.files["ingest_report.json"] = dump_pretty(report);
  p.notes.push_back(std::to_string(items.size()) + " seeds");
  return p;
}

namespace {

struct FilterOutput {
  std::vector<Json> verdicts;
  std::vector<Json> tallies;
  std::vector<bool> accepted;
};

template <typename Accept>
FilterOutput run_filter(std::span<const JudgedItem> items, std::span<Provider* const> judges,
                        int rounds, std::string_view stage, int reasks, Accept&& accept) {
  auto collected = collect_verdicts(items, judges, rounds, stage, reasks);
  std::vector<std::string> failures;
  for (const auto& c : collected) {
    for (const auto& f : c.failures) failures.push_back(c.tally.item_id + ": " + f);
  }
  if (!failures.empty()) {
    std::string msg = std::to_string(failures.size()) +
                      " judge requests failed; tallies are incomplete (re-run to "
                      "retry, successful responses are cached). First: " +
                      failures.front();
    throw StageError(msg, std::string(stage));
  }
  FilterOutput out;
  for (const auto& c : collected) {
    for (const auto& v : c.verdicts) out.verdicts.push_back(to_json(v));
    const bool ok = accept(c.tally);
    Json t = to_json(c.tally);
    t["accepted"] = ok;
    out.tallies.push_back(std::move(t));
    out.accepted.push_back(ok);
  }
  return out;
}

}  // namespace

Pipeline::Produced Pipeline::do_filter_seeds() {
  const auto seeds = read_seeds(artifact("seeds.jsonl"), "seeds.jsonl");
  std::vector<JudgedItem> items;
  for (const auto& s : seeds) items.push_back({s.id, item_text(s)});
  auto judges = providers(config_.roles.seed_judges);
  auto out = run_filter(items, judges, config_.filter.n1(), "judge-seed",
                        config_.verdict_reasks,
                        [&](const VerdictTally& t) { return filter_seed(t, config_.filter); });
  std::vector<Json> accepted;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (out.accepted[i]) accepted.push_back(to_json(seeds[i]));
  }
  Produced p;
  p.files["seeds_accepted.jsonl"] = to_jsonl(accepted);
  p.files["seed_tallies.jsonl"] = to_jsonl(out.tallies);
  p.files["seed_verdicts.jsonl"] = to_jsonl(out.verdicts);
  p.notes.push_back(std::to_string(accepted.size()) + "/" + std::to_string(seeds.size()) +
                    " seeds accepted");
  return p;
}

Pipeline::Produced Pipeline::do_generate() {
  const auto seeds = read_seeds(artifact("seeds_accepted.jsonl"), "seeds_accepted.jsonl");
  auto gens = providers(config_.roles.generators);
  GenerationReport report =
      generate_distractors(seeds, gens, config_.generation, stage_seed(Stage::Generate));
  if (!report.failures.empty()) {
    throw StageError(std::to_string(report.failures.size()) +
                         " generation requests failed (re-run to retry). First: " +
                         report.failures.front(),
                     "generate");
  }
  std::unordered_map<std::string, std::string> origin_fp;
  for (const auto& s : seeds) origin_fp.emplace(s.id, normalize_fingerprint(item_text(s)));
  const auto kept = dedup(report.distractors, origin_fp);

  std::vector<Json> rows;
  for (const auto& d : kept) rows.push_back(to_json(d));
  Json summary;
  summary["selected"] = report.distractors.size();
  summary["after_dedup"] = kept.size();
  summary["discarded"] = report.discarded;
  summary["warnings"] = report.warnings;
  Produced p;
  p.files["distractors.jsonl"] = to_jsonl(rows);
  p.files["generate_report.json"] = dump_pretty(summary);
  p.notes.push_back(std::to_string(kept.size()) + " distractors after dedup");
  for (const auto& w : report.warnings) p.notes.push_back("warning: " + w);
  return p;
}

Pipeline::Produced Pipeline::do_filter_distractors() {
  const auto distractors = read_distractors(artifact("distractors.jsonl"), "distractors.jsonl");
  std::vector<JudgedItem> items;
  for (const auto& d : distractors) items.push_back({d.id, d.text});
  auto judges = providers(config_.roles.distractor_judges);
  auto out = run_filter(
      items, judges, config_.filter.n3(), "judge-distractor", config_.verdict_reasks,
      [&](const VerdictTally& t) { return filter_distractor(t, config_.filter); });
  std::vector<Json> accepted;
  for (std::size_t i = 0; i < distractors.size(); ++i) {
    if (out.accepted[i]) accepted.push_back(to_json(distractors[i]));
  }
  Produced p;
  p.files["distractors_accepted.jsonl"] = to_jsonl(accepted);
  p.files["distractor_tallies.jsonl"] = to_jsonl(out.tallies);
  p.files["distractor_verdicts.jsonl"] = to_jsonl(out.verdicts);
  p.notes.push_back(std::to_string(accepted.size()) + "/" +
                    std::to_string(distractors.size()) + " distractors accepted");
  return p;
}

Pipeline::Produced Pipeline::do_assemble() {
  const auto seeds = read_seeds(artifact("seeds_accepted.jsonl"), "seeds_accepted.jsonl");
  const auto distractors =
      read_distractors(artifact("distractors_accepted.jsonl"), "distractors_accepted.jsonl");
  std::vector<PoolItem> seed_pool, distractor_pool;
  for (const auto& s : seeds) seed_pool.push_back(pool_item(s));
  for (const auto& d : distractors) distractor_pool.push_back(pool_item(d));

  const std::uint64_t seed = stage_seed(Stage::Assemble);
  AssemblyResult hybrid = assemble_hybrid(seed_pool, distractor_pool, config_.m, config_.n,
                                          derive_seed(seed, "hybrid"));
  McqBank bank = build_mcq_bank(seeds, distractors, derive_seed(seed, "mcq"));

  std::vector<Json> questions, mcq;
  for (const auto& q : hybrid.questions) questions.push_back(to_json(q));
  for (const auto& q : bank.questions) mcq.push_back(to_json(q));
  Json residual;
  residual["seeds"] = Json::array();
  residual["distractors"] = Json::array();
  for (const auto& s : hybrid.residual_seeds) residual["seeds"].push_back(s.id);
  for (const auto& d : hybrid.residual_distractors) residual["distractors"].push_back(d.id);
  residual["mcq_excluded"] = bank.excluded;

  Produced p;
  p.files["questions.jsonl"] = to_jsonl(questions);
  p.files["mcq.jsonl"] = to_jsonl(mcq);
  p.files["residual.json"] = dump_pretty(residual);
  p.notes.push_back(std::to_string(hybrid.questions.size()) + " hybrid questions, " +
                    std::to_string(bank.questions.size()) + " MCQ questions");
  return p;
}

Pipeline::Produced Pipeline::do_eval_gen() {
  std::vector<HybridQuestion> questions;
  for (const auto& row : parse_jsonl(artifact("questions.jsonl"), "questions.jsonl")) {
    questions.push_back(hybrid_from_json(row));
  }
  std::vector<Json> rows;
  for (const auto& name : config_.roles.evaluees) {
    for (const auto& r : evaluate_generation(provider(name), questions)) {
      rows.push_back(to_json(r));
    }
  }
  Produced p;
  p.files["eval_gen.jsonl"] = to_jsonl(rows);
  return p;
}

Pipeline::Produced Pipeline::do_eval_ppl() {
  std::vector<McqQuestion> bank;
  for (const auto& row : parse_jsonl(artifact("mcq.jsonl"), "mcq.jsonl")) {
    bank.push_back(mcq_from_json(row));
  }
  Produced p;
  std::vector<Json> rows;
  for (const auto& name : config_.roles.evaluees) {
    Provider& model = provider(name);
    if (!model.spec().token_scoring) {
      p.notes.push_back("skipped " + name + ": no token scoring");
      continue;
    }
    for (const auto& r : evaluate_perplexity(model, bank)) rows.push_back(to_json(r));
  }
  p.files["eval_ppl.jsonl"] = to_jsonl(rows);
  return p;
}

Pipeline::Produced Pipeline::do_score() {
  std::vector<HybridQuestion> questions;
  for (const auto& row : parse_jsonl(artifact("questions.jsonl"), "questions.jsonl")) {
    questions.push_back(hybrid_from_json(row));
  }
  std::vector<McqQuestion> bank;
  for (const auto& row : parse_jsonl(artifact("mcq.jsonl"), "mcq.jsonl")) {
    bank.push_back(mcq_from_json(row));
  }
  std::map<std::string, std::vector<GenEvalRecord>> gen;
  std::map<std::string, std::vector<PplEvalRecord>> ppl;
  for (const auto& row : parse_jsonl(artifact("eval_gen.jsonl"), "eval_gen.jsonl")) {
    auto r = gen_record_from_json(row);
    gen[r.model].push_back(std::move(r));
  }
  for (const auto& row : parse_jsonl(artifact("eval_ppl.jsonl"), "eval_ppl.jsonl")) {
    auto r = ppl_record_from_json(row);
    ppl[r.model].push_back(std::move(r));
  }
  std::vector<ScoreReport> reports;
  for (const auto& name : config_.roles.evaluees) {
    if (auto it = gen.find(name); it != gen.end()) {
      reports.push_back(aggregate_generation(it->second, questions, config_.exclude_failed));
    }
    if (auto it = ppl.find(name); it != ppl.end()) {
      reports.push_back(aggregate_perplexity(it->second, bank));
    }
  }
  Json all = Json::array();
  for (const auto& r : reports) all.push_back(to_json(r));
  Produced p;
  p.files["report.json"] = dump_pretty(all);
  p.files["leaderboard.csv"] = to_csv(reports);
  return p;
}

}  // namespace hybridbench
