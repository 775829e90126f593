#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hybridbench/config.hpp"
#include "hybridbench/provider.hpp"

namespace hybridbench {

enum class Stage {
  Ingest,
  FilterSeeds,
  Generate,
  FilterDistractors,
  Assemble,
  EvalGen,
  EvalPpl,
  Score,
};

inline constexpr std::array<Stage, 8> kAllStages = {
    Stage::Ingest,   Stage::FilterSeeds, Stage::Generate, Stage::FilterDistractors,
    Stage::Assemble, Stage::EvalGen,     Stage::EvalPpl,  Stage::Score};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

// Files a stage writes into the run directory; the first is its primary
// artifact.
const std::vector<std::string>& stage_outputs(Stage stage);

struct StageResult {
  Stage stage;
  bool executed = false;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
};

// Stage-by-stage runner over a single-writer run directory. Every stage
// records in manifest.json the hashes of its inputs and outputs; a stage
// whose inputs and outputs still match is skipped. Timestamps appear only in
// the manifest.
class Pipeline {
 public:
  // With mock_script set, every provider binding is served by one
  // MockBackend built from that JSONL text.
  Pipeline(PipelineConfig config, std::filesystem::path run_dir,
           std::optional<std::string> mock_script = std::nullopt);

  StageResult run_stage(Stage stage, bool force = false);
  // Runs every stage in order; once one executes, all later ones do too.
  std::vector<StageResult> run_all();
  // Writes the question bank without truth labels or origins.
  std::filesystem::path export_public(std::optional<std::filesystem::path> out = {});

  const std::filesystem::path& run_dir() const { return run_dir_; }
  const PipelineConfig& config() const { return config_; }

 private:
  struct Produced {
    std::map<std::string, std::string> files;  // name -> contents
    std::vector<std::string> notes;
  };

  Produced execute(Stage stage);
  Produced do_ingest();
  Produced do_filter_seeds();
  Produced do_generate();
  Produced do_filter_distractors();
  Produced do_assemble();
  Produced do_eval_gen();
  Produced do_eval_ppl();
  Produced do_score();

  std::map<std::string, std::string> stage_inputs(Stage stage) const;
  bool up_to_date(Stage stage, const std::map<std::string, std::string>& inputs) const;
  void check_upstream(Stage stage) const;

  Provider& provider(const std::string& name);
  std::vector<Provider*> providers(const std::vector<std::string>& names);

  std::string artifact(const std::string& name) const;
  std::uint64_t stage_seed(Stage stage) const;

  void load_manifest();
  void save_manifest();

  PipelineConfig config_;
  std::filesystem::path run_dir_;
  std::optional<std::string> mock_script_;
  std::string config_hash_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  std::map<std::string, std::unique_ptr<Provider>> providers_;
  Json manifest_;
};

// Hashes of every prompt template, recorded in the manifest.
Json prompt_template_hashes();

}  // namespace hybridbench
