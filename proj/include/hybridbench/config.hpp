#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hybridbench/distract.hpp"
#include "hybridbench/io.hpp"
#include "hybridbench/judge.hpp"
#include "hybridbench/provider.hpp"

namespace hybridbench {

struct RoleBindings {
  std::vector<std::string> seed_judges;
  std::vector<std::string> generators;
  std::vector<std::string> distractor_judges;
  std::vector<std::string> evaluees;
};

// Everything a run depends on. Defaults reproduce the parameters of the
// reference algebraic-geometry benchmark.
struct PipelineConfig {
  FilterParams filter = FilterParams::defaults();
  GenParams generation = GenParams::defaults();
  int m = 2;
  int n = 6;
  std::uint64_t rng_seed = 0;
  RoleBindings roles;
  std::vector<ProviderSpec> providers;
  std::vector<std::filesystem::path> corpus;
  // 0 keeps every ingested seed.
  std::size_t sample = 0;
  bool exclude_failed = false;
  int verdict_reasks = 2;
  // Passed through to chat requests.
  Json decode = Json::object();
  int retry_base_delay_ms = 500;

  const ProviderSpec& provider(std::string_view name) const;
};

// Throws ConfigError naming the violated constraint.
void validate_config(const PipelineConfig& config);

// Parses TOML. Relative corpus paths resolve against base_dir.
PipelineConfig parse_config(std::string_view toml_text,
                            const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical JSON of the effective configuration; its SHA-256 is the config
// hash recorded in run manifests.
Json to_json(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

}  // namespace hybridbench
