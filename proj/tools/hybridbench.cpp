#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "hybridbench/config.hpp"
#include "hybridbench/error.hpp"
#include "hybridbench/io.hpp"
#include "hybridbench/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hybridbench;

namespace {

int report_error(std::string_view kind, std::string_view message, std::string_view stage,
                 std::string_view required = {}) {
  Json j;
  j["error"] = kind;
  j["message"] = message;
  if (!stage.empty()) j["stage"] = stage;
  if (!required.empty() && required != stage) j["required_stage"] = required;
  std::cerr << j.dump() << "\n";
  return kind == "config" ? 2 : 1;
}

void print_result(const StageResult& r) {
  Json j;
  j["stage"] = to_string(r.stage);
  j["executed"] = r.executed;
  j["outputs"] = r.outputs;
  if (!r.notes.empty()) j["notes"] = r.notes;
  std::cout << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-question benchmark builder"};
  app.require_subcommand(1);

  std::string config_path = "hybridbench.toml";
  std::string run_dir = "run";
  std::string mock_path;
  bool force = false;
  app.add_option("--config", config_path, "Pipeline configuration (TOML)");
  app.add_option("--run-dir", run_dir, "Run directory");
  app.add_option("--mock-script", mock_path, "Serve every provider from a mock script");

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (Stage s : kAllStages) {
    auto* cmd = app.add_subcommand(std::string(to_string(s)), "Run the " +
                                                                  std::string(to_string(s)) +
                                                                  " stage");
    cmd->add_flag("--force", force, "Re-execute even if up to date");
    stage_cmds.emplace_back(cmd, s);
  }
  auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export", "Write the public question bank");
  export_cmd->add_option("--out", export_out, "Output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string current_stage;
  try {
    std::optional<std::string> mock;
    if (!mock_path.empty()) mock = read_file(mock_path);
    Pipeline pipeline(load_config(config_path), run_dir, mock);

    if (run_all->parsed()) {
      current_stage = "run-all";
      for (const auto& r : pipeline.run_all()) print_result(r);
      return 0;
    }
    if (export_cmd->parsed()) {
      std::optional<fs::path> out;
      if (!export_out.empty()) out = export_out;
      Json j;
      j["exported"] = pipeline.export_public(out).string();
      std::cout << j.dump() << "\n";
      return 0;
    }
    for (auto& [cmd, stage] : stage_cmds) {
      if (cmd->parsed()) {
        current_stage = std::string(to_string(stage));
        print_result(pipeline.run_stage(stage, force));
        return 0;
      }
    }
  } catch (const StageError& e) {
    return report_error(e.kind(), e.what(), current_stage, e.stage());
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), current_stage);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), current_stage);
  }
  return 0;
}
