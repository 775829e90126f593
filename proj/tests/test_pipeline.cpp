#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <map>

#include "hybridbench/config.hpp"
#include "hybridbench/error.hpp"
#include "hybridbench/pipeline.hpp"
#include "support.hpp"

using namespace hybridbench;
namespace fs = std::filesystem;

namespace {

PipelineConfig fixture_config() { return load_config(hbtest::fixture("config.toml")); }
std::string fixture_script() { return read_file(hbtest::fixture("mock_script.jsonl")); }

std::map<std::string, std::string> tree(const fs::path& dir, bool with_manifest = false) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).string();
    if (!with_manifest && rel == "manifest.json") continue;
    out[rel] = read_file(e.path());
  }
  return out;
}

std::vector<std::string> executed(const std::vector<StageResult>& results) {
  std::vector<std::string> out;
  for (const auto& r : results) {
    if (r.executed) out.emplace_back(to_string(r.stage));
  }
  return out;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + HB_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

}  // namespace

TEST_CASE("run-all produces every artifact and a complete manifest") {
  hbtest::TempDir dir;
  Pipeline p(fixture_config(), dir / "run", fixture_script());
  auto results = p.run_all();
  REQUIRE(results.size() == kAllStages.size());
  CHECK(executed(results).size() == kAllStages.size());
  for (Stage s : kAllStages) {
    for (const auto& f : stage_outputs(s)) CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
  }
  const Json m = Json::parse(read_file(dir / "run" / "manifest.json"));
  CHECK(m["config_hash"] == config_hash(fixture_config()));
  CHECK(m["rng_seed"] == 20250801u);
  CHECK(m["decode"]["max_tokens"] == 4096);
  CHECK(m["prompt_templates"] == prompt_template_hashes());
  CHECK(m["prompt_templates"].size() >= 4);
  for (Stage s : kAllStages) {
    const auto& entry = m["stages"][std::string(to_string(s))];
    CHECK(entry.contains("inputs"));
    CHECK(entry.contains("outputs"));
    CHECK(entry.contains("stage_seed"));
    CHECK(entry.contains("completed_at"));
  }

  const auto questions = parse_jsonl(read_file(dir / "run" / "questions.jsonl"), "q");
  CHECK(!questions.empty());
  for (const auto& q : questions) {
    int truths = 0;
    for (const auto& e : q["items"]) truths += e["truth"].get<bool>();
    CHECK(truths == 2);
    CHECK(q["items"].size() == 6);
  }
  const Json report = Json::parse(read_file(dir / "run" / "report.json"));
  CHECK(report.is_array());
  CHECK(report.size() == 3);
  CHECK(read_file(dir / "run" / "leaderboard.csv").rfind("model,protocol,", 0) == 0);
}

TEST_CASE("resume skips finished stages and rebuilds only what is missing") {
  hbtest::TempDir dir;
  {
    Pipeline p(fixture_config(), dir / "run", fixture_script());
    p.run_all();
  }
  const auto before = tree(dir / "run");
  {
    Pipeline p(fixture_config(), dir / "run", fixture_script());
    CHECK(executed(p.run_all()).empty());
  }
  fs::remove(dir / "run" / "questions.jsonl");
  {
    Pipeline p(fixture_config(), dir / "run", fixture_script());
    CHECK(executed(p.run_all()) ==
          std::vector<std::string>{"assemble", "eval-gen", "eval-ppl", "score"});
  }
  CHECK(tree(dir / "run") == before);
  {
    Pipeline p(fixture_config(), dir / "run", fixture_script());
    CHECK(p.run_stage(Stage::Assemble, true).executed);
    CHECK_FALSE(p.run_stage(Stage::Ingest).executed);
  }
}

TEST_CASE("two runs are byte-identical apart from the manifest") {
  hbtest::TempDir a, b;
  Pipeline(fixture_config(), a / "run", fixture_script()).run_all();
  Pipeline(fixture_config(), b / "run", fixture_script()).run_all();
  CHECK(tree(a / "run") == tree(b / "run"));
}

TEST_CASE("resume refuses a different configuration or mock script") {
  hbtest::TempDir dir;
  Pipeline(fixture_config(), dir / "run", fixture_script()).run_stage(Stage::Ingest);
  auto other = fixture_config();
  other.rng_seed = 7;
  CHECK_THROWS_AS(Pipeline(other, dir / "run", fixture_script()), ConfigError);
  CHECK_THROWS_AS(Pipeline(fixture_config(), dir / "run", fixture_script() + "\n{\"stage\":\"x\",\"response\":\"y\"}\n"),
                  ConfigError);
}

TEST_CASE("a stage names the missing upstream stage") {
  hbtest::TempDir dir;
  Pipeline p(fixture_config(), dir / "run", fixture_script());
  try {
    p.run_stage(Stage::Assemble);
    FAIL("assemble ran without inputs");
  } catch (const StageError& e) {
    CHECK(e.stage() == "filter-seeds");
    CHECK(std::string(e.what()).find("seeds_accepted.jsonl") != std::string::npos);
  }
  p.run_stage(Stage::Ingest);
  CHECK_THROWS_AS(p.run_stage(Stage::Generate), StageError);
}

TEST_CASE("artifacts are immutable") {
  hbtest::TempDir dir;
  Pipeline p(fixture_config(), dir / "run", fixture_script());
  p.run_stage(Stage::Ingest);
  {
    std::ofstream f(dir / "run" / "seeds.jsonl", std::ios::app);
    f << "{}\n";
  }
  CHECK_THROWS_AS(p.run_stage(Stage::Ingest), StageError);
  CHECK_THROWS_AS(p.run_stage(Stage::FilterSeeds), StageError);
}

TEST_CASE("export omits truth labels and origins") {
  hbtest::TempDir dir;
  Pipeline p(fixture_config(), dir / "run", fixture_script());
  p.run_all();
  const auto out = p.export_public();
  const auto rows = parse_jsonl(read_file(out), "export");
  const auto full = parse_jsonl(read_file(dir / "run" / "questions.jsonl"), "q");
  REQUIRE(rows.size() == full.size());
  for (const auto& q : rows) {
    for (const auto& e : q["items"]) {
      CHECK_FALSE(e.contains("truth"));
      CHECK_FALSE(e.contains("origin"));
    }
  }
  CHECK(read_file(out).find("\"truth\"") == std::string::npos);
}

TEST_CASE("mock adapter without a script is a configuration error") {
  hbtest::TempDir dir;
  Pipeline p(fixture_config(), dir / "run");
  p.run_stage(Stage::Ingest);
  CHECK_THROWS_AS(p.run_stage(Stage::FilterSeeds), ConfigError);
}

TEST_CASE("command line interface") {
  hbtest::TempDir dir;
  const std::string common = "--config \"" + hbtest::fixture("config.toml").string() +
                             "\" --run-dir \"" + (dir / "run").string() + "\"";
  const std::string mock = " --mock-script \"" + hbtest::fixture("mock_script.jsonl").string() + "\"";

  auto r = cli(common + mock + " assemble", dir.path());
  CHECK(r.code == 1);
  const Json err = Json::parse(r.err);
  CHECK(err["error"] == "stage");
  CHECK(err["stage"] == "assemble");
  CHECK(err["required_stage"] == "filter-seeds");

  r = cli(common + mock + " ingest", dir.path());
  CHECK(r.code == 0);
  CHECK(Json::parse(r.out)["executed"] == true);
  r = cli(common + mock + " ingest", dir.path());
  CHECK(Json::parse(r.out)["executed"] == false);
  r = cli(common + mock + " ingest --force", dir.path());
  CHECK(Json::parse(r.out)["executed"] == true);

  r = cli(common + mock + " run-all", dir.path());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "run" / "leaderboard.csv"));
  r = cli(common + mock + " export --out \"" + (dir / "pub.jsonl").string() + "\"", dir.path());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "pub.jsonl"));

  r = cli("--config \"" + (dir / "absent.toml").string() + "\" ingest", dir.path());
  CHECK(r.code == 2);
  CHECK(Json::parse(r.err)["error"] == "config");

  r = cli(common + " bogus-stage", dir.path());
  CHECK(r.code != 0);
}
