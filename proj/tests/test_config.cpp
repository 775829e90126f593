#include "doctest.h"

#include <regex>

#include "hybridbench/config.hpp"
#include "hybridbench/error.hpp"
#include "support.hpp"

using namespace hybridbench;

namespace {

std::string fixture_text() { return read_file(hbtest::fixture("config.toml")); }

// Replaces the value of `key = ...` in the fixture config.
std::string with_param(const std::string& key, const std::string& value) {
  const std::regex line("(^|\n)" + key + " = [^\n]*");
  std::string out = std::regex_replace(fixture_text(), line, "$1" + key + " = " + value,
                                       std::regex_constants::format_first_only);
  REQUIRE(out != fixture_text());
  return out;
}

}  // namespace

TEST_CASE("fixture config loads with the reference parameters") {
  auto c = load_config(hbtest::fixture("config.toml"));
  CHECK(c.filter.m1() == 4);
  CHECK(c.filter.n1() == 3);
  CHECK(c.filter.k1() == 8);
  CHECK(c.generation.m2() == 5);
  CHECK(c.generation.n2() == 6);
  CHECK(c.generation.k2() == 2);
  CHECK(c.filter.m3() == 4);
  CHECK(c.filter.n3() == 3);
  CHECK(c.filter.k3() == 7);
  CHECK(c.filter.k4() == 10);
  CHECK(c.m == 2);
  CHECK(c.n == 6);
  CHECK(c.rng_seed == 20250801u);
  CHECK(c.roles.evaluees.size() == 2);
  CHECK(c.provider("e1").token_scoring);
  CHECK_FALSE(c.provider("e2").token_scoring);
  REQUIRE(c.corpus.size() == 1);
  CHECK(c.corpus[0] == hbtest::fixture("corpus.txt"));
  CHECK(c.retry_base_delay_ms == 1);
  CHECK(c.decode["max_tokens"] == 4096);
  CHECK_THROWS_AS(c.provider("nope"), ConfigError);
}

TEST_CASE("omitted params take the defaults") {
  const std::string text =
      "[roles]\nseed_judges=['a','b','c','d']\ngenerators=['a','b','c','d','e']\n"
      "distractor_judges=['a','b','c','d']\n"
      "[[providers]]\nname='a'\nadapter='mock'\n[[providers]]\nname='b'\nadapter='mock'\n"
      "[[providers]]\nname='c'\nadapter='mock'\n[[providers]]\nname='d'\nadapter='mock'\n"
      "[[providers]]\nname='e'\nadapter='mock'\n";
  auto c = parse_config(text);
  CHECK(to_json(c)["params"] == to_json(PipelineConfig{})["params"]);
  CHECK(c.verdict_reasks == 2);
}

TEST_CASE("filter constraints are enforced at load") {
  CHECK_THROWS_AS(parse_config(with_param("k1", "6")), ConfigError);
  CHECK_NOTHROW(parse_config(with_param("k1", "7")));
  CHECK_THROWS_AS(parse_config(with_param("k3", "6")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("k4", "11")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("k4", "6")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("k2", "7")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("k1", "0")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("k1", "\"x\"")), ConfigError);
  try {
    parse_config(with_param("k1", "6"));
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("k1") != std::string::npos);
  }
}

TEST_CASE("question shape constraints") {
  CHECK_THROWS_AS(parse_config(with_param("m", "0")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("m", "6")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("n", "27")), ConfigError);
}

TEST_CASE("role sizes must match the parameters") {
  CHECK_THROWS_AS(parse_config(with_param("seed_judges", "[\"j1\", \"j2\", \"j3\"]")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("generators", "[\"g1\", \"g2\"]")), ConfigError);
  CHECK_THROWS_AS(
      parse_config(with_param("distractor_judges", "[\"j1\", \"j1\", \"j3\", \"j4\"]")),
      ConfigError);
  CHECK_THROWS_AS(parse_config(with_param("evaluees", "[\"zz\"]")), ConfigError);
}

TEST_CASE("provider definitions are validated") {
  std::string text = fixture_text() + "[[providers]]\nname = \"e1\"\nadapter = \"mock\"\n";
  CHECK_THROWS_AS(parse_config(text), ConfigError);
  text = fixture_text() + "[[providers]]\nname = \"x\"\nadapter = \"carrier-pigeon\"\n";
  CHECK_THROWS_AS(parse_config(text), ConfigError);
  CHECK_THROWS_AS(parse_config("rng_seed = ["), ConfigError);
  CHECK_THROWS_AS(load_config(hbtest::fixture("missing.toml")), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const auto a = parse_config(fixture_text(), hbtest::fixture(""));
  const auto b = parse_config(fixture_text(), hbtest::fixture(""));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 64);
  CHECK(config_hash(parse_config(with_param("rng_seed", "1"))) != config_hash(a));
  CHECK(config_hash(parse_config(with_param("k1", "7"))) != config_hash(a));
  CHECK(config_hash(parse_config(with_param("max_tokens", "100"))) != config_hash(a));
}
