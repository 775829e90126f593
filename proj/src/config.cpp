#include "hybridbench/config.hpp"

#include <set>

#define TOML_EXCEPTIONS 1
#include <toml++/toml.hpp>

#include "hybridbench/error.hpp"

namespace hybridbench {

const ProviderSpec& PipelineConfig::provider(std::string_view name) const {
  for (const auto& p : providers) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown provider '" + std::string(name) + "'");
}

void validate_config(const PipelineConfig& config) {
  if (!(0 < config.m && config.m < config.n)) {
    throw ConfigError("question shape requires 0 < m < n, got m=" +
                      std::to_string(config.m) + " n=" + std::to_string(config.n));
  }
  if (config.n > 26) throw ConfigError("n must be at most 26");
  if (config.verdict_reasks < 0) throw ConfigError("verdict_reasks must be >= 0");
  validate_provider_specs(config.providers);

  auto check_role = [&](const char* role, const std::vector<std::string>& names,
                        int expected) {
    if (expected >= 0 && static_cast<int>(names.size()) != expected) {
      throw ConfigError(std::string("role ") + role + " binds " +
                        std::to_string(names.size()) + " providers, expected " +
                        std::to_string(expected));
    }
    std::set<std::string> unique;
    for (const auto& name : names) {
      config.provider(name);
      if (!unique.insert(name).second) {
        throw ConfigError(std::string("role ") + role + " lists '" + name + "' twice");
      }
    }
  };
  check_role("seed_judges", config.roles.seed_judges, config.filter.m1());
  check_role("generators", config.roles.generators, config.generation.m2());
  check_role("distractor_judges", config.roles.distractor_judges, config.filter.m3());
  check_role("evaluees", config.roles.evaluees, -1);
}

namespace {

int get_int(const toml::table& t, std::string_view key, int fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  auto v = node->value<int64_t>();
  if (!v) throw ConfigError("'" + std::string(key) + "' must be an integer");
  return static_cast<int>(*v);
}

std::vector<std::string> get_strings(const toml::table& t, std::string_view key) {
  std::vector<std::string> out;
  const auto* node = t.get(key);
  if (!node) return out;
  if (auto s = node->value<std::string>()) {
    out.push_back(*s);
    return out;
  }
  const auto* arr = node->as_array();
  if (!arr) throw ConfigError("'" + std::string(key) + "' must be a string list");
  for (const auto& item : *arr) {
    auto s = item.value<std::string>();
    if (!s) throw ConfigError("'" + std::string(key) + "' must be a string list");
    out.push_back(*s);
  }
  return out;
}

Json toml_to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    Json j = Json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (auto a = node.as_array()) {
    Json j = Json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (auto v = node.value_exact<std::string>()) return *v;
  if (auto v = node.value_exact<int64_t>()) return *v;
  if (auto v = node.value_exact<double>()) return *v;
  if (auto v = node.value_exact<bool>()) return *v;
  throw ConfigError("unsupported TOML value in [decode]");
}

}  // namespace

PipelineConfig parse_config(std::string_view toml_text,
                            const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("config: ") + std::string(e.description()));
  }
  PipelineConfig c;
  if (auto seed = root["rng_seed"].value<int64_t>()) {
    c.rng_seed = static_cast<std::uint64_t>(*seed);
  }

  if (const auto* p = root["params"].as_table()) {
    const auto d = FilterParams::defaults();
    c.filter = FilterParams(get_int(*p, "m1", d.m1()), get_int(*p, "n1", d.n1()),
                            get_int(*p, "k1", d.k1()), get_int(*p, "m3", d.m3()),
                            get_int(*p, "n3", d.n3()), get_int(*p, "k3", d.k3()),
                            get_int(*p, "k4", d.k4()));
    const auto g = GenParams::defaults();
    c.generation = GenParams(get_int(*p, "m2", g.m2()), get_int(*p, "n2", g.n2()),
                             get_int(*p, "k2", g.k2()));
    c.m = get_int(*p, "m", c.m);
    c.n = get_int(*p, "n", c.n);
  }

  if (const auto* r = root["roles"].as_table()) {
    c.roles.seed_judges = get_strings(*r, "seed_judges");
    c.roles.generators = get_strings(*r, "generators");
    c.roles.distractor_judges = get_strings(*r, "distractor_judges");
    c.roles.evaluees = get_strings(*r, "evaluees");
  }

  if (const auto* arr = root["providers"].as_array()) {
    for (const auto& node : *arr) {
      const auto* t = node.as_table();
      if (!t) throw ConfigError("[[providers]] entries must be tables");
      ProviderSpec s;
      s.name = (*t)["name"].value_or(std::string());
      s.adapter = (*t)["adapter"].value_or(std::string("openai-chat"));
      s.endpoint = (*t)["endpoint"].value_or(std::string());
      s.model = (*t)["model"].value_or(s.name);
      s.auth_env = (*t)["auth_env"].value_or(std::string());
      s.max_concurrency = get_int(*t, "max_concurrency", s.max_concurrency);
      s.max_retries = get_int(*t, "max_retries", s.max_retries);
      s.timeout_seconds = (*t)["timeout"].value_or(s.timeout_seconds);
      s.token_scoring = (*t)["token_scoring"].value_or(false);
      c.providers.push_back(std::move(s));
    }
  }

  if (const auto* paths = root["paths"].as_table()) {
    for (const auto& p : get_strings(*paths, "corpus")) {
      std::filesystem::path path(p);
      c.corpus.push_back(path.is_absolute() ? path : base_dir / path);
    }
  }
  if (const auto* ingest = root["ingest"].as_table()) {
    const int sample = get_int(*ingest, "sample", 0);
    if (sample < 0) throw ConfigError("ingest.sample must be >= 0");
    c.sample = static_cast<std::size_t>(sample);
  }
  if (const auto* eval = root["eval"].as_table()) {
    c.exclude_failed = (*eval)["exclude_failed"].value_or(false);
  }
  if (const auto* judge = root["judge"].as_table()) {
    c.verdict_reasks = get_int(*judge, "reasks", c.verdict_reasks);
  }
  if (const auto* retry = root["retry"].as_table()) {
    c.retry_base_delay_ms = get_int(*retry, "base_delay_ms", c.retry_base_delay_ms);
  }
  if (const auto* decode = root["decode"].as_table()) c.decode = toml_to_json(*decode);

  validate_config(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.parent_path());
}

Json to_json(const PipelineConfig& c) {
  Json j;
  j["params"] = {{"m1", c.filter.m1()}, {"n1", c.filter.n1()}, {"k1", c.filter.k1()},
                 {"m2", c.generation.m2()}, {"n2", c.generation.n2()},
                 {"k2", c.generation.k2()}, {"m3", c.filter.m3()},
                 {"n3", c.filter.n3()}, {"k3", c.filter.k3()}, {"k4", c.filter.k4()},
                 {"m", c.m}, {"n", c.n}};
  j["rng_seed"] = c.rng_seed;
  j["roles"] = {{"seed_judges", c.roles.seed_judges},
                {"generators", c.roles.generators},
                {"distractor_judges", c.roles.distractor_judges},
                {"evaluees", c.roles.evaluees}};
  Json providers = Json::array();
  for (const auto& p : c.providers) {
    providers.push_back({{"name", p.name}, {"adapter", p.adapter},
                         {"endpoint", p.endpoint}, {"model", p.model},
                         {"auth_env", p.auth_env},
                         {"max_concurrency", p.max_concurrency},
                         {"max_retries", p.max_retries}, {"timeout", p.timeout_seconds},
                         {"token_scoring", p.token_scoring}});
  }
  j["providers"] = std::move(providers);
  Json corpus = Json::array();
  for (const auto& p : c.corpus) corpus.push_back(p.filename().string());
  j["corpus"] = std::move(corpus);
  j["sample"] = c.sample;
  j["exclude_failed"] = c.exclude_failed;
  j["verdict_reasks"] = c.verdict_reasks;
  j["decode"] = c.decode;
  return j;
}

std::string config_hash(const PipelineConfig& config) {
  return sha256_hex(to_json(config).dump());
}

}  // namespace hybridbench
