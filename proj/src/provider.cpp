#include "hybridbench/provider.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "hybridbench/error.hpp"

namespace hybridbench {

void validate_provider_spec(const ProviderSpec& spec) {
  if (spec.name.empty()) throw ConfigError("provider with empty name");
  if (spec.adapter != "openai-chat" && spec.adapter != "mock") {
    throw ConfigError("provider '" + spec.name + "': unknown adapter '" +
                      spec.adapter + "'");
  }
  if (spec.max_concurrency < 1) {
    throw ConfigError("provider '" + spec.name + "': max_concurrency must be >= 1");
  }
  if (spec.max_retries < 0) {
    throw ConfigError("provider '" + spec.name + "': max_retries must be >= 0");
  }
  if (!(spec.timeout_seconds > 0)) {
    throw ConfigError("provider '" + spec.name + "': timeout must be positive");
  }
}

void validate_provider_specs(std::span<const ProviderSpec> specs) {
  std::set<std::string> names;
  for (const auto& spec : specs) {
    validate_provider_spec(spec);
    if (!names.insert(spec.name).second) {
      throw ConfigError("duplicate provider name '" + spec.name + "'");
    }
  }
}

void validate_token_score(const TokenScore& score) {
  if (score.tokens.empty() || score.tokens.size() != score.logprobs.size()) {
    throw PreconditionError("token score needs matching, non-empty token and logprob lists");
  }
  for (double lp : score.logprobs) {
    if (!(lp <= 0.0)) throw PreconditionError("logprob above zero or NaN");
  }
}

std::string request_key(const ProviderSpec& spec, const CompletionRequest& req,
                        const Json& decode) {
  Json material = Json::array({"complete/v1", spec.name, spec.model, req.stage,
                               req.item_id, req.round, req.attempt, req.prompt,
                               decode.dump()});
  return sha256_hex(material.dump());
}

std::string request_key(const ProviderSpec& spec, const ScoreRequest& req) {
  Json material = Json::array({"score/v1", spec.name, spec.model, req.stage,
                               req.item_id, req.round, req.context,
                               req.continuation});
  return sha256_hex(material.dump());
}

// --- cache -----------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(*dir_);
}

std::optional<Json> ResponseCache::get(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  const auto path = *dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  Json value;
  try {
    value = Json::parse(read_file(path));
  } catch (const std::exception&) {
    return std::nullopt;  // torn or foreign file: treat as a miss
  }
  std::lock_guard lock(mu_);
  memory_.emplace(key, value);
  return value;
}

void ResponseCache::put(const std::string& key, const Json& value) {
  if (dir_) write_file_atomic(*dir_ / (key + ".json"), value.dump(2) + "\n");
  std::lock_guard lock(mu_);
  memory_.insert_or_assign(key, value);
}

// --- provider ----------------------------------------------------------------

Provider::Provider(ProviderSpec spec, std::shared_ptr<Backend> backend,
                   std::shared_ptr<ResponseCache> cache, RetryPolicy retry,
                   Json decode)
    : spec_(std::move(spec)),
      backend_(std::move(backend)),
      cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      retry_(retry),
      decode_(std::move(decode)) {
  validate_provider_spec(spec_);
  backend_->check_config(spec_);
  slots_ = std::make_unique<std::counting_semaphore<4096>>(
      std::min(spec_.max_concurrency, 4096));
}

template <typename F>
auto Provider::with_retries(const std::string& key, F&& call) {
  for (int attempt = 0;; ++attempt) {
    try {
      slots_->acquire();
      struct Release {
        std::counting_semaphore<4096>& s;
        ~Release() { s.release(); }
      } release{*slots_};
      ++upstream_calls_;
      return call();
    } catch (const ProviderError& e) {
      if (!e.transient()) throw;
      if (attempt >= spec_.max_retries) {
        throw ProviderError("provider '" + spec_.name + "': retries exhausted after " +
                                std::to_string(attempt + 1) + " attempts: " + e.what(),
                            key, false);
      }
    }
    auto delay = retry_.base_delay * (1LL << std::min(attempt, 20));
    std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(delay, retry_.max_delay));
  }
}

Completion Provider::complete(const CompletionRequest& req) {
  const std::string key = request_key(spec_, req, decode_);
  if (auto hit = cache_->get(key); hit && hit->contains("text")) {
    ++cache_hits_;
    return {(*hit)["text"].get<std::string>(), spec_.name, key};
  }
  std::string text = with_retries(
      key, [&] { return backend_->complete(spec_, req, decode_, key); });
  Json entry;
  entry["request_key"] = key;
  entry["provider"] = spec_.name;
  entry["stage"] = req.stage;
  entry["item_id"] = req.item_id;
  entry["round"] = req.round;
  entry["attempt"] = req.attempt;
  entry["text"] = text;
  cache_->put(key, entry);
  return {std::move(text), spec_.name, key};
}

TokenScore Provider::score_tokens(const ScoreRequest& req) {
  if (!spec_.token_scoring) {
    throw CapabilityError("provider '" + spec_.name + "' does not support token scoring");
  }
  if (req.continuation.empty()) {
    throw PreconditionError("score_tokens: continuation must be non-empty");
  }
  const std::string key = request_key(spec_, req);
  if (auto hit = cache_->get(key); hit && hit->contains("logprobs")) {
    ++cache_hits_;
    return {(*hit)["tokens"].get<std::vector<std::string>>(),
            (*hit)["logprobs"].get<std::vector<double>>()};
  }
  TokenScore score =
      with_retries(key, [&] { return backend_->score_tokens(spec_, req, key); });
  validate_token_score(score);
  Json entry;
  entry["request_key"] = key;
  entry["provider"] = spec_.name;
  entry["stage"] = req.stage;
  entry["item_id"] = req.item_id;
  entry["round"] = req.round;
  entry["tokens"] = score.tokens;
  entry["logprobs"] = score.logprobs;
  cache_->put(key, entry);
  return score;
}

// --- mock ------------------------------------------------------------------

MockBackend::MockBackend(std::vector<Json> script,
                         std::chrono::milliseconds latency)
    : latency_(latency) {
  std::size_t row_no = 0;
  for (auto& row : script) {
    ++row_no;
    if (!row.is_object() || !row.contains("stage") || !row["stage"].is_string()) {
      throw ConfigError("mock script row " + std::to_string(row_no) +
                        ": missing string field 'stage'");
    }
    Entry e;
    e.stage = row["stage"].get<std::string>();
    e.item_id = row.value("item_id", std::string("*"));
    e.round = row.value("round", 0);
    if (row.contains("provider")) e.provider = row["provider"].get<std::string>();
    if (row.contains("attempt")) e.attempt = row["attempt"].get<int>();
    const bool has_payload = row.contains("response") || row.contains("error") ||
                             row.contains("logprobs") ||
                             row.value("synthetic_logprobs", false);
    if (!has_payload) {
      throw ConfigError("mock script row " + std::to_string(row_no) +
                        ": needs response, error, logprobs or synthetic_logprobs");
    }
    e.row = std::move(row);
    entries_.push_back(std::move(e));
  }
}

std::shared_ptr<MockBackend> MockBackend::from_jsonl(
    std::string_view text, std::chrono::milliseconds latency) {
  return std::make_shared<MockBackend>(parse_jsonl(text, "mock script"), latency);
}

void MockBackend::check_config(const ProviderSpec&) const {}

const MockBackend::Entry& MockBackend::match(const std::string& provider,
                                             const std::string& stage,
                                             const std::string& item_id,
                                             int round, int attempt,
                                             const std::string& key) const {
  const Entry* best = nullptr;
  int best_score = -1;
  for (const auto& e : entries_) {
    if (e.stage != stage) continue;
    if (e.item_id != "*" && e.item_id != item_id) continue;
    if (e.round != 0 && e.round != round) continue;
    if (e.provider && *e.provider != provider) continue;
    if (e.attempt && *e.attempt != attempt) continue;
    int score = (e.provider ? 8 : 0) + (e.item_id != "*" ? 4 : 0) +
                (e.round != 0 ? 2 : 0) + (e.attempt ? 1 : 0);
    if (score > best_score) {
      best = &e;
      best_score = score;
    }
  }
  if (!best) {
    throw ProviderError("mock: no script row for provider=" + provider +
                            " stage=" + stage + " item=" + item_id +
                            " round=" + std::to_string(round),
                        key, false);
  }
  return *best;
}

void MockBackend::maybe_fail(const Entry& entry, const std::string& key) {
  const int budget = entry.row.value("fail", 0);
  if (budget > 0) {
    std::lock_guard lock(mu_);
    int& used = failures_[key];
    if (used < budget) {
      ++used;
      throw ProviderError("mock: scripted transient failure", key, true);
    }
  }
  if (entry.row.contains("error")) {
    throw ProviderError("mock: scripted hard failure", key, false);
  }
}

namespace {

class InFlight {
 public:
  InFlight(std::atomic<std::size_t>& current, std::atomic<std::size_t>& peak)
      : current_(current) {
    std::size_t now = ++current_;
    std::size_t prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~InFlight() { --current_; }

 private:
  std::atomic<std::size_t>& current_;
};

TokenScore synthetic_score(const std::string& text) {
  TokenScore out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t start = text.find_first_not_of(" \t\n\r", pos);
    if (start == std::string::npos) break;
    std::size_t end = text.find_first_of(" \t\n\r", start);
    if (end == std::string::npos) end = text.size();
    out.tokens.push_back(text.substr(start, end - start));
    pos = end;
  }
  if (out.tokens.empty()) out.tokens.push_back(text);
  for (const auto& tok : out.tokens) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    out.logprobs.push_back(-(0.05 + static_cast<double>(h % 4000) / 1000.0));
  }
  return out;
}

}  // namespace

std::string MockBackend::complete(const ProviderSpec& spec,
                                  const CompletionRequest& req, const Json&,
                                  const std::string& key) {
  InFlight guard(in_flight_, max_in_flight_);
  ++calls_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  const Entry& e = match(spec.name, req.stage, req.item_id, req.round,
                         req.attempt, key);
  maybe_fail(e, key);
  if (!e.row.contains("response")) {
    throw ProviderError("mock: script row has no response text", key, false);
  }
  return e.row["response"].get<std::string>();
}

TokenScore MockBackend::score_tokens(const ProviderSpec& spec,
                                     const ScoreRequest& req,
                                     const std::string& key) {
  InFlight guard(in_flight_, max_in_flight_);
  ++calls_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  const Entry& e = match(spec.name, req.stage, req.item_id, req.round, 0, key);
  maybe_fail(e, key);
  if (e.row.value("synthetic_logprobs", false)) {
    return synthetic_score(req.continuation);
  }
  if (!e.row.contains("logprobs")) {
    throw ProviderError("mock: script row has no logprobs", key, false);
  }
  TokenScore out;
  out.logprobs = e.row["logprobs"].get<std::vector<double>>();
  if (e.row.contains("tokens")) {
    out.tokens = e.row["tokens"].get<std::vector<std::string>>();
  } else {
    for (std::size_t i = 0; i < out.logprobs.size(); ++i) {
      out.tokens.push_back("t" + std::to_string(i));
    }
  }
  return out;
}

// --- HTTP ------------------------------------------------------------------

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string host;
  std::string base_path;
};

ParsedUrl parse_url(const ProviderSpec& spec) {
  static const std::regex kUrl(R"(^(https?)://([^/:]+)(:\d+)?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(spec.endpoint, m, kUrl)) {
    throw ConfigError("provider '" + spec.name + "': invalid endpoint URL '" +
                      spec.endpoint + "'");
  }
  ParsedUrl url;
  url.origin = m[1].str() + "://" + m[2].str() + m[3].str();
  url.host = m[2].str();
  url.base_path = m[4].str();
  while (!url.base_path.empty() && url.base_path.back() == '/') url.base_path.pop_back();
  return url;
}

bool is_loopback(const std::string& host) {
  return host == "localhost" || host == "127.0.0.1" || host == "::1" ||
         host == "[::1]";
}

Json post_json(const ProviderSpec& spec, const std::string& path_suffix,
               const Json& body, const std::string& key) {
  const ParsedUrl url = parse_url(spec);
  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(spec.timeout_seconds);
  const auto usecs =
      static_cast<time_t>((spec.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!spec.auth_env.empty()) {
    const char* token = std::getenv(spec.auth_env.c_str());
    if (!token) {
      throw ConfigError("provider '" + spec.name + "': environment variable " +
                        spec.auth_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = client.Post(url.base_path + path_suffix, headers, body.dump(),
                         "application/json");
  if (!res) {
    throw ProviderError("provider '" + spec.name + "': transport error: " +
                            httplib::to_string(res.error()),
                        key, true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("provider '" + spec.name + "': HTTP " +
                            std::to_string(res->status),
                        key, true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError("provider '" + spec.name + "': HTTP " +
                            std::to_string(res->status) + ": " + res->body,
                        key, false);
  }
  try {
    return Json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    throw ProviderError("provider '" + spec.name + "': response is not JSON", key,
                        false);
  }
}

}  // namespace

void HttpBackend::check_config(const ProviderSpec& spec) const {
  const ParsedUrl url = parse_url(spec);
  if (spec.auth_env.empty()) {
    if (!is_loopback(url.host)) {
      throw ConfigError("provider '" + spec.name +
                        "': remote endpoint requires auth_env");
    }
    return;
  }
  if (!std::getenv(spec.auth_env.c_str())) {
    throw ConfigError("provider '" + spec.name + "': environment variable " +
                      spec.auth_env + " is not set");
  }
}

std::string HttpBackend::complete(const ProviderSpec& spec,
                                  const CompletionRequest& req,
                                  const Json& decode, const std::string& key) {
  Json body = Json::object();
  body["model"] = spec.model;
  body["messages"] = Json::array({{{"role", "user"}, {"content", req.prompt}}});
  for (const auto& [k, v] : decode.items()) body[k] = v;
  Json res = post_json(spec, "/chat/completions", body, key);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError("provider '" + spec.name +
                            "': response lacks choices[0].message.content",
                        key, false);
  }
}

TokenScore HttpBackend::score_tokens(const ProviderSpec& spec,
                                     const ScoreRequest& req,
                                     const std::string& key) {
  Json body = Json::object();
  body["model"] = spec.model;
  body["prompt"] = req.context + req.continuation;
  body["max_tokens"] = 0;
  body["echo"] = true;
  body["logprobs"] = 0;
  body["temperature"] = 0;
  Json res = post_json(spec, "/completions", body, key);
  TokenScore out;
  try {
    const Json& lp = res.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& values = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (offsets.at(i).get<std::size_t>() < req.context.size()) continue;
      // The first prompt token has no conditional probability.
      if (values.at(i).is_null()) continue;
      double v = values.at(i).get<double>();
      if (v > 0.0 && v < 1e-9) v = 0.0;
      out.tokens.push_back(tokens.at(i).get<std::string>());
      out.logprobs.push_back(v);
    }
  } catch (const nlohmann::json::exception&) {
    throw ProviderError("provider '" + spec.name +
                            "': response lacks choices[0].logprobs",
                        key, false);
  }
  if (out.tokens.empty()) {
    throw ProviderError("provider '" + spec.name +
                            "': no scored tokens in continuation",
                        key, false);
  }
  return out;
}

}  // namespace hybridbench
