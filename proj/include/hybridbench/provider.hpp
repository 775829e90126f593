#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hybridbench/io.hpp"

namespace hybridbench {

// Binding of a role to a concrete model endpoint.
struct ProviderSpec {
  std::string name;
  // "openai-chat" (HTTP, OpenAI-compatible) or "mock".
  std::string adapter = "openai-chat";
  std::string endpoint;
  std::string model;
  // Environment variable holding the API key; empty means no auth header.
  std::string auth_env;
  int max_concurrency = 4;
  int max_retries = 3;
  double timeout_seconds = 120.0;
  // Whether the endpoint can return prompt logprobs (echo mode).
  bool token_scoring = false;

  friend bool operator==(const ProviderSpec&, const ProviderSpec&) = default;
};

void validate_provider_spec(const ProviderSpec& spec);
void validate_provider_specs(std::span<const ProviderSpec> specs);

// Identifies one completion request. `round` distinguishes repeated
// judgments of the same item; `attempt` > 0 marks a re-ask.
struct CompletionRequest {
  std::string stage;
  std::string item_id;
  int round = 1;
  int attempt = 0;
  std::string prompt;
};

struct Completion {
  std::string text;
  std::string provider;
  std::string request_key;

  friend bool operator==(const Completion&, const Completion&) = default;
};

struct ScoreRequest {
  std::string stage;
  std::string item_id;
  int round = 1;
  std::string context;
  std::string continuation;
};

// Natural-log probabilities of continuation tokens, in order.
struct TokenScore {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;

  friend bool operator==(const TokenScore&, const TokenScore&) = default;
};

void validate_token_score(const TokenScore& score);

std::string request_key(const ProviderSpec& spec, const CompletionRequest& req,
                        const Json& decode);
std::string request_key(const ProviderSpec& spec, const ScoreRequest& req);

// Upstream transport. Implementations throw ProviderError; transient errors
// are retried by Provider.
class Backend {
 public:
  virtual ~Backend() = default;
  // Called once per spec before any request; throws ConfigError.
  virtual void check_config(const ProviderSpec& spec) const = 0;
  virtual std::string complete(const ProviderSpec& spec,
                               const CompletionRequest& req, const Json& decode,
                               const std::string& key) = 0;
  virtual TokenScore score_tokens(const ProviderSpec& spec,
                                  const ScoreRequest& req,
                                  const std::string& key) = 0;
};

// Request cache keyed by request key. With a directory, entries persist as
// <dir>/<key>.json and survive restarts.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<Json> get(const std::string& key);
  void put(const std::string& key, const Json& value);

 private:
  std::optional<std::filesystem::path> dir_;
  std::mutex mu_;
  std::unordered_map<std::string, Json> memory_;
};

struct RetryPolicy {
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
};

// Thread-safe client for one ProviderSpec: bounded parallelism, caching,
// and retry with exponential backoff.
class Provider {
 public:
  Provider(ProviderSpec spec, std::shared_ptr<Backend> backend,
           std::shared_ptr<ResponseCache> cache, RetryPolicy retry = {},
           Json decode = Json::object());

  const ProviderSpec& spec() const { return spec_; }
  const Json& decode() const { return decode_; }

  Completion complete(const CompletionRequest& req);
  TokenScore score_tokens(const ScoreRequest& req);

  std::size_t upstream_calls() const { return upstream_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  template <typename F>
  auto with_retries(const std::string& key, F&& call);

  ProviderSpec spec_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  RetryPolicy retry_;
  Json decode_;
  std::unique_ptr<std::counting_semaphore<4096>> slots_;
  std::atomic<std::size_t> upstream_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

// Scripted offline backend. Script rows (JSONL):
//
//   {"stage": "judge-seed", "item_id": "04Z8", "round": 1,
//    "provider": "j1", "attempt": 0, "response": "VERDICT: correct",
//    "fail": 1}
//
// `item_id` "*" or absent and `round` 0 or absent match anything; absent
// `provider`/`attempt` match anything. The most specific row wins, earlier
// rows win ties. Instead of `response` a row may carry `"error": "hard"`,
// `tokens`/`logprobs`, or `"synthetic_logprobs": true` (a deterministic
// per-token score derived from the continuation text). `fail` makes the
// first N calls for each matching request fail transiently.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::vector<Json> script,
                       std::chrono::milliseconds latency = {});
  static std::shared_ptr<MockBackend> from_jsonl(std::string_view text,
                                                 std::chrono::milliseconds latency = {});

  void check_config(const ProviderSpec& spec) const override;
  std::string complete(const ProviderSpec& spec, const CompletionRequest& req,
                       const Json& decode, const std::string& key) override;
  TokenScore score_tokens(const ProviderSpec& spec, const ScoreRequest& req,
                          const std::string& key) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t max_in_flight() const { return max_in_flight_.load(); }

 private:
  struct Entry {
    std::string stage;
    std::string item_id;  // "*" = any
    int round = 0;        // 0 = any
    std::optional<std::string> provider;
    std::optional<int> attempt;
    Json row;
  };

  const Entry& match(const std::string& provider, const std::string& stage,
                     const std::string& item_id, int round, int attempt,
                     const std::string& key) const;
  void maybe_fail(const Entry& entry, const std::string& key);

  std::vector<Entry> entries_;
  std::chrono::milliseconds latency_;
  std::mutex mu_;
  std::map<std::string, int> failures_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
};

// OpenAI-compatible HTTP transport: POST {endpoint}/chat/completions for
// text, POST {endpoint}/completions with echo + logprobs for token scoring.
class HttpBackend : public Backend {
 public:
  void check_config(const ProviderSpec& spec) const override;
  std::string complete(const ProviderSpec& spec, const CompletionRequest& req,
                       const Json& decode, const std::string& key) override;
  TokenScore score_tokens(const ProviderSpec& spec, const ScoreRequest& req,
                          const std::string& key) override;
};

}  // namespace hybridbench
