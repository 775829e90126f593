#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "hybridbench/error.hpp"
#include "hybridbench/parallel.hpp"
#include "hybridbench/provider.hpp"
#include "support.hpp"

using namespace hybridbench;
using hbtest::MockFleet;
using hbtest::Script;

namespace {

CompletionRequest judge_req(const std::string& item, int round, int attempt = 0) {
  return {"judge", item, round, attempt, "Is this item correct?"};
}

// Local OpenAI-compatible server on an ephemeral port.
class FakeServer {
 public:
  FakeServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ProviderSpec http_spec(const std::string& endpoint) {
  ProviderSpec s;
  s.name = "local";
  s.endpoint = endpoint;
  s.model = "tiny";
  s.max_retries = 2;
  s.timeout_seconds = 5;
  return s;
}

RetryPolicy fast_retry() {
  RetryPolicy r;
  r.base_delay = std::chrono::milliseconds(1);
  return r;
}

}  // namespace

TEST_CASE("mock echoes its script") {
  MockFleet fleet(Script{Json{{"stage", "judge"}, {"item_id", "04Z8"}, {"round", 1},
                        {"response", "VERDICT: correct"}}});
  auto* p = fleet.add("j1");
  auto c = p->complete(judge_req("04Z8", 1));
  CHECK(c.text == "VERDICT: correct");
  CHECK(c.provider == "j1");
  CHECK(c.request_key.size() == 64);
  CHECK_THROWS_AS(p->complete(judge_req("04Z8", 2)), ProviderError);
}

TEST_CASE("mock picks the most specific row") {
  MockFleet fleet(Script{
      Json{{"stage", "s"}, {"response", "any"}},
      Json{{"stage", "s"}, {"round", 2}, {"response", "round"}},
      Json{{"stage", "s"}, {"item_id", "X"}, {"response", "item"}},
      Json{{"stage", "s"}, {"provider", "p2"}, {"response", "provider"}},
      Json{{"stage", "s"}, {"item_id", "X"}, {"attempt", 1}, {"response", "reask"}},
      Json{{"stage", "s"}, {"response", "shadowed"}},
  });
  auto* p1 = fleet.add("p1");
  auto* p2 = fleet.add("p2");
  CHECK(p1->complete({"s", "Y", 1, 0, "q"}).text == "any");
  CHECK(p1->complete({"s", "Y", 2, 0, "q"}).text == "round");
  CHECK(p1->complete({"s", "X", 2, 0, "q"}).text == "item");
  CHECK(p1->complete({"s", "X", 1, 1, "q"}).text == "reask");
  CHECK(p2->complete({"s", "X", 1, 0, "q"}).text == "provider");
}

TEST_CASE("identical request twice hits the cache") {
  MockFleet fleet(Script{Json{{"stage", "judge"}, {"response", "VERDICT: correct"}}});
  auto* p = fleet.add("j1");
  auto a = p->complete(judge_req("A", 1));
  auto b = p->complete(judge_req("A", 1));
  CHECK(a == b);
  CHECK(fleet.backend->calls() == 1);
  CHECK(p->upstream_calls() == 1);
  CHECK(p->cache_hits() == 1);
  p->complete(judge_req("A", 2));
  CHECK(fleet.backend->calls() == 2);
}

TEST_CASE("transient failure then success retries once") {
  MockFleet fleet(Script{Json{{"stage", "judge"}, {"response", "ok"}, {"fail", 1}}});
  auto spec = hbtest::mock_spec("j1");
  spec.max_retries = 2;
  auto* p = fleet.add(spec);
  CHECK(p->complete(judge_req("A", 1)).text == "ok");
  CHECK(fleet.backend->calls() == 2);
}

TEST_CASE("exhausted retries raise an error carrying the request key") {
  MockFleet fleet(Script{Json{{"stage", "judge"}, {"response", "ok"}, {"fail", 5}}});
  auto spec = hbtest::mock_spec("j1");
  spec.max_retries = 2;
  auto* p = fleet.add(spec);
  const auto key = request_key(spec, judge_req("A", 1), Json::object());
  try {
    p->complete(judge_req("A", 1));
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.request_key() == key);
    CHECK_FALSE(e.transient());
  }
  CHECK(fleet.backend->calls() == 3);
}

TEST_CASE("hard failures are not retried") {
  MockFleet fleet(Script{Json{{"stage", "judge"}, {"error", "hard"}}});
  auto* p = fleet.add("j1");
  CHECK_THROWS_AS(p->complete(judge_req("A", 1)), ProviderError);
  CHECK(fleet.backend->calls() == 1);
}

TEST_CASE("request_key is deterministic and separates every field") {
  auto spec = hbtest::mock_spec("j1");
  const Json decode = {{"temperature", 0}};
  CompletionRequest base{"judge", "A", 1, 0, "prompt"};
  const auto k = request_key(spec, base, decode);
  CHECK(k == request_key(spec, base, decode));
  auto vary = [&](auto mutate) {
    CompletionRequest r = base;
    mutate(r);
    return request_key(spec, r, decode);
  };
  CHECK(vary([](auto& r) { r.stage = "other"; }) != k);
  CHECK(vary([](auto& r) { r.item_id = "B"; }) != k);
  CHECK(vary([](auto& r) { r.round = 2; }) != k);
  CHECK(vary([](auto& r) { r.attempt = 1; }) != k);
  CHECK(vary([](auto& r) { r.prompt = "prompt!"; }) != k);
  CHECK(request_key(hbtest::mock_spec("j2"), base, decode) != k);
  CHECK(request_key(spec, base, Json{{"temperature", 1}}) != k);
}

TEST_CASE("score_tokens examples") {
  MockFleet fleet(Script{
      Json{{"stage", "ppl"}, {"item_id", "two"}, {"logprobs", {-1.0, -2.0}}},
      Json{{"stage", "ppl"}, {"item_id", "one"}, {"tokens", {"t"}},
           {"logprobs", {-std::log(4.0)}}},
      Json{{"stage", "ppl"}, {"item_id", "bad"}, {"logprobs", {0.5}}},
  });
  auto* p = fleet.add("m", true);
  auto two = p->score_tokens({"ppl", "two", 1, "ctx", "a b"});
  CHECK(two.logprobs == std::vector<double>{-1.0, -2.0});
  auto one = p->score_tokens({"ppl", "one", 1, "ctx", "a"});
  REQUIRE(one.logprobs.size() == 1);
  CHECK(one.logprobs[0] == doctest::Approx(-1.3862943611).epsilon(1e-10));
  CHECK_THROWS_AS(p->score_tokens({"ppl", "two", 1, "ctx", ""}), PreconditionError);
  CHECK_THROWS_AS(p->score_tokens({"ppl", "bad", 1, "ctx", "a"}), PreconditionError);

  auto* chat = fleet.add("chat-only");
  try {
    chat->score_tokens({"ppl", "two", 1, "ctx", "a"});
    FAIL("expected CapabilityError");
  } catch (const CapabilityError& e) {
    CHECK(std::string(e.what()).find("chat-only") != std::string::npos);
  }
}

TEST_CASE("token score invariants") {
  CHECK_NOTHROW(validate_token_score({{"a"}, {0.0}}));
  CHECK_THROWS_AS(validate_token_score({{}, {}}), PreconditionError);
  CHECK_THROWS_AS(validate_token_score({{"a", "b"}, {-1.0}}), PreconditionError);
  CHECK_THROWS_AS(validate_token_score({{"a"}, {1e-3}}), PreconditionError);
}

TEST_CASE("in-flight requests never exceed max_concurrency") {
  for (int limit : {1, 3, 6}) {
    MockFleet fleet(Script{Json{{"stage", "s"}, {"response", "ok"}}},
                    std::chrono::milliseconds(3));
    auto* p = fleet.add(hbtest::mock_spec("p", limit));
    parallel_for(48, 16, [&](std::size_t i) {
      p->complete({"s", "item" + std::to_string(i), 1, 0, "q"});
    });
    CHECK(fleet.backend->calls() == 48);
    CHECK(fleet.backend->max_in_flight() <= static_cast<std::size_t>(limit));
    CHECK(fleet.backend->max_in_flight() >= 1);
  }
}

TEST_CASE("persistent cache survives a restart") {
  hbtest::TempDir dir;
  std::vector<Json> script = {Json{{"stage", "s"}, {"response", "ok"}}};
  std::string key;
  {
    auto backend = std::make_shared<MockBackend>(script);
    Provider p(hbtest::mock_spec("p"), backend, std::make_shared<ResponseCache>(dir.path()));
    key = p.complete({"s", "A", 1, 0, "q"}).request_key;
  }
  CHECK(std::filesystem::exists(dir / (key + ".json")));
  auto backend = std::make_shared<MockBackend>(script);
  Provider p(hbtest::mock_spec("p"), backend, std::make_shared<ResponseCache>(dir.path()));
  CHECK(p.complete({"s", "A", 1, 0, "q"}).text == "ok");
  CHECK(backend->calls() == 0);
}

TEST_CASE("provider spec validation") {
  auto s = hbtest::mock_spec("p");
  s.max_concurrency = 0;
  CHECK_THROWS_AS(validate_provider_spec(s), ConfigError);
  s = hbtest::mock_spec("p");
  s.max_retries = -1;
  CHECK_THROWS_AS(validate_provider_spec(s), ConfigError);
  s = hbtest::mock_spec("p");
  s.adapter = "carrier-pigeon";
  CHECK_THROWS_AS(validate_provider_spec(s), ConfigError);
  std::vector<ProviderSpec> dup = {hbtest::mock_spec("a"), hbtest::mock_spec("a")};
  CHECK_THROWS_AS(validate_provider_specs(dup), ConfigError);
}

TEST_CASE("missing credential fails before any network call") {
  auto backend = std::make_shared<HttpBackend>();
  auto spec = http_spec("https://api.example.invalid/v1");
  spec.auth_env = "HYBRIDBENCH_TEST_UNSET_KEY";
  ::unsetenv(spec.auth_env.c_str());
  CHECK_THROWS_AS(Provider(spec, backend, nullptr), ConfigError);
  spec.auth_env.clear();
  CHECK_THROWS_AS(Provider(spec, backend, nullptr), ConfigError);
  spec.endpoint = "not a url";
  CHECK_THROWS_AS(Provider(spec, backend, nullptr), ConfigError);
  CHECK_NOTHROW(Provider(http_spec("http://localhost:1/v1"), backend, nullptr));
}

TEST_CASE("HTTP chat completion with auth and retry") {
  FakeServer fake;
  std::atomic<int> hits{0};
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req,
                                                 httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    auto body = Json::parse(req.body);
    if (req.get_header_value("Authorization") != "Bearer sekrit" ||
        body["model"] != "tiny" || body["temperature"] != 0) {
      res.status = 401;
      return;
    }
    Json out = {{"choices", {{{"message", {{"role", "assistant"},
                                           {"content", "echo: " + body["messages"][0]["content"].get<std::string>()}}}}}}};
    res.set_content(out.dump(), "application/json");
  });
  ::setenv("HYBRIDBENCH_TEST_KEY", "sekrit", 1);
  auto spec = http_spec(fake.endpoint());
  spec.auth_env = "HYBRIDBENCH_TEST_KEY";
  Provider p(spec, std::make_shared<HttpBackend>(), nullptr, fast_retry(),
             Json{{"temperature", 0}});
  CHECK(p.complete({"s", "A", 1, 0, "hello"}).text == "echo: hello");
  CHECK(hits == 2);
}

TEST_CASE("HTTP client errors are not retried") {
  FakeServer fake;
  std::atomic<int> hits{0};
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content("{\"error\":\"bad\"}", "application/json");
  });
  Provider p(http_spec(fake.endpoint()), std::make_shared<HttpBackend>(), nullptr, fast_retry());
  CHECK_THROWS_AS(p.complete({"s", "A", 1, 0, "hello"}), ProviderError);
  CHECK(hits == 1);
}

TEST_CASE("HTTP token scoring keeps continuation tokens only") {
  FakeServer fake;
  fake.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = Json::parse(req.body);
    CHECK(body["echo"] == true);
    CHECK(body["prompt"] == "Stem: a b");
    Json lp = {{"tokens", {"Stem", ":", " a", " b"}},
               {"token_logprobs", {nullptr, -0.5, -1.25, -2.0}},
               {"text_offset", {0, 4, 5, 7}}};
    Json out = {{"choices", {{{"logprobs", lp}}}}};
    res.set_content(out.dump(), "application/json");
  });
  auto spec = http_spec(fake.endpoint());
  spec.token_scoring = true;
  Provider p(spec, std::make_shared<HttpBackend>(), nullptr, fast_retry());
  auto score = p.score_tokens({"ppl", "Q", 1, "Stem:", " a b"});
  CHECK(score.tokens == std::vector<std::string>{" a", " b"});
  CHECK(score.logprobs == std::vector<double>{-1.25, -2.0});
}

TEST_CASE("unreachable endpoint is a transient error that exhausts retries") {
  auto spec = http_spec("http://127.0.0.1:1/v1");
  spec.timeout_seconds = 1;
  spec.max_retries = 1;
  Provider p(spec, std::make_shared<HttpBackend>(), nullptr, fast_retry());
  try {
    p.complete({"s", "A", 1, 0, "x"});
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("retries exhausted") != std::string::npos);
  }
}
