#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hybridbench/io.hpp"
#include "hybridbench/provider.hpp"

namespace hbtest {

using Script = std::vector<hybridbench::Json>;

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(HB_FIXTURE_DIR) / name;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "hb") {
    static std::atomic<int> counter{0};
    auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline hybridbench::ProviderSpec mock_spec(const std::string& name, int concurrency = 4,
                                           bool token_scoring = false) {
  hybridbench::ProviderSpec s;
  s.name = name;
  s.adapter = "mock";
  s.model = name;
  s.max_concurrency = concurrency;
  s.token_scoring = token_scoring;
  return s;
}

// Providers sharing one in-memory cache and one mock backend.
struct MockFleet {
  std::shared_ptr<hybridbench::MockBackend> backend;
  std::shared_ptr<hybridbench::ResponseCache> cache =
      std::make_shared<hybridbench::ResponseCache>();
  std::vector<std::unique_ptr<hybridbench::Provider>> owned;

  explicit MockFleet(std::vector<hybridbench::Json> script,
                     std::chrono::milliseconds latency = {})
      : backend(std::make_shared<hybridbench::MockBackend>(std::move(script), latency)) {}

  hybridbench::Provider* add(const hybridbench::ProviderSpec& spec) {
    hybridbench::RetryPolicy retry;
    retry.base_delay = std::chrono::milliseconds(1);
    owned.push_back(std::make_unique<hybridbench::Provider>(spec, backend, cache, retry));
    return owned.back().get();
  }
  hybridbench::Provider* add(const std::string& name, bool token_scoring = false) {
    return add(mock_spec(name, 4, token_scoring));
  }
  std::vector<hybridbench::Provider*> all() const {
    std::vector<hybridbench::Provider*> out;
    for (const auto& p : owned) out.push_back(p.get());
    return out;
  }
};

}  // namespace hbtest
