#pragma once

#include <stdexcept>
#include <string>

namespace hybridbench {

// Base of every error the toolkit raises. `kind()` is the machine-readable
// tag the CLI emits in its stderr error JSON.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class CorpusError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "corpus"; }
};

class PreconditionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "precondition"; }
};

class CapabilityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "capability"; }
};

// Raised by the provider layer. `transient()` failures are retried; the
// request key is carried so the failing request can be located in the cache.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, std::string request_key,
                bool transient)
      : Error(message),
        request_key_(std::move(request_key)),
        transient_(transient) {}

  const char* kind() const noexcept override { return "provider"; }
  const std::string& request_key() const noexcept { return request_key_; }
  bool transient() const noexcept { return transient_; }

 private:
  std::string request_key_;
  bool transient_;
};

class StageError : public Error {
 public:
  StageError(const std::string& message, std::string stage)
      : Error(message), stage_(std::move(stage)) {}
  const char* kind() const noexcept override { return "stage"; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace hybridbench
