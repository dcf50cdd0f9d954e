#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptlens {

/// Precondition violations on public operations (bad index, empty range, zero vector, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A score that has no value for a given text, e.g. Flesch reading-ease of a text without words.
/// The importance engine records these as score holes.
class UndefinedScore : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failures talking to a completion or embedding backend.
class ProviderError : public std::runtime_error {
 public:
  enum class Kind {
    kTransport,      // network failure, retried then surfaced
    kRateLimited,    // HTTP 429 after retries
    kServer,         // HTTP 5xx after retries
    kConfiguration,  // HTTP 4xx, missing credentials: never retried
    kProtocol,       // malformed or short response
  };

  ProviderError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (reports, corpora). `offset` is a byte offset when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset = 0)
      : std::runtime_error(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised before any provider call when a run would exceed the configured call budget.
class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(std::size_t planned, std::size_t budget)
      : std::runtime_error("planned " + std::to_string(planned) +
                           " provider calls exceeds budget of " + std::to_string(budget)),
        planned_(planned),
        budget_(budget) {}

  std::size_t planned() const noexcept { return planned_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t planned_;
  std::size_t budget_;
};

}  // namespace promptlens
