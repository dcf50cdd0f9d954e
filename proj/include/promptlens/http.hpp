#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>

#include "promptlens/providers.hpp"

namespace promptlens {

/// Name of the environment variable holding the API key.
inline constexpr const char* kApiKeyEnv = "PROMPTLENS_API_KEY";

struct HttpSettings {
  std::string base_url;  // e.g. "https://api.openai.com" or "http://localhost:8080/v1"
  std::string model_id;
  std::string embedding_model;
  std::string api_key;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds timeout{120};
  /// Ask for n choices in one request; when false, n sequential single-choice requests.
  bool batch_n = true;
};

/// Splits a base URL into scheme://host[:port] and the path prefix used for endpoints.
/// "/v1" is appended to the prefix unless it already ends with it.
struct Endpoint {
  std::string origin;
  std::string prefix;
};
Endpoint parse_base_url(const std::string& base_url);

/// Sends a JSON body, retrying transport failures, 429 and 5xx up to max_attempts with
/// exponential backoff (a Retry-After header on 429 raises the wait). Other 4xx statuses
/// fail immediately with ProviderError::Kind::kConfiguration.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(HttpSettings settings);
  ~HttpJsonClient();

  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body);

  const HttpSettings& settings() const { return settings_; }
  /// Replaces std::this_thread::sleep_for, for tests.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

 private:
  struct Impl;
  HttpSettings settings_;
  Endpoint endpoint_;
  std::unique_ptr<Impl> impl_;
  std::function<void(std::chrono::milliseconds)> sleep_;
};

/// POST {prefix}/chat/completions with a system and a user message.
class HttpCompletionBackend final : public CompletionBackend {
 public:
  explicit HttpCompletionBackend(HttpSettings settings);

  std::string kind() const override { return "http:" + client_.settings().base_url; }
  std::string generate(const CompletionRequest& request, int sample_index) override;
  /// One request with n = sample_indices.size() when batching; fewer choices than asked
  /// for is an error, never a partial result.
  std::vector<std::string> generate_batch(const CompletionRequest& request,
                                          std::span<const int> sample_indices) override;

  HttpJsonClient& client() { return client_; }

 private:
  std::vector<std::string> request_choices(const CompletionRequest& request, int n);

  HttpJsonClient client_;
};

/// POST {prefix}/embeddings.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpSettings settings);

  std::string kind() const override { return "http:" + client_.settings().base_url; }
  Embedding embed(std::string_view text) override;

  HttpJsonClient& client() { return client_; }

 private:
  HttpJsonClient client_;
};

}  // namespace promptlens
