#pragma once

#include <atomic>
#include <cstddef>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptlens/cache.hpp"
#include "promptlens/types.hpp"

namespace promptlens {

struct CompletionRequest {
  std::string system_prompt;
  std::string user_input;
  int n = 3;
  double temperature = 1.0;
  std::string model_id;
};

struct Completion {
  std::string text;
  int sample_index = 0;
  std::string model_id;
  bool from_cache = false;
};

/// Something that can produce fresh completion samples: the stub or an HTTP endpoint.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;

  /// Identifies the backend configuration in cache keys ("http", "stub:<digest>").
  virtual std::string kind() const = 0;

  /// One sample. Implementations must be safe to call concurrently.
  virtual std::string generate(const CompletionRequest& request, int sample_index) = 0;

  /// Several samples of the same request, returned in `sample_indices` order. The default
  /// calls generate() per index; batching backends override it.
  virtual std::vector<std::string> generate_batch(const CompletionRequest& request,
                                                  std::span<const int> sample_indices);
};

/// Front door for completions: consults the cache per sample, fetches misses from the
/// backend with bounded concurrency, stores them, and counts fetched samples.
///
/// Concurrent requests for the same uncached sample share a single fetch.
class CompletionProvider {
 public:
  CompletionProvider(std::shared_ptr<CompletionBackend> backend,
                     std::shared_ptr<ResponseCache> cache, int parallelism = 4);

  std::vector<Completion> complete(const CompletionRequest& request);

  bool is_cached(const CompletionRequest& request, int sample_index) const;

  /// Samples fetched from the backend (cache misses) since construction.
  std::size_t fetched_samples() const { return fetched_.load(); }
  std::size_t cache_hits() const { return hits_.load(); }

  int parallelism() const { return parallelism_; }
  const CompletionBackend& backend() const { return *backend_; }

 private:
  CacheKey key_for(const CompletionRequest& request, int sample_index) const;

  std::shared_ptr<CompletionBackend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  int parallelism_;
  std::counting_semaphore<> in_flight_;
  std::mutex pending_mutex_;
  std::map<std::string, std::shared_future<std::string>> pending_;
  std::atomic<std::size_t> fetched_{0};
  std::atomic<std::size_t> hits_{0};
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string kind() const = 0;
  /// Fixed-dimension finite vector. Throws InvalidArgument on empty text.
  virtual Embedding embed(std::string_view text) = 0;
};

/// Wraps an embedder with the response cache (embeddings namespace, keyed by text digest).
class CachingEmbedder final : public Embedder {
 public:
  CachingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<ResponseCache> cache,
                  std::string model_id = {});

  std::string kind() const override { return inner_->kind(); }
  Embedding embed(std::string_view text) override;

  std::size_t fetched() const { return fetched_.load(); }

 private:
  std::shared_ptr<Embedder> inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::string model_id_;
  std::atomic<std::size_t> fetched_{0};
};

}  // namespace promptlens
