#include "promptlens/providers.hpp"

#include <cmath>

#include "promptlens/error.hpp"
#include "promptlens/hashing.hpp"

namespace promptlens {
namespace {

nlohmann::json echo(const CompletionRequest& request, int sample_index,
                    const std::string& kind) {
  return {{"provider_kind", kind},
          {"model_id", request.model_id},
          {"system_prompt", request.system_prompt},
          {"user_input", request.user_input},
          {"sample_index", sample_index},
          {"temperature", request.temperature}};
}

void validate(const CompletionRequest& request) {
  if (request.n < 1) throw InvalidArgument("completion request needs n >= 1");
  if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
    throw InvalidArgument("temperature must be finite and >= 0");
  }
}

}  // namespace

std::vector<std::string> CompletionBackend::generate_batch(const CompletionRequest& request,
                                                           std::span<const int> sample_indices) {
  std::vector<std::string> out;
  out.reserve(sample_indices.size());
  for (const int index : sample_indices) out.push_back(generate(request, index));
  return out;
}

CompletionProvider::CompletionProvider(std::shared_ptr<CompletionBackend> backend,
                                       std::shared_ptr<ResponseCache> cache, int parallelism)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      parallelism_(parallelism),
      in_flight_(parallelism < 1 ? 1 : parallelism) {
  if (!backend_) throw InvalidArgument("completion provider needs a backend");
  if (parallelism < 1) throw InvalidArgument("parallelism must be >= 1");
}

CacheKey CompletionProvider::key_for(const CompletionRequest& request, int sample_index) const {
  return completion_cache_key(backend_->kind(), request.model_id, request.system_prompt,
                              request.user_input, sample_index, request.temperature);
}

bool CompletionProvider::is_cached(const CompletionRequest& request, int sample_index) const {
  return cache_ && cache_->contains(key_for(request, sample_index));
}

std::vector<Completion> CompletionProvider::complete(const CompletionRequest& request) {
  validate(request);
  const std::string kind = backend_->kind();
  std::vector<Completion> out(static_cast<std::size_t>(request.n));
  std::vector<CacheKey> keys;
  keys.reserve(out.size());

  // Misses this call is responsible for fetching, and misses already in flight elsewhere.
  std::vector<int> owned;
  std::vector<std::pair<int, std::shared_future<std::string>>> waiting;
  std::vector<std::promise<std::string>> promises;

  {
    std::lock_guard lock(pending_mutex_);
    for (int i = 0; i < request.n; ++i) {
      keys.push_back(key_for(request, i));
      out[i].sample_index = i;
      out[i].model_id = request.model_id;
      if (cache_) {
        if (auto hit = cache_->get(keys.back())) {
          out[i].text = std::move(*hit);
          out[i].from_cache = true;
          ++hits_;
          continue;
        }
      }
      if (auto it = pending_.find(keys.back().digest); it != pending_.end()) {
        waiting.emplace_back(i, it->second);
        continue;
      }
      promises.emplace_back();
      pending_.emplace(keys.back().digest, promises.back().get_future().share());
      owned.push_back(i);
    }
  }

  if (!owned.empty()) {
    std::vector<std::string> texts;
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      texts = backend_->generate_batch(request, owned);
      if (texts.size() != owned.size()) {
        throw ProviderError(ProviderError::Kind::kProtocol,
                            "backend returned " + std::to_string(texts.size()) +
                                " samples, expected " + std::to_string(owned.size()));
      }
    } catch (...) {
      std::lock_guard lock(pending_mutex_);
      for (std::size_t k = 0; k < owned.size(); ++k) {
        promises[k].set_exception(std::current_exception());
        pending_.erase(keys[owned[k]].digest);
      }
      throw;
    }
    fetched_ += owned.size();
    for (std::size_t k = 0; k < owned.size(); ++k) {
      const int i = owned[k];
      if (cache_) cache_->put(keys[i], texts[k], echo(request, i, kind));
      out[i].text = texts[k];
      std::lock_guard lock(pending_mutex_);
      promises[k].set_value(texts[k]);
      pending_.erase(keys[i].digest);
    }
  }

  for (auto& [i, future] : waiting) {
    out[i].text = future.get();
    out[i].from_cache = true;
  }
  return out;
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner,
                                 std::shared_ptr<ResponseCache> cache, std::string model_id)
    : inner_(std::move(inner)), cache_(std::move(cache)), model_id_(std::move(model_id)) {
  if (!inner_) throw InvalidArgument("caching embedder needs an inner embedder");
}

Embedding CachingEmbedder::embed(std::string_view text) {
  if (text.empty()) throw InvalidArgument("embed: empty text");
  const CacheKey key = embedding_cache_key(inner_->kind(), model_id_, text);
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      try {
        const auto values = nlohmann::json::parse(*hit).get<std::vector<double>>();
        return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
      } catch (const nlohmann::json::exception&) {
        // Unreadable payload: fall through and refetch, the put below overwrites it.
      }
    }
  }
  Embedding e = inner_->embed(text);
  ++fetched_;
  if (cache_) {
    const std::vector<double> values(e.data(), e.data() + e.size());
    cache_->put(key, nlohmann::json(values).dump(),
                {{"provider_kind", inner_->kind()}, {"model_id", model_id_}, {"text", text}});
  }
  return e;
}

}  // namespace promptlens
