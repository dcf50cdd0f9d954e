#include "promptlens/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "promptlens/error.hpp"

namespace promptlens {

Endpoint parse_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("provider.base_url: expected scheme://host, got '" + base_url + "'");
  }
  const std::string scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("provider.base_url: unsupported scheme '" + scheme + "'");
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint out;
  out.origin = base_url.substr(0, path_start);
  if (out.origin.size() <= scheme_end + 3) {
    throw ConfigError("provider.base_url: missing host in '" + base_url + "'");
  }
  out.prefix = path_start == std::string::npos ? std::string{} : base_url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  if (!out.prefix.ends_with("/v1")) out.prefix += "/v1";
  return out;
}

struct HttpJsonClient::Impl {
  // One client per request: httplib::Client is not safe for concurrent use.
  std::unique_ptr<httplib::Client> connect(const HttpSettings& settings,
                                           const std::string& origin) const {
    auto client = std::make_unique<httplib::Client>(origin);
    client->set_connection_timeout(settings.timeout);
    client->set_read_timeout(settings.timeout);
    client->set_write_timeout(settings.timeout);
    if (!settings.api_key.empty()) client->set_bearer_token_auth(settings.api_key);
    return client;
  }
};

HttpJsonClient::HttpJsonClient(HttpSettings settings)
    : settings_(std::move(settings)),
      endpoint_(parse_base_url(settings_.base_url)),
      impl_(std::make_unique<Impl>()),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (settings_.max_attempts < 1) throw ConfigError("provider.max_attempts: must be >= 1");
}

HttpJsonClient::~HttpJsonClient() = default;

void HttpJsonClient::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  sleep_ = std::move(sleeper);
}

nlohmann::json HttpJsonClient::post(const std::string& endpoint, const nlohmann::json& body) {
  const std::string path = endpoint_.prefix + endpoint;
  const std::string payload = body.dump();
  std::chrono::milliseconds backoff = settings_.initial_backoff;
  std::string last_error;
  auto last_kind = ProviderError::Kind::kTransport;

  for (int attempt = 1; attempt <= settings_.max_attempts; ++attempt) {
    const auto client = impl_->connect(settings_, endpoint_.origin);
    httplib::Result result = client->Post(path, payload, "application/json");
    std::chrono::milliseconds wait = backoff;
    if (!result) {
      last_kind = ProviderError::Kind::kTransport;
      last_error = "transport error: " + httplib::to_string(result.error());
    } else if (result->status >= 200 && result->status < 300) {
      try {
        return nlohmann::json::parse(result->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw ProviderError(ProviderError::Kind::kProtocol,
                            "POST " + path + ": response is not JSON: " + e.what());
      }
    } else if (result->status == 429) {
      last_kind = ProviderError::Kind::kRateLimited;
      last_error = "rate limited (HTTP 429)";
      if (result->has_header("Retry-After")) {
        try {
          const double seconds = std::stod(result->get_header_value("Retry-After"));
          if (std::isfinite(seconds) && seconds > 0) {
            wait = std::max(wait, std::chrono::milliseconds(std::llround(seconds * 1000.0)));
          }
        } catch (const std::exception&) {
          // HTTP-date form: keep the exponential wait.
        }
      }
    } else if (result->status >= 500) {
      last_kind = ProviderError::Kind::kServer;
      last_error = "server error (HTTP " + std::to_string(result->status) + ")";
    } else {
      throw ProviderError(ProviderError::Kind::kConfiguration,
                          "POST " + path + " rejected with HTTP " +
                              std::to_string(result->status) + ": " + result->body.substr(0, 300));
    }
    if (attempt < settings_.max_attempts) {
      sleep_(wait);
      backoff *= 2;
    }
  }
  throw ProviderError(last_kind, "POST " + path + " failed after " +
                                     std::to_string(settings_.max_attempts) +
                                     " attempts: " + last_error);
}

HttpCompletionBackend::HttpCompletionBackend(HttpSettings settings)
    : client_(std::move(settings)) {}

std::vector<std::string> HttpCompletionBackend::request_choices(const CompletionRequest& request,
                                                                int n) {
  const std::string& model =
      request.model_id.empty() ? client_.settings().model_id : request.model_id;
  const nlohmann::json body = {
      {"model", model},
      {"messages",
       {{{"role", "system"}, {"content", request.system_prompt}},
        {{"role", "user"}, {"content", request.user_input}}}},
      {"n", n},
      {"temperature", request.temperature},
  };
  const nlohmann::json response = client_.post("/chat/completions", body);
  if (!response.contains("choices") || !response["choices"].is_array()) {
    throw ProviderError(ProviderError::Kind::kProtocol, "chat completion response has no choices");
  }
  const auto& choices = response["choices"];
  if (choices.size() < static_cast<std::size_t>(n)) {
    throw ProviderError(ProviderError::Kind::kProtocol,
                        "asked for " + std::to_string(n) + " choices, received " +
                            std::to_string(choices.size()));
  }
  std::vector<std::string> out(static_cast<std::size_t>(n));
  std::vector<bool> seen(out.size(), false);
  for (std::size_t k = 0; k < choices.size(); ++k) {
    const auto& choice = choices[k];
    const std::size_t slot = choice.contains("index") && choice["index"].is_number_unsigned()
                                 ? choice["index"].get<std::size_t>()
                                 : k;
    if (slot >= out.size() || seen[slot]) continue;
    try {
      const auto& content = choice.at("message").at("content");
      out[slot] = content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ProviderError(ProviderError::Kind::kProtocol, "choice without message content");
    }
    seen[slot] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ProviderError(ProviderError::Kind::kProtocol, "response is missing choice indices");
  }
  return out;
}

std::string HttpCompletionBackend::generate(const CompletionRequest& request, int) {
  return request_choices(request, 1).front();
}

std::vector<std::string> HttpCompletionBackend::generate_batch(
    const CompletionRequest& request, std::span<const int> sample_indices) {
  if (sample_indices.empty()) return {};
  if (!client_.settings().batch_n) return CompletionBackend::generate_batch(request, sample_indices);
  return request_choices(request, static_cast<int>(sample_indices.size()));
}

HttpEmbedder::HttpEmbedder(HttpSettings settings) : client_(std::move(settings)) {}

Embedding HttpEmbedder::embed(std::string_view text) {
  if (text.empty()) throw InvalidArgument("embed: empty text");
  const nlohmann::json body = {{"model", client_.settings().embedding_model},
                               {"input", std::string(text)}};
  const nlohmann::json response = client_.post("/embeddings", body);
  std::vector<double> values;
  try {
    values = response.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError(ProviderError::Kind::kProtocol, "embedding response has no data[0].embedding");
  }
  if (values.empty()) throw ProviderError(ProviderError::Kind::kProtocol, "empty embedding");
  for (const double v : values) {
    if (!std::isfinite(v)) throw ProviderError(ProviderError::Kind::kProtocol, "non-finite embedding");
  }
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace promptlens
