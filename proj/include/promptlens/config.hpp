#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptlens/importance.hpp"
#include "promptlens/providers.hpp"
#include "promptlens/scoring.hpp"
#include "promptlens/stub.hpp"

namespace promptlens {

struct ProviderConfig {
  std::string kind = "stub";  // "stub" or "http"
  std::string base_url;
  std::string model = "stub-model";
  std::string embedding_model;
  int parallelism = 4;
  std::filesystem::path cache_dir = ".promptlens-cache";
  std::string api_key_env = "PROMPTLENS_API_KEY";
  bool batch_n = true;
  int max_attempts = 3;
  int timeout_seconds = 120;
};

/// Everything a run needs, after defaults, the config file and command-line overrides.
struct RunConfig {
  ProviderConfig provider;
  int n = 3;
  double temperature = 1.0;
  std::vector<std::string> scores{"word_count", "flesch_reading_ease"};
  MaskingOptions masking;
  Aggregation aggregation = Aggregation::kPaired;
  std::optional<std::size_t> budget;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> stub_rules_path;
  int embed_dim = 4096;
  std::filesystem::path output_dir = "promptlens-out";
  StubRuleTable stub_rules;  // loaded from stub_rules_path, or the built-in table
};

/// "section.key" = "value" pairs applied after the file, in order.
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses the sectioned key = value format:
///
///   [provider]  kind, base_url, model, embedding_model, parallelism, cache_dir,
///               api_key_env, batch_n, max_attempts, timeout_seconds
///   [sampling]  n, temperature
///   [scoring]   scores (comma-separated score ids)
///   [masking]   exclude_stopwords, glyph, granularity (word|span), span_size
///   [engine]    aggregation (paired|mean_baseline), budget
///   [stub]      seed, rules, embed_dim
///   [output]    dir
///
/// Lines starting with ';' or '#' are comments. Relative paths resolve against base_dir.
/// Any problem throws ConfigError naming the offending "section.key".
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                       const ConfigOverrides& overrides = {});

/// Defaults when `path` is empty.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const ConfigOverrides& overrides = {});

/// Checks cross-field rules (stub needs a seed, http needs base_url and model, ...).
void validate_config(const RunConfig& config);

/// Canonical "section.key=value" listing of every setting that affects results.
std::string canonical_config(const RunConfig& config);

/// SHA-256 of canonical_config(); stored in report provenance.
std::string config_digest(const RunConfig& config);

/// The rule table used by a stub provider without a rules file.
const StubRuleTable& default_stub_rules();

EngineOptions engine_options(const RunConfig& config);

/// Providers, cache and scorers wired from a config.
struct Runtime {
  std::shared_ptr<ResponseCache> cache;
  std::shared_ptr<CompletionBackend> backend;
  std::shared_ptr<StubBackend> stub;  // set for kind = stub
  std::shared_ptr<Embedder> embedder;
  std::unique_ptr<CompletionProvider> provider;
  ScorerSet scorers;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Builds the runtime. For kind = http the API key must be present in the environment
/// variable named by provider.api_key_env; otherwise ConfigError, before any network use.
Runtime make_runtime(const RunConfig& config, const EnvLookup& env = process_env);

}  // namespace promptlens
