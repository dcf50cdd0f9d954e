#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "promptlens/providers.hpp"
#include "promptlens/scoring.hpp"
#include "promptlens/text.hpp"
#include "promptlens/types.hpp"

namespace promptlens {

/// A system prompt, its user inputs, and an optional suffix appended after one space.
struct PromptSpec {
  std::string prompt_id;
  std::string system_prompt;
  std::vector<std::string> user_inputs;
  std::optional<std::string> suffix;

  /// system_prompt, or system_prompt + " " + suffix.
  std::string full_system_prompt() const;
  void validate() const;
};

enum class Aggregation {
  kPaired,        // i-th baseline sample against i-th masked sample
  kMeanBaseline,  // mean baseline of user input j against each masked sample
};

enum class Granularity {
  kWord,  // one word per variant
  kSpan,  // consecutive non-overlapping windows of span_size words, one glyph each
};

struct MaskingOptions {
  bool exclude_stopwords = false;
  std::string glyph = "_";
  Granularity granularity = Granularity::kWord;
  std::size_t span_size = 3;
  /// When set, only these token ordinals are masked (word granularity).
  std::optional<std::vector<std::size_t>> only_tokens;
};

struct EngineOptions {
  int n = 3;
  double temperature = 1.0;
  std::string model_id;
  Aggregation aggregation = Aggregation::kPaired;
  MaskingOptions masking;
  /// Upper limit on uncached provider calls; exceeding it throws BudgetExceeded before any
  /// call unless allow_over_budget is set.
  std::optional<std::size_t> budget;
  bool allow_over_budget = false;
  /// Polled between units of work; once true, remaining cells are left missing.
  const std::atomic<bool>* cancel = nullptr;
  /// Digest of the run configuration, recorded in provenance.
  std::string config_digest;
};

/// Per-sample scores of one prompt variant: scores[j][i] for user input j, sample i.
struct ScoredSamples {
  std::string system_prompt;
  std::vector<std::vector<ScoreVector>> scores;
  /// Set when sampling this variant failed; scores is then empty.
  std::optional<std::string> error;

  bool operator==(const ScoredSamples&) const = default;
};

/// One row of an importance matrix: a word, or a span of words.
struct MaskUnit {
  TokenRange tokens;
  std::string label;
  bool is_stopword = false;
  std::string masked_prompt;

  bool operator==(const MaskUnit&) const = default;
};

struct Provenance {
  std::string model_id;
  double temperature = 1.0;
  std::string timestamp;
  std::string config_digest;
  std::string tool_version;

  bool operator==(const Provenance&) const = default;
};

/// Word importance w(k) for every mask unit and score.
struct ImportanceMatrix {
  std::string prompt_id;
  std::string system_prompt;
  std::vector<std::string> user_inputs;
  std::vector<WordToken> tokens;
  std::vector<MaskUnit> units;
  std::vector<std::string> score_ids;
  MatrixXd values;  // units x scores, >= 0; 0 where not present
  MaskXb present;   // false marks a missing cell
  ScoredSamples baseline;
  std::vector<ScoredSamples> variants;  // aligned with units
  int n = 0;
  Aggregation aggregation = Aggregation::kPaired;
  Granularity granularity = Granularity::kWord;
  std::string glyph = "_";
  bool partial = false;
  std::size_t provider_calls = 0;  // uncached samples fetched while computing this matrix
  Provenance provenance;

  std::size_t rows() const { return units.size(); }
  std::size_t cols() const { return score_ids.size(); }
  std::optional<double> cell(std::size_t unit, std::size_t score) const;
  std::size_t score_column(std::string_view score_id) const;
};

/// The call plan of a word-importance run.
struct CallPlan {
  std::size_t variants = 0;      // masked prompts, excluding the baseline
  std::size_t total_samples = 0; // M * n * (1 + variants)
  std::size_t cached_samples = 0;
  std::size_t to_fetch() const { return total_samples - cached_samples; }
};

/// The mask units word_importance would evaluate for `spec`.
std::vector<MaskUnit> plan_units(const PromptSpec& spec, const MaskingOptions& masking);

CallPlan plan_calls(const PromptSpec& spec, const CompletionProvider& provider,
                    const EngineOptions& options);

/// Samples n completions per user input with the unmodified (full) system prompt and scores
/// each with every scorer. Provider failures propagate with user-input context.
ScoredSamples compute_baseline(const PromptSpec& spec, CompletionProvider& provider,
                               const ScorerSet& scorers, const EngineOptions& options);

/// Mean absolute score deviation between baseline and variant samples for one score column.
///
/// Paired: mean over (i, j) of |b[j][i] - v[j][i]|. Mean-baseline: mean over (i, j) of
/// |mean_i b[j][i] - v[j][i]|. Terms with a hole on either side are dropped and the divisor
/// shrinks to the remaining count; more than half dropped gives an empty result.
std::optional<double> aggregate_deviation(const ScoredSamples& baseline,
                                          const ScoredSamples& variant, std::size_t score,
                                          Aggregation aggregation);

/// Full word-importance analysis: baseline plus one variant per mask unit.
ImportanceMatrix word_importance(const PromptSpec& spec, CompletionProvider& provider,
                                 const ScorerSet& scorers, const EngineOptions& options);

/// Token ordinals (in the full system prompt) that come from the suffix region.
std::vector<std::size_t> suffix_words(const PromptSpec& spec);

/// Runs fn(0..count-1) on up to `workers` threads. Exceptions are rethrown after all tasks
/// finish (the first one wins).
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace promptlens
