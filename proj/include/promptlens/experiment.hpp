#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptlens/error.hpp"
#include "promptlens/importance.hpp"
#include "promptlens/types.hpp"

namespace promptlens {

/// A suffix appended to every prompt of a corpus, and the score it is designed to move.
struct SuffixSpec {
  std::string suffix_id;
  std::string text;
  std::string score_id;

  bool operator==(const SuffixSpec&) const = default;
};

struct SuffixExperimentRecord {
  std::string prompt_id;
  std::string suffix_id;
  std::string score_id;
  double suffix_impact = 0.0;
  double max_word_importance = 0.0;
  int n = 0;
  std::size_t m = 0;  // user inputs of the prompt
  std::string model_id;
  bool designed = false;  // score_id is the suffix's paired score

  bool operator==(const SuffixExperimentRecord&) const = default;
};

struct CorrelationSummary {
  std::string suffix_id;
  std::string score_id;
  std::optional<double> r;
  std::size_t n_points = 0;
  double slope = 0.0;
  double intercept = 0.0;
  bool computable = false;
  std::string reason;  // why r is missing when !computable
  bool designed = false;

  bool operator==(const CorrelationSummary&) const = default;
};

/// A (prompt, suffix) pair, or a whole corpus row, left out of the results.
struct Exclusion {
  std::string prompt_id;
  std::string suffix_id;  // empty when the whole prompt was excluded
  std::string reason;

  bool operator==(const Exclusion&) const = default;
};

/// Product-moment correlation. Throws InvalidArgument on a length mismatch, fewer than two
/// points, or zero variance in either argument.
template <typename DerivedX, typename DerivedY>
double pearson(const Eigen::MatrixBase<DerivedX>& xs, const Eigen::MatrixBase<DerivedY>& ys) {
  if (xs.size() != ys.size()) {
    throw InvalidArgument("pearson: length mismatch (" + std::to_string(xs.size()) + " vs " +
                          std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 2) throw InvalidArgument("pearson: need at least 2 points");
  const VectorXd x = xs.template cast<double>();
  const VectorXd y = ys.template cast<double>();
  const VectorXd dx = x.array() - x.mean();
  const VectorXd dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (!(sxx > 0.0)) throw InvalidArgument("pearson: xs has zero variance");
  if (!(syy > 0.0)) throw InvalidArgument("pearson: ys has zero variance");
  const double r = dx.dot(dy) / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept. Throws InvalidArgument on a length
/// mismatch, fewer than two points, or constant xs.
template <typename DerivedX, typename DerivedY>
LinearFit least_squares(const Eigen::MatrixBase<DerivedX>& xs,
                        const Eigen::MatrixBase<DerivedY>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("least_squares: length mismatch");
  if (xs.size() < 2) throw InvalidArgument("least_squares: need at least 2 points");
  const VectorXd x = xs.template cast<double>();
  const VectorXd y = ys.template cast<double>();
  const VectorXd dx = x.array() - x.mean();
  const double sxx = dx.squaredNorm();
  if (!(sxx > 0.0)) throw InvalidArgument("least_squares: xs has zero variance");
  LinearFit fit;
  fit.slope = dx.dot(VectorXd(y.array() - y.mean())) / sxx;
  fit.intercept = y.mean() - fit.slope * x.mean();
  return fit;
}

LinearFit least_squares(const std::vector<double>& xs, const std::vector<double>& ys);

/// Word-importance deviation between the prompt with its suffix (the baseline) and the bare prompt
/// (the variant), one entry per scorer; empty where too many holes.
std::vector<std::optional<double>> suffix_impact(const PromptSpec& spec,
                                                 CompletionProvider& provider,
                                                 const ScorerSet& scorers,
                                                 const EngineOptions& options);

struct ExperimentOptions {
  EngineOptions engine;
  /// Mask every word of prompt + suffix rather than only the suffix words.
  bool mask_all_words = false;
};

struct ExperimentResult {
  std::vector<SuffixExperimentRecord> records;  // sorted by (suffix_id, score_id, prompt_id)
  std::vector<CorrelationSummary> summaries;    // sorted by (suffix_id, score_id)
  std::vector<Exclusion> exclusions;
  std::size_t provider_calls = 0;
  bool partial = false;
};

/// Upper bound on samples an experiment needs, and how many are already cached.
CallPlan plan_experiment(const std::vector<PromptSpec>& corpus,
                         const std::vector<SuffixSpec>& suffixes,
                         const CompletionProvider& provider, const ExperimentOptions& options);

/// For each prompt and suffix: word importance of the suffix words, suffix impact, and one
/// record per score; then one correlation summary per (suffix, score) over the corpus.
/// Provider failures exclude the affected (prompt, suffix) pair and are listed.
ExperimentResult run_suffix_experiment(const std::vector<PromptSpec>& corpus,
                                       const std::vector<SuffixSpec>& suffixes,
                                       CompletionProvider& provider, const ScorerSet& scorers,
                                       const ExperimentOptions& options);

/// Pearson r and the OLS fit of (max_word_importance, suffix_impact) for every suffix and
/// every score id, including pairs without records (marked not computable).
std::vector<CorrelationSummary> summarize(const std::vector<SuffixExperimentRecord>& records,
                                          const std::vector<SuffixSpec>& suffixes,
                                          const std::vector<std::string>& score_ids);

/// A corpus file problem that excludes one row.
struct CorpusIssue {
  std::size_t line = 0;
  std::string message;

  bool operator==(const CorpusIssue&) const = default;
};

struct Corpus {
  std::vector<PromptSpec> prompts;
  std::vector<std::string> prompt_topics;  // aligned with prompts
  std::vector<CorpusIssue> issues;
};

/// Four columns: system_prompt, prompt_topic, user_input, input_topic. A header row with
/// those names is optional. Rows sharing a system prompt become one prompt whose user
/// inputs keep file order; prompt ids are p001, p002, ... in order of first appearance.
Corpus parse_corpus(std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);

/// One question per line; all questions share the system prompt "Answer truthfully.".
/// Blank lines and lines starting with '#' are skipped. Each question is its own prompt.
Corpus parse_question_list(std::string_view text);
Corpus load_question_list(const std::filesystem::path& path);

inline constexpr std::string_view kQuestionSystemPrompt = "Answer truthfully.";

/// Three columns: suffix_id, text, score_id, with an optional header row.
std::vector<SuffixSpec> parse_suffixes(std::string_view text);
std::vector<SuffixSpec> load_suffixes(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace promptlens
