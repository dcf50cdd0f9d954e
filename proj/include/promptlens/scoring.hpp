#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptlens/error.hpp"
#include "promptlens/types.hpp"

namespace promptlens {

class Embedder;

// Stable score ids; they appear verbatim in report files.
inline constexpr std::string_view kWordCountId = "word_count";
inline constexpr std::string_view kFleschId = "flesch_reading_ease";
inline constexpr std::string_view kTopicSimilarityPrefix = "topic_similarity:";

/// Number of words, same word rule as tokenize(). Empty text has zero words.
std::size_t word_count(std::string_view text);

/// Sentence count used by the Flesch formula.
///
/// A sentence ends at a run of '.', '!', '?' or '…' that is followed by whitespace or the
/// end of text (closing quotes and brackets may sit in between) and that closes at least
/// one word. A lone '.' after a known abbreviation (Mr, Dr, e.g, etc, ...) does not end a
/// sentence. Words after the last terminator form one more sentence. Any non-blank text
/// counts as at least one sentence; blank text has zero.
std::size_t count_sentences(std::string_view text);

/// Vowel-group syllable estimate for one word: runs of a/e/i/o/u/y among the ASCII
/// letters, minus one for a trailing silent "e" (kept when the word ends in consonant +
/// "le"), never below 1.
int count_syllables(std::string_view word);

/// 206.835 - 1.015 * words/sentences - 84.6 * syllables/words, unclamped.
/// Throws UndefinedScore when the text has no words.
double flesch_reading_ease(std::string_view text);

/// dot(a, b) / (|a| |b|). Throws InvalidArgument on size mismatch or a zero vector.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                         const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw InvalidArgument("cosine_similarity: zero vector");
  return a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
}

/// Topic name plus its embedding, computed on first use and then reused.
class TopicSpec {
 public:
  TopicSpec(std::string name, std::shared_ptr<Embedder> embedder);

  const std::string& name() const { return name_; }
  const Embedding& embedding() const;

 private:
  std::string name_;
  std::shared_ptr<Embedder> embedder_;
  mutable std::mutex mutex_;
  mutable std::optional<Embedding> embedding_;
};

/// Cosine similarity between embed(text) and the topic embedding.
double topic_similarity(std::string_view text, const TopicSpec& topic, Embedder& embedder);

/// A text score. score() throws UndefinedScore when the text has no value under it.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const std::string& id() const = 0;
  virtual double score(std::string_view text) const = 0;
};

using ScorerPtr = std::shared_ptr<const Scorer>;
using ScorerSet = std::vector<ScorerPtr>;

ScorerPtr make_word_count_scorer();
ScorerPtr make_flesch_scorer();
ScorerPtr make_topic_scorer(const std::string& topic, std::shared_ptr<Embedder> embedder);

/// Builds scorers from ids: "word_count", "flesch_reading_ease", "topic_similarity:<topic>".
ScorerSet make_scorers(const std::vector<std::string>& ids, std::shared_ptr<Embedder> embedder);

/// Scores of one text under a scorer set; an empty optional is a score hole.
struct ScoreVector {
  std::vector<std::string> ids;
  std::vector<std::optional<double>> values;

  std::optional<double> at(std::string_view id) const;
  bool operator==(const ScoreVector&) const = default;
};

/// Applies every scorer. UndefinedScore and non-finite results become holes; anything
/// else propagates.
ScoreVector score_text(const ScorerSet& scorers, std::string_view text);

}  // namespace promptlens
