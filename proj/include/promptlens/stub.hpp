#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptlens/providers.hpp"

namespace promptlens {

/// One rule of the stub model. It fires when every phrase in `when` occurs as a whole-word,
/// case-insensitive token sequence in the system prompt (or user input, for in_user rules).
/// Effects of all firing rules add up, then get multiplied by the product of their gains.
struct StubRule {
  std::vector<std::string> when;
  bool in_user = false;
  int words = 0;        // added filler words (may be negative)
  int long_words = 0;   // filler words swapped for long, many-syllable words
  std::map<std::string, int> inject;  // word -> repetitions appended to the output
  double gain = 1.0;

  bool operator==(const StubRule&) const = default;
};

/// Parameters of the deterministic fake model.
///
/// An output is built from `base_words` filler words (one-syllable vocabulary), `long_words`
/// of which are drawn from a long-word vocabulary instead, followed by injected words, then
/// cut into sentences of `sentence_length` words. With jitter_words > 0 and temperature > 0
/// the length varies by up to ±jitter_words and filler words are drawn at random, seeded by
/// (seed, system prompt, user input, sample index). Otherwise the output does not depend on
/// the sample index.
struct StubRuleTable {
  int base_words = 30;
  int base_long_words = 0;
  int sentence_length = 10;
  int jitter_words = 0;
  bool ignore_system_prompt = false;
  std::vector<StubRule> rules;

  bool operator==(const StubRuleTable&) const = default;
};

StubRuleTable stub_rules_from_json(const nlohmann::json& j);
nlohmann::json stub_rules_to_json(const StubRuleTable& table);
StubRuleTable load_stub_rules(const std::filesystem::path& path);

/// Filler vocabularies used by the stub; exposed so tests can check hash separation.
const std::vector<std::string>& stub_short_vocabulary();
const std::vector<std::string>& stub_long_vocabulary();

class StubBackend final : public CompletionBackend {
 public:
  StubBackend(StubRuleTable table, std::uint64_t seed);

  /// "stub:" plus a digest of the rule table and seed, so changed rules never hit stale
  /// cache entries.
  std::string kind() const override { return kind_; }
  std::string generate(const CompletionRequest& request, int sample_index) override;

  /// Number of generate() calls, i.e. samples produced.
  std::size_t calls() const { return calls_.load(); }
  void reset_calls() { calls_ = 0; }

  const StubRuleTable& table() const { return table_; }

 private:
  StubRuleTable table_;
  std::uint64_t seed_;
  std::string kind_;
  std::atomic<std::size_t> calls_{0};
};

/// Bag-of-hashed-words embedder: each lowercase word adds 1 to bucket fnv1a64(word) % dim.
/// Texts with disjoint vocabularies are orthogonal unless two words share a bucket.
class StubEmbedder final : public Embedder {
 public:
  explicit StubEmbedder(int dimension = 4096);

  std::string kind() const override { return "stub-embed:" + std::to_string(dimension_); }
  Embedding embed(std::string_view text) override;

  int dimension() const { return dimension_; }
  std::size_t bucket(std::string_view word) const;

 private:
  int dimension_;
};

}  // namespace promptlens
