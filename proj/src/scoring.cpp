#include "promptlens/scoring.hpp"

#include <array>
#include <cctype>

#include "promptlens/providers.hpp"
#include "promptlens/text.hpp"

namespace promptlens {
namespace {

constexpr std::array<std::string_view, 17> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs",
    "etc", "e.g", "i.e", "inc", "ltd", "fig", "approx", "cf",
};

bool is_blank(unsigned char c) { return std::isspace(c) != 0; }

bool is_closer(unsigned char c) {
  return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}';
}

// Terminators: '.', '!', '?' and U+2026 (three bytes).
std::size_t terminator_length(std::string_view text, std::size_t i) {
  const char c = text[i];
  if (c == '.' || c == '!' || c == '?') return 1;
  if (text.compare(i, 3, "\xE2\x80\xA6") == 0) return 3;
  return 0;
}

// Closing quotes and brackets, ASCII or U+2019 / U+201D.
std::size_t closer_length(std::string_view text, std::size_t i) {
  if (is_closer(static_cast<unsigned char>(text[i]))) return 1;
  if (text.compare(i, 3, "\xE2\x80\x99") == 0 || text.compare(i, 3, "\xE2\x80\x9D") == 0) {
    return 3;
  }
  return 0;
}

bool follows_abbreviation(std::string_view text, std::size_t run_begin) {
  std::size_t b = run_begin;
  while (b > 0) {
    const auto c = static_cast<unsigned char>(text[b - 1]);
    if (std::isalpha(c) || c == '.') {
      --b;
    } else {
      break;
    }
  }
  if (b == run_begin) return false;
  std::string word;
  for (std::size_t k = b; k < run_begin; ++k) {
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
  }
  for (const auto abbreviation : kAbbreviations) {
    if (word == abbreviation) return true;
  }
  return false;
}

class WordCountScorer final : public Scorer {
 public:
  const std::string& id() const override { return id_; }
  double score(std::string_view text) const override {
    return static_cast<double>(word_count(text));
  }

 private:
  std::string id_{kWordCountId};
};

class FleschScorer final : public Scorer {
 public:
  const std::string& id() const override { return id_; }
  double score(std::string_view text) const override { return flesch_reading_ease(text); }

 private:
  std::string id_{kFleschId};
};

class TopicScorer final : public Scorer {
 public:
  TopicScorer(const std::string& topic, std::shared_ptr<Embedder> embedder)
      : id_(std::string(kTopicSimilarityPrefix) + topic),
        embedder_(embedder),
        topic_(topic, std::move(embedder)) {}

  const std::string& id() const override { return id_; }
  double score(std::string_view text) const override {
    return topic_similarity(text, topic_, *embedder_);
  }

 private:
  std::string id_;
  std::shared_ptr<Embedder> embedder_;
  TopicSpec topic_;
};

}  // namespace

std::size_t word_count(std::string_view text) { return count_words(text); }

std::size_t count_sentences(std::string_view text) {
  const auto tokens = tokenize(text);
  std::size_t next_token = 0;
  std::size_t sentences = 0;
  bool open_words = false;  // words seen since the last counted terminator
  std::size_t i = 0;
  while (i < text.size()) {
    while (next_token < tokens.size() && tokens[next_token].span.begin <= i) {
      open_words = true;
      ++next_token;
    }
    const std::size_t term = terminator_length(text, i);
    if (term == 0) {
      ++i;
      continue;
    }
    const std::size_t run_begin = i;
    while (i < text.size()) {
      const std::size_t n = terminator_length(text, i);
      if (n == 0) break;
      i += n;
    }
    const bool single_period = (i - run_begin == 1 && text[run_begin] == '.');
    std::size_t j = i;
    while (j < text.size()) {
      const std::size_t n = closer_length(text, j);
      if (n == 0) break;
      j += n;
    }
    const bool at_boundary = j == text.size() || is_blank(static_cast<unsigned char>(text[j]));
    if (!at_boundary) continue;  // "3.14", "example.com"
    if (single_period && follows_abbreviation(text, run_begin)) continue;
    if (open_words) {
      ++sentences;
      open_words = false;
    }
    i = j;
  }
  if (open_words || next_token < tokens.size()) ++sentences;
  if (sentences == 0) {
    for (const char c : text) {
      if (!is_blank(static_cast<unsigned char>(c))) return 1;
    }
  }
  return sentences;
}

int count_syllables(std::string_view word) {
  std::string letters;
  for (const char c : word) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isalpha(u)) letters.push_back(static_cast<char>(std::tolower(u)));
  }
  if (letters.empty()) return 1;
  const auto is_vowel = [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
  };
  int groups = 0;
  bool in_group = false;
  for (const char c : letters) {
    const bool vowel = is_vowel(c);
    if (vowel && !in_group) ++groups;
    in_group = vowel;
  }
  const std::size_t n = letters.size();
  if (letters.back() == 'e') {
    const bool consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
    if (!consonant_le) --groups;
  }
  return groups < 1 ? 1 : groups;
}

double flesch_reading_ease(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw UndefinedScore("flesch_reading_ease: text has no words");
  const auto words = static_cast<double>(tokens.size());
  const auto sentences = static_cast<double>(count_sentences(text));
  double syllables = 0.0;
  for (const auto& token : tokens) syllables += count_syllables(token.text);
  return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words);
}

TopicSpec::TopicSpec(std::string name, std::shared_ptr<Embedder> embedder)
    : name_(std::move(name)), embedder_(std::move(embedder)) {
  if (name_.empty()) throw InvalidArgument("topic name must not be empty");
  if (!embedder_) throw InvalidArgument("topic requires an embedder");
}

const Embedding& TopicSpec::embedding() const {
  std::lock_guard lock(mutex_);
  if (!embedding_) {
    Embedding e = embedder_->embed(name_);
    if (!(e.norm() > 0.0)) {
      throw InvalidArgument("topic '" + name_ + "' has a zero embedding");
    }
    embedding_ = std::move(e);
  }
  return *embedding_;
}

double topic_similarity(std::string_view text, const TopicSpec& topic, Embedder& embedder) {
  if (count_words(text) == 0) throw UndefinedScore("topic_similarity: text has no words");
  Embedding e;
  try {
    e = embedder.embed(text);
  } catch (const ProviderError& err) {
    std::string head(text.substr(0, 60));
    throw ProviderError(err.kind(), "embedding failed for text \"" + head + "\": " + err.what());
  }
  if (!(e.norm() > 0.0)) throw UndefinedScore("topic_similarity: text embedding is zero");
  return cosine_similarity(e, topic.embedding());
}

ScorerPtr make_word_count_scorer() { return std::make_shared<WordCountScorer>(); }

ScorerPtr make_flesch_scorer() { return std::make_shared<FleschScorer>(); }

ScorerPtr make_topic_scorer(const std::string& topic, std::shared_ptr<Embedder> embedder) {
  return std::make_shared<TopicScorer>(topic, std::move(embedder));
}

ScorerSet make_scorers(const std::vector<std::string>& ids, std::shared_ptr<Embedder> embedder) {
  ScorerSet out;
  for (const auto& id : ids) {
    if (id == kWordCountId) {
      out.push_back(make_word_count_scorer());
    } else if (id == kFleschId) {
      out.push_back(make_flesch_scorer());
    } else if (id.starts_with(kTopicSimilarityPrefix) &&
               id.size() > kTopicSimilarityPrefix.size()) {
      if (!embedder) throw InvalidArgument("score '" + id + "' needs an embedder");
      out.push_back(make_topic_scorer(id.substr(kTopicSimilarityPrefix.size()), embedder));
    } else {
      throw InvalidArgument("unknown score id '" + id + "'");
    }
  }
  for (std::size_t a = 0; a < out.size(); ++a) {
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      if (out[a]->id() == out[b]->id()) {
        throw InvalidArgument("score id '" + out[a]->id() + "' listed twice");
      }
    }
  }
  return out;
}

std::optional<double> ScoreVector::at(std::string_view id) const {
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] == id) return values[k];
  }
  throw InvalidArgument("score id '" + std::string(id) + "' not present");
}

ScoreVector score_text(const ScorerSet& scorers, std::string_view text) {
  ScoreVector out;
  out.ids.reserve(scorers.size());
  out.values.reserve(scorers.size());
  for (const auto& scorer : scorers) {
    out.ids.push_back(scorer->id());
    try {
      const double v = scorer->score(text);
      out.values.push_back(std::isfinite(v) ? std::optional<double>(v) : std::nullopt);
    } catch (const UndefinedScore&) {
      out.values.push_back(std::nullopt);
    }
  }
  return out;
}

}  // namespace promptlens
