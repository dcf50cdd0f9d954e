#include "promptlens/stub.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "promptlens/error.hpp"
#include "promptlens/hashing.hpp"
#include "promptlens/text.hpp"

namespace promptlens {
namespace {

using Words = std::vector<std::string>;

Words lowered_words(std::string_view text) {
  Words out;
  for (auto& token : tokenize(text)) out.push_back(to_lower(token.text));
  return out;
}

bool contains_phrase(const Words& haystack, const Words& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), phrase.begin(), phrase.end()) !=
         haystack.end();
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::string capitalized(std::string word) {
  if (!word.empty()) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  return word;
}

std::uint64_t mix(std::uint64_t h, std::string_view field) {
  h = fnv1a64(std::to_string(field.size()), h);
  h = fnv1a64(":", h);
  return fnv1a64(field, h);
}

}  // namespace

const std::vector<std::string>& stub_short_vocabulary() {
  static const std::vector<std::string> kWords = {
      "cat", "dog", "sun", "red", "big", "box", "hat", "run", "sat", "mat",
      "pen", "cup", "map", "bus", "bed", "fox", "jam", "kit", "log", "mud",
      "nut", "pig", "rat", "top", "van", "web", "zip", "fig", "gum", "hen",
  };
  return kWords;
}

const std::vector<std::string>& stub_long_vocabulary() {
  static const std::vector<std::string> kWords = {
      "information",   "communication", "organization", "responsibility", "international",
      "understanding", "university",    "opportunity",  "technology",     "development",
  };
  return kWords;
}

StubRuleTable stub_rules_from_json(const nlohmann::json& j) {
  check_keys(j, {"base", "jitter_words", "ignore_system_prompt", "rules"}, "stub rules");
  StubRuleTable table;
  if (j.contains("base")) {
    const auto& base = j.at("base");
    check_keys(base, {"words", "long_words", "sentence_length"}, "base");
    table.base_words = get_or(base, "words", table.base_words, "base");
    table.base_long_words = get_or(base, "long_words", table.base_long_words, "base");
    table.sentence_length = get_or(base, "sentence_length", table.sentence_length, "base");
  }
  table.jitter_words = get_or(j, "jitter_words", 0, "stub rules");
  table.ignore_system_prompt = get_or(j, "ignore_system_prompt", false, "stub rules");
  if (table.base_words < 0 || table.base_long_words < 0) {
    throw ConfigError("base: word counts must be >= 0");
  }
  if (table.sentence_length < 1) throw ConfigError("base.sentence_length: must be >= 1");
  if (table.jitter_words < 0) throw ConfigError("jitter_words: must be >= 0");

  if (j.contains("rules")) {
    if (!j.at("rules").is_array()) throw ConfigError("rules: expected an array");
    std::size_t index = 0;
    for (const auto& r : j.at("rules")) {
      const std::string where = "rules[" + std::to_string(index++) + "]";
      check_keys(r, {"when", "in", "words", "long_words", "inject", "gain"}, where);
      StubRule rule;
      if (!r.contains("when")) throw ConfigError(where + ".when: required");
      if (r.at("when").is_string()) {
        rule.when.push_back(r.at("when").get<std::string>());
      } else {
        rule.when = get_or<std::vector<std::string>>(r, "when", {}, where);
      }
      if (rule.when.empty()) throw ConfigError(where + ".when: must name at least one phrase");
      for (const auto& phrase : rule.when) {
        if (count_words(phrase) == 0) {
          throw ConfigError(where + ".when: phrase '" + phrase + "' has no words");
        }
      }
      const auto scope = get_or<std::string>(r, "in", "system", where);
      if (scope != "system" && scope != "user") {
        throw ConfigError(where + ".in: expected 'system' or 'user'");
      }
      rule.in_user = scope == "user";
      rule.words = get_or(r, "words", 0, where);
      rule.long_words = get_or(r, "long_words", 0, where);
      rule.inject = get_or<std::map<std::string, int>>(r, "inject", {}, where);
      rule.gain = get_or(r, "gain", 1.0, where);
      if (!std::isfinite(rule.gain) || rule.gain < 0.0) {
        throw ConfigError(where + ".gain: must be finite and >= 0");
      }
      table.rules.push_back(std::move(rule));
    }
  }
  return table;
}

nlohmann::json stub_rules_to_json(const StubRuleTable& table) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : table.rules) {
    rules.push_back({{"when", rule.when},
                     {"in", rule.in_user ? "user" : "system"},
                     {"words", rule.words},
                     {"long_words", rule.long_words},
                     {"inject", rule.inject},
                     {"gain", rule.gain}});
  }
  return {{"base",
           {{"words", table.base_words},
            {"long_words", table.base_long_words},
            {"sentence_length", table.sentence_length}}},
          {"jitter_words", table.jitter_words},
          {"ignore_system_prompt", table.ignore_system_prompt},
          {"rules", rules}};
}

StubRuleTable load_stub_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stub rules file " + path.string());
  try {
    return stub_rules_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("stub rules file " + path.string() + ": " + e.what());
  }
}

StubBackend::StubBackend(StubRuleTable table, std::uint64_t seed)
    : table_(std::move(table)), seed_(seed) {
  kind_ = "stub:" +
          sha256_hex(stub_rules_to_json(table_).dump() + "|" + std::to_string(seed_)).substr(0, 16);
}

std::string StubBackend::generate(const CompletionRequest& request, int sample_index) {
  ++calls_;
  const std::string_view system =
      table_.ignore_system_prompt ? std::string_view{} : std::string_view{request.system_prompt};
  const Words system_words = lowered_words(system);
  const Words user_words = lowered_words(request.user_input);

  double gain = 1.0;
  long words_delta = 0;
  long long_delta = 0;
  std::map<std::string, long> injected;
  for (const auto& rule : table_.rules) {
    const Words& haystack = rule.in_user ? user_words : system_words;
    const bool fires = std::all_of(rule.when.begin(), rule.when.end(), [&](const auto& phrase) {
      return contains_phrase(haystack, lowered_words(phrase));
    });
    if (!fires) continue;
    gain *= rule.gain;
    words_delta += rule.words;
    long_delta += rule.long_words;
    for (const auto& [word, count] : rule.inject) injected[word] += count;
  }

  const bool noisy = table_.jitter_words > 0 && request.temperature > 0.0;
  std::uint64_t h = fnv1a64(std::to_string(seed_));
  h = mix(h, system);
  h = mix(h, request.user_input);
  h = mix(h, noisy ? std::to_string(sample_index) : std::string("-"));
  std::mt19937_64 rng(h);

  long total = table_.base_words + std::lround(gain * static_cast<double>(words_delta));
  if (noisy) {
    const auto span = static_cast<std::uint64_t>(2 * table_.jitter_words + 1);
    total += static_cast<long>(rng() % span) - table_.jitter_words;
  }
  total = std::max(0L, total);
  const long long_count = std::clamp(
      table_.base_long_words + std::lround(gain * static_cast<double>(long_delta)), 0L, total);

  const auto& short_words = stub_short_vocabulary();
  const auto& long_words = stub_long_vocabulary();
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(total));
  long placed_long = 0;
  for (long p = 0; p < total; ++p) {
    const bool is_long = (p + 1) * long_count / total > p * long_count / total;
    if (is_long) {
      const auto k = noisy ? rng() % long_words.size()
                           : static_cast<std::size_t>(placed_long) % long_words.size();
      words.push_back(long_words[k]);
      ++placed_long;
    } else {
      const auto k = noisy ? rng() % short_words.size()
                           : static_cast<std::size_t>(p) % short_words.size();
      words.push_back(short_words[k]);
    }
  }
  for (const auto& [word, count] : injected) {
    const long reps = std::max(0L, std::lround(gain * static_cast<double>(count)));
    for (long r = 0; r < reps; ++r) words.push_back(word);
  }

  std::string out;
  const auto per_sentence = static_cast<std::size_t>(table_.sentence_length);
  for (std::size_t start = 0; start < words.size(); start += per_sentence) {
    if (!out.empty()) out.push_back(' ');
    const std::size_t stop = std::min(words.size(), start + per_sentence);
    for (std::size_t k = start; k < stop; ++k) {
      if (k > start) out.push_back(' ');
      out += k == start ? capitalized(words[k]) : words[k];
    }
    out.push_back('.');
  }
  return out;
}

StubEmbedder::StubEmbedder(int dimension) : dimension_(dimension) {
  if (dimension < 1) throw InvalidArgument("stub embedder dimension must be >= 1");
}

std::size_t StubEmbedder::bucket(std::string_view word) const {
  return static_cast<std::size_t>(fnv1a64(to_lower(word)) % static_cast<std::uint64_t>(dimension_));
}

Embedding StubEmbedder::embed(std::string_view text) {
  if (text.empty()) throw InvalidArgument("embed: empty text");
  Embedding e = Embedding::Zero(dimension_);
  for (const auto& token : tokenize(text)) e[static_cast<Eigen::Index>(bucket(token.text))] += 1.0;
  return e;
}

}  // namespace promptlens
