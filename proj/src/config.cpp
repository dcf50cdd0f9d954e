#include "promptlens/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "promptlens/error.hpp"
#include "promptlens/format.hpp"
#include "promptlens/hashing.hpp"
#include "promptlens/http.hpp"

namespace promptlens {
namespace {

namespace pt = boost::property_tree;

constexpr std::string_view kDefaultStubRules = R"({
  "base": {"words": 40, "long_words": 4, "sentence_length": 10},
  "jitter_words": 3,
  "ignore_system_prompt": false,
  "rules": [
    {"when": "detailed", "words": 60},
    {"when": "long story", "words": 120},
    {"when": "technical", "long_words": 12},
    {"when": "five", "words": -10, "long_words": -4},
    {"when": "acme", "inject": {"acme": 8}},
    {"when": "ai", "inject": {"ai": 6, "research": 3}}
  ]
})";

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> kKeys = {
      {"provider",
       {"kind", "base_url", "model", "embedding_model", "parallelism", "cache_dir", "api_key_env",
        "batch_n", "max_attempts", "timeout_seconds"}},
      {"sampling", {"n", "temperature"}},
      {"scoring", {"scores"}},
      {"masking", {"exclude_stopwords", "glyph", "granularity", "span_size"}},
      {"engine", {"aggregation", "budget"}},
      {"stub", {"seed", "rules", "embed_dim"}},
      {"output", {"dir"}},
  };
  return kKeys;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

void check_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    throw ConfigError(key + ": expected section.key");
  }
  const std::string section = key.substr(0, dot);
  const std::string name = key.substr(dot + 1);
  const auto it = known_keys().find(section);
  if (it == known_keys().end()) throw ConfigError(key + ": unknown section [" + section + "]");
  if (section == "provider" && name == "api_key") {
    throw ConfigError("provider.api_key: secrets are not read from config; set the variable named "
                      "by provider.api_key_env");
  }
  if (!it->second.contains(name)) throw ConfigError(key + ": unknown key");
}

long long parse_int(const std::string& key, const std::string& value, long long min) {
  long long out = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  if (out < min) throw ConfigError(key + ": must be >= " + std::to_string(min));
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = to_lower(value);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = std::min(value.find(',', pos), value.size());
    std::string item = trim(std::string_view(value).substr(pos, comma - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = comma + 1;
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

void apply(RunConfig& c, const std::string& key, const std::string& raw,
           const std::filesystem::path& base) {
  check_key(key);
  const std::string value = trim(raw);
  if (key == "provider.kind") {
    if (value != "stub" && value != "http") {
      throw ConfigError("provider.kind: expected 'stub' or 'http', got '" + value + "'");
    }
    c.provider.kind = value;
  } else if (key == "provider.base_url") {
    c.provider.base_url = value;
  } else if (key == "provider.model") {
    c.provider.model = value;
  } else if (key == "provider.embedding_model") {
    c.provider.embedding_model = value;
  } else if (key == "provider.parallelism") {
    c.provider.parallelism = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "provider.cache_dir") {
    if (value.empty()) throw ConfigError("provider.cache_dir: must not be empty");
    c.provider.cache_dir = resolve(base, value);
  } else if (key == "provider.api_key_env") {
    if (value.empty()) throw ConfigError("provider.api_key_env: must not be empty");
    c.provider.api_key_env = value;
  } else if (key == "provider.batch_n") {
    c.provider.batch_n = parse_bool(key, value);
  } else if (key == "provider.max_attempts") {
    c.provider.max_attempts = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "provider.timeout_seconds") {
    c.provider.timeout_seconds = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "sampling.n") {
    c.n = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "sampling.temperature") {
    c.temperature = parse_real(key, value);
    if (c.temperature < 0.0) throw ConfigError("sampling.temperature: must be >= 0");
  } else if (key == "scoring.scores") {
    c.scores = parse_list(value);
    if (c.scores.empty()) throw ConfigError("scoring.scores: at least one score is required");
    for (const auto& id : c.scores) {
      const bool ok = id == kWordCountId || id == kFleschId ||
                      (id.starts_with(kTopicSimilarityPrefix) &&
                       id.size() > kTopicSimilarityPrefix.size());
      if (!ok) throw ConfigError("scoring.scores: unknown score '" + id + "'");
    }
  } else if (key == "masking.exclude_stopwords") {
    c.masking.exclude_stopwords = parse_bool(key, value);
  } else if (key == "masking.glyph") {
    if (value.empty() || value.find_first_of(" \t\r\n") != std::string::npos) {
      throw ConfigError("masking.glyph: must be non-empty without whitespace");
    }
    c.masking.glyph = value;
  } else if (key == "masking.granularity") {
    if (value == "word") {
      c.masking.granularity = Granularity::kWord;
    } else if (value == "span") {
      c.masking.granularity = Granularity::kSpan;
    } else {
      throw ConfigError("masking.granularity: expected 'word' or 'span', got '" + value + "'");
    }
  } else if (key == "masking.span_size") {
    c.masking.span_size = static_cast<std::size_t>(parse_int(key, value, 1));
  } else if (key == "engine.aggregation") {
    if (value == "paired") {
      c.aggregation = Aggregation::kPaired;
    } else if (value == "mean_baseline") {
      c.aggregation = Aggregation::kMeanBaseline;
    } else {
      throw ConfigError("engine.aggregation: expected 'paired' or 'mean_baseline', got '" + value + "'");
    }
  } else if (key == "engine.budget") {
    if (value.empty() || value == "none") {
      c.budget.reset();
    } else {
      c.budget = static_cast<std::size_t>(parse_int(key, value, 0));
    }
  } else if (key == "stub.seed") {
    c.seed = parse_u64(key, value);
  } else if (key == "stub.rules") {
    if (value.empty()) {
      c.stub_rules_path.reset();
    } else {
      c.stub_rules_path = resolve(base, value);
    }
  } else if (key == "stub.embed_dim") {
    c.embed_dim = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "output.dir") {
    if (value.empty()) throw ConfigError("output.dir: must not be empty");
    c.output_dir = resolve(base, value);
  }
}

std::string aggregation_name(Aggregation a) {
  return a == Aggregation::kPaired ? "paired" : "mean_baseline";
}

}  // namespace

const StubRuleTable& default_stub_rules() {
  static const StubRuleTable kTable = stub_rules_from_json(nlohmann::json::parse(kDefaultStubRules));
  return kTable;
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                       const ConfigOverrides& overrides) {
  // The INI parser knows only ';' comments.
  std::string prepared;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    const std::string t = trim(line);
    prepared += t.starts_with("#") ? ";" + line : line;
    prepared += "\n";
  }
  pt::ptree tree;
  try {
    std::istringstream in(prepared);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(section + ": key outside of a [section]");
    }
    for (const auto& [name, value] : body) apply(c, section + "." + name, value.data(), base_dir);
  }
  for (const auto& [key, value] : overrides) apply(c, key, value, {});

  if (c.stub_rules_path) {
    c.stub_rules = load_stub_rules(*c.stub_rules_path);
  } else {
    c.stub_rules = default_stub_rules();
  }
  validate_config(c);
  return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const ConfigOverrides& overrides) {
  if (!path) return parse_config("", {}, overrides);
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path->string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path->parent_path(), overrides);
}

void validate_config(const RunConfig& c) {
  if (c.n < 1) throw ConfigError("sampling.n: must be >= 1");
  if (c.provider.parallelism < 1) throw ConfigError("provider.parallelism: must be >= 1");
  if (c.provider.kind == "stub") {
    if (!c.seed) throw ConfigError("stub.seed: required when provider.kind = stub (or pass --seed)");
  } else {
    if (c.provider.base_url.empty()) throw ConfigError("provider.base_url: required when provider.kind = http");
    if (c.provider.model.empty() || c.provider.model == "stub-model") {
      throw ConfigError("provider.model: required when provider.kind = http");
    }
    parse_base_url(c.provider.base_url);
    bool topics = false;
    for (const auto& id : c.scores) topics = topics || id.starts_with(kTopicSimilarityPrefix);
    if (topics && c.provider.embedding_model.empty()) {
      throw ConfigError("provider.embedding_model: required for topic_similarity scores");
    }
  }
}

std::string canonical_config(const RunConfig& c) {
  std::ostringstream os;
  os << "provider.kind=" << c.provider.kind << "\n";
  if (c.provider.kind == "http") {
    os << "provider.base_url=" << c.provider.base_url << "\n"
       << "provider.embedding_model=" << c.provider.embedding_model << "\n";
  }
  os << "provider.model=" << c.provider.model << "\n"
     << "sampling.n=" << c.n << "\n"
     << "sampling.temperature=" << format_double(c.temperature) << "\n"
     << "scoring.scores=";
  for (std::size_t k = 0; k < c.scores.size(); ++k) os << (k ? "," : "") << c.scores[k];
  os << "\n"
     << "masking.exclude_stopwords=" << (c.masking.exclude_stopwords ? "true" : "false") << "\n"
     << "masking.glyph=" << c.masking.glyph << "\n"
     << "masking.granularity=" << (c.masking.granularity == Granularity::kWord ? "word" : "span") << "\n"
     << "masking.span_size=" << c.masking.span_size << "\n"
     << "engine.aggregation=" << aggregation_name(c.aggregation) << "\n";
  if (c.provider.kind == "stub") {
    os << "stub.seed=" << (c.seed ? std::to_string(*c.seed) : "") << "\n"
       << "stub.embed_dim=" << c.embed_dim << "\n"
       << "stub.rules=" << stub_rules_to_json(c.stub_rules).dump() << "\n";
  }
  return os.str();
}

std::string config_digest(const RunConfig& config) { return sha256_hex(canonical_config(config)); }

EngineOptions engine_options(const RunConfig& c) {
  EngineOptions o;
  o.n = c.n;
  o.temperature = c.temperature;
  o.model_id = c.provider.model;
  o.aggregation = c.aggregation;
  o.masking = c.masking;
  o.budget = c.budget;
  o.config_digest = config_digest(c);
  return o;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str()); v != nullptr && *v != '\0') return std::string(v);
  return std::nullopt;
}

Runtime make_runtime(const RunConfig& c, const EnvLookup& env) {
  validate_config(c);
  Runtime rt;
  rt.cache = std::make_shared<ResponseCache>(c.provider.cache_dir);
  std::shared_ptr<Embedder> raw_embedder;
  if (c.provider.kind == "stub") {
    rt.stub = std::make_shared<StubBackend>(c.stub_rules, *c.seed);
    rt.backend = rt.stub;
    raw_embedder = std::make_shared<StubEmbedder>(c.embed_dim);
  } else {
    const auto key = env(c.provider.api_key_env);
    if (!key) {
      throw ConfigError("provider.api_key_env: environment variable " + c.provider.api_key_env +
                        " is not set");
    }
    HttpSettings settings;
    settings.base_url = c.provider.base_url;
    settings.model_id = c.provider.model;
    settings.embedding_model = c.provider.embedding_model;
    settings.api_key = *key;
    settings.max_attempts = c.provider.max_attempts;
    settings.timeout = std::chrono::seconds(c.provider.timeout_seconds);
    settings.batch_n = c.provider.batch_n;
    rt.backend = std::make_shared<HttpCompletionBackend>(settings);
    raw_embedder = std::make_shared<HttpEmbedder>(settings);
  }
  const std::string embed_model =
      c.provider.kind == "stub" ? "stub-embed" : c.provider.embedding_model;
  rt.embedder = std::make_shared<CachingEmbedder>(raw_embedder, rt.cache, embed_model);
  rt.provider = std::make_unique<CompletionProvider>(rt.backend, rt.cache, c.provider.parallelism);
  rt.scorers = make_scorers(c.scores, rt.embedder);
  return rt;
}

}  // namespace promptlens
