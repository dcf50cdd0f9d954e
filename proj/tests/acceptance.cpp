#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "flesch_oracle.hpp"
#include "oracle.hpp"
#include "promptlens/config.hpp"
#include "promptlens/experiment.hpp"
#include "promptlens/format.hpp"
#include "promptlens/report.hpp"
#include "promptlens/scoring.hpp"
#include "promptlens/stub.hpp"
#include "promptlens/text.hpp"
#include "support.hpp"

using namespace promptlens;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Status { kPass, kFail, kSkip } status = kFail;
  std::string detail;
};

Outcome fail(std::string detail) { return {Outcome::kFail, std::move(detail)}; }
Outcome check(bool ok, std::string detail) { return {ok ? Outcome::kPass : Outcome::kFail, std::move(detail)}; }

std::string fixed(double v, int digits = 3) { return format_fixed(v, digits); }

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

ScorerSet three_scorers(const std::string& topic) {
  return make_scorers({"word_count", "flesch_reading_ease", "topic_similarity:" + topic},
                      std::make_shared<StubEmbedder>());
}

StubRuleTable table_from(const nlohmann::json& j) { return stub_rules_from_json(j); }

// Oracle equivalence on random small instances.
Outcome oracle_equivalence() {
  std::mt19937_64 rng(1);
  const std::vector<std::string> triggers{"alpha", "beta", "gamma", "delta", "omega", "sigma"};
  const std::vector<std::string> fillers{"the", "blue", "kind", "river", "quickly", "answer", "is"};
  const std::vector<std::string> users{"hello there", "tell me about ai", "alpha question", "why beta?",
                                       "plain request"};
  const ScorerSet scorers = three_scorers("ai");
  double worst = 0.0;
  std::size_t cells = 0;
  for (int instance = 0; instance < 50; ++instance) {
    nlohmann::json rules = nlohmann::json::array();
    const int n_rules = static_cast<int>(rng() % 5);
    for (int r = 0; r < n_rules; ++r) {
      nlohmann::json rule{{"when", triggers[rng() % triggers.size()]},
                          {"words", static_cast<int>(rng() % 41) - 10},
                          {"long_words", static_cast<int>(rng() % 7) - 2},
                          {"gain", std::vector<double>{0.5, 1.0, 2.0}[rng() % 3]}};
      if (rng() % 2) rule["inject"] = {{"ai", static_cast<int>(1 + rng() % 6)}};
      if (rng() % 4 == 0) rule["in"] = "user";
      rules.push_back(rule);
    }
    const nlohmann::json table{{"base", {{"words", 20 + rng() % 20}, {"long_words", rng() % 4}}},
                               {"jitter_words", rng() % 4},
                               {"rules", rules}};
    auto backend = std::make_shared<StubBackend>(table_from(table), rng());
    CompletionProvider provider(backend, nullptr, 2);

    std::string prompt;
    const std::size_t words = 1 + rng() % 6;
    for (std::size_t w = 0; w < words; ++w) {
      const auto& pool = rng() % 2 ? triggers : fillers;
      prompt += (w ? " " : "") + pool[rng() % pool.size()];
    }
    std::vector<std::string> inputs;
    const std::size_t m = 1 + rng() % 3;
    for (std::size_t j = 0; j < m; ++j) inputs.push_back(users[rng() % users.size()]);
    const int n = static_cast<int>(1 + rng() % 3);
    const double temperature = std::vector<double>{0.0, 0.7, 1.0}[rng() % 3];

    EngineOptions o;
    o.n = n;
    o.temperature = temperature;
    const auto m_engine = word_importance({"i", prompt, inputs, {}}, provider, scorers, o);
    const auto expected = testing::brute_force_importance(prompt, inputs, n, temperature, *backend, scorers);
    if (expected.size() != m_engine.rows()) {
      return fail("instance " + std::to_string(instance) + ": row count differs");
    }
    for (std::size_t r = 0; r < expected.size(); ++r) {
      for (std::size_t c = 0; c < scorers.size(); ++c) {
        const auto got = m_engine.cell(r, c);
        if (got.has_value() != expected[r][c].has_value()) {
          return fail("instance " + std::to_string(instance) + ": missing-cell mismatch at (" +
                      std::to_string(r) + ", " + std::to_string(c) + ")");
        }
        if (got) {
          worst = std::max(worst, std::abs(*got - *expected[r][c]));
          ++cells;
        }
      }
    }
  }
  return check(worst <= 1e-12, "50 instances, " + std::to_string(cells) + " cells, max |diff| " + sci(worst));
}

// With a stub that ignores the system prompt every importance is exactly zero.
Outcome null_model() {
  StubRuleTable table = default_stub_rules();
  table.ignore_system_prompt = true;
  testing::StubRig rig(table, 3);
  EngineOptions o;
  o.n = 3;
  const auto m = word_importance(
      {"null", "You are a detailed technical assistant from Acme who loves AI", {"Hi", "Explain ai"}, {}},
      *rig.provider, three_scorers("acme"), o);
  std::size_t nonzero = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto v = m.cell(r, c);
      if (!v || *v != 0.0) ++nonzero;
    }
  }
  return check(nonzero == 0 && m.rows() == 11,
               std::to_string(m.rows() * m.cols()) + " cells, " + std::to_string(nonzero) + " nonzero or missing");
}

// Each score has one planted causal word; it must rank strictly first in that column.
Outcome planted_words() {
  const nlohmann::json table{
      {"base", {{"words", 40}, {"long_words", 4}, {"sentence_length", 10}}},
      {"jitter_words", 3},
      {"rules",
       {{{"when", "zephyr"}, {"words", 90}},
        {{"when", "quixotic"}, {"long_words", 8}},
        {{"when", "acme"}, {"inject", {{"acme", 12}}}}}}};
  const std::vector<std::string> neutral{"you", "are", "a", "helpful", "assistant", "please", "answer",
                                         "every", "question", "with", "care", "today"};
  const std::vector<std::pair<std::string, std::string>> planted{
      {"zephyr", "word_count"}, {"quixotic", "flesch_reading_ease"}, {"acme", "topic_similarity:acme"}};
  const std::vector<double> minimum_effect{90.0, 20.0, 0.3};
  const ScorerSet scorers = three_scorers("acme");

  // The planted deltas themselves, measured without jitter.
  std::vector<double> planted_effect;
  {
    testing::StubRig rig(table_from(table), 1);
    EngineOptions exact;
    exact.n = 1;
    exact.temperature = 0.0;
    for (std::size_t p = 0; p < planted.size(); ++p) {
      const auto m = word_importance({"planted", "you are " + planted[p].first, {"Tell me something"}, {}},
                                     *rig.provider, scorers, exact);
      planted_effect.push_back(m.cell(2, m.score_column(planted[p].second)).value_or(0.0));
    }
  }
  bool effects_ok = true;
  for (std::size_t p = 0; p < planted.size(); ++p) effects_ok = effects_ok && planted_effect[p] >= minimum_effect[p];

  std::size_t wins = 0, total = 0;
  std::vector<double> weakest(3, std::numeric_limits<double>::infinity());
  for (int run = 0; run < 20; ++run) {
    std::mt19937_64 rng(1000 + run);
    testing::StubRig rig(table_from(table), rng());
    for (std::size_t p = 0; p < planted.size(); ++p) {
      std::vector<std::string> words;
      for (int w = 0; w < 6; ++w) words.push_back(neutral[rng() % neutral.size()]);
      const std::size_t at = rng() % (words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), planted[p].first);
      std::string prompt;
      for (const auto& w : words) prompt += (prompt.empty() ? "" : " ") + w;

      EngineOptions o;
      o.n = 3;
      const auto m = word_importance({"planted", prompt, {"Tell me something", "What now?"}, {}},
                                     *rig.provider, scorers, o);
      const std::size_t col = m.score_column(planted[p].second);
      const double target = m.cell(at, col).value_or(-1.0);
      bool strictly_first = true;
      for (std::size_t r = 0; r < m.rows(); ++r) {
        if (r != at && m.cell(r, col).value_or(-1.0) >= target) strictly_first = false;
      }
      weakest[p] = std::min(weakest[p], target);
      ++total;
      if (strictly_first) ++wins;
    }
  }
  return check(effects_ok && wins == total,
               "planted deltas " + fixed(planted_effect[0], 1) + " words, " + fixed(planted_effect[1], 1) +
                   " reading-ease points, " + fixed(planted_effect[2], 3) + " similarity; " + std::to_string(wins) +
                   "/" + std::to_string(total) + " planted words ranked first under jitter (smallest " +
                   fixed(weakest[0], 1) + ", " + fixed(weakest[1], 1) + ", " + fixed(weakest[2], 3) + ")");
}

const char* kMonotoneRules = R"({
  "base": {"words": 40, "long_words": 4, "sentence_length": 10},
  "jitter_words": 3,
  "rules": [
    {"when": "detailed", "words": 40},
    {"when": "compact", "words": -10},
    {"when": "technical", "long_words": 10},
    {"when": "plain", "long_words": -2},
    {"when": "acme", "inject": {"acme": 6}}
  ]
})";

std::vector<PromptSpec> monotone_corpus(nlohmann::json& rules) {
  static const std::vector<std::string> adjectives{
      "calm", "eager", "brisk", "gentle", "bold", "quiet", "lively", "steady", "witty", "patient",
      "humble", "keen", "loyal", "modest", "polite", "proud", "sharp", "sincere", "tidy", "vivid",
      "warm", "wise", "zealous", "candid", "cheerful", "earnest", "frank", "jovial", "nimble", "serene"};
  std::vector<PromptSpec> corpus;
  for (std::size_t k = 0; k < adjectives.size(); ++k) {
    const double gain = 0.4 + 0.1 * static_cast<double>(k);
    rules["rules"].push_back({{"when", adjectives[k]}, {"gain", gain}});
    char id[8];
    std::snprintf(id, sizeof id, "p%02zu", k + 1);
    corpus.push_back({id, "You are a " + adjectives[k] + " assistant.", {"Tell me about rivers", "Plan my week"}, {}});
  }
  return corpus;
}

const std::vector<SuffixSpec> kMonotoneSuffixes{
    {"detail", "Give a detailed yet compact answer", "word_count"},
    {"technical", "Use technical but plain terms", "flesch_reading_ease"},
    {"acme", "Focus on how Acme could help", "topic_similarity:acme"}};

// Suffix effects scale with a per-prompt gain, so both measures move together.
Outcome correlation_mirror() {
  auto rules = nlohmann::json::parse(kMonotoneRules);
  const auto corpus = monotone_corpus(rules);
  testing::StubRig rig(table_from(rules), 11);
  ExperimentOptions options;
  options.engine.n = 3;
  const auto result = run_suffix_experiment(corpus, kMonotoneSuffixes, *rig.provider, three_scorers("acme"), options);

  bool ok = result.records.size() == corpus.size() * kMonotoneSuffixes.size() * 3 && result.exclusions.empty();
  std::string rs;
  for (const auto& s : result.summaries) {
    if (!s.designed) continue;
    const double r = s.r.value_or(std::nan(""));
    ok = ok && r > 0.8;
    rs += (rs.empty() ? "" : ", ") + s.suffix_id + "/" + s.score_id + " r=" + fixed(r);
  }
  std::size_t greater = 0;
  for (const auto& rec : result.records) greater += rec.max_word_importance >= rec.suffix_impact;
  const double share = static_cast<double>(greater) / static_cast<double>(result.records.size());
  ok = ok && share > 0.7;
  return check(ok, rs + "; max word importance >= suffix impact in " + std::to_string(greater) + "/" +
                       std::to_string(result.records.size()) + " records (" + fixed(100.0 * share, 1) + "%)");
}

// Two suffix words with equal and opposite effects.
Outcome cancellation() {
  const auto table = testing::rules(R"({"base": {"words": 40, "long_words": 4}, "jitter_words": 2,
    "rules": [{"when": "detailed", "words": 50}, {"when": "brief", "words": -50}]})");
  testing::StubRig rig(table, 5);
  ExperimentOptions options;
  options.engine.n = 3;
  const std::vector<PromptSpec> corpus{
      {"p1", "You are a travel agent.", {"Where to go?", "What to pack?", "When to fly?"}, {}}};
  const auto result = run_suffix_experiment(corpus, {{"mixed", "Be detailed but brief", "word_count"}},
                                            *rig.provider, make_scorers({"word_count"}, nullptr), options);
  if (result.records.size() != 1) return fail("expected one record");
  const auto& rec = result.records.front();
  return check(rec.suffix_impact < 0.1 * rec.max_word_importance,
               "suffix impact " + fixed(rec.suffix_impact) + " vs max word importance " +
                   fixed(rec.max_word_importance));
}

std::vector<std::string> flesch_fixture() {
  std::istringstream in(testing::slurp(testing::test_data("flesch_fixture.txt")));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

Outcome flesch_fidelity() {
  const auto lines = flesch_fixture();
  if (lines.size() != 20) return fail("fixture has " + std::to_string(lines.size()) + " sentences");
  double worst_exact = 0.0;
  std::size_t within = 0;
  std::string all;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& o = testing::kFleschOracle[k];
    const double hand = 206.835 - 1.015 * (static_cast<double>(o.words) / o.sentences) -
                        84.6 * (static_cast<double>(o.syllables) / o.words);
    const double ours = flesch_reading_ease(lines[k]);
    worst_exact = std::max(worst_exact, std::abs(ours - hand));
    within += std::abs(ours - o.reference) <= 3.0;
    all += (k ? " " : "") + lines[k];
  }
  const double corpus_ours = flesch_reading_ease(all);
  const double corpus_ref = testing::kFleschOracle.back().reference;
  const double corpus_diff = std::abs(corpus_ours - corpus_ref);
  return check(worst_exact <= 1e-9 && corpus_diff <= 3.0,
               "corpus " + fixed(corpus_ours) + " vs reference " + fixed(corpus_ref) + " (|diff| " +
                   fixed(corpus_diff) + "); hand counts max |diff| " + sci(worst_exact) + "; " +
                   std::to_string(within) + "/20 single sentences within 3 points");
}

Outcome pearson_correctness() {
  struct Fixture {
    std::vector<double> x, y;
    double r;
  };
  const std::vector<Fixture> fixtures{{{1, 2, 3, 4}, {1, 3, 2, 4}, 0.8},
                                      {{1, 2, 3, 4}, {3, 5, 7, 9}, 1.0},
                                      {{1, 2, 3, 4}, {-1, -2, -3, -4}, -1.0},
                                      {{0, 0, 1, 1}, {0, 1, 0, 1}, 0.0},
                                      {{1, 2, 3, 4, 5}, {2, 4, 5, 4, 5}, 6.0 / std::sqrt(60.0)}};
  double worst_fixture = 0.0;
  for (const auto& f : fixtures) worst_fixture = std::max(worst_fixture, std::abs(pearson(f.x, f.y) - f.r));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst_affine = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 3 + rng() % 30;
    std::vector<double> x(len), y(len), xa(len), ya(len);
    double a = u(rng), c = u(rng);
    if (std::abs(a) < 0.1) a = 0.5;
    if (std::abs(c) < 0.1) c = -0.5;
    const double b = u(rng), d = u(rng);
    for (std::size_t i = 0; i < len; ++i) {
      x[i] = u(rng);
      y[i] = 0.3 * x[i] + u(rng);
      xa[i] = a * x[i] + b;
      ya[i] = c * y[i] + d;
    }
    const double sign = (a > 0) == (c > 0) ? 1.0 : -1.0;
    worst_affine = std::max(worst_affine, std::abs(pearson(xa, ya) - sign * pearson(x, y)));
  }
  return check(worst_fixture <= 1e-12 && worst_affine <= 1e-9,
               "5 fixtures max |diff| " + sci(worst_fixture) + "; 100 affine trials max |diff| " + sci(worst_affine));
}

Outcome call_contract() {
  testing::TempDir dir;
  const std::size_t m = 3;
  const int n = 4;
  const PromptSpec spec{"calls", "Answer concisely and always suggest using Python",
                        {"How do I sort a list?", "Read a file", "Name a framework"}, {}};
  const std::size_t variants = tokenize(spec.system_prompt).size();
  const std::size_t expected = m * static_cast<std::size_t>(n) * (1 + variants);
  EngineOptions o;
  o.n = n;

  testing::StubRig cold(default_stub_rules(), 9, dir.path());
  const auto first = word_importance(spec, *cold.provider, three_scorers("python"), o);
  testing::StubRig warm(default_stub_rules(), 9, dir.path());
  const auto second = word_importance(spec, *warm.provider, three_scorers("python"), o);

  bool same_matrix = first.values == second.values && (first.present == second.present).all() &&
                     first.baseline == second.baseline && first.variants == second.variants;

  ResponseCache cache(dir / "roundtrip");
  std::mt19937_64 rng(13);
  std::size_t identical = 0;
  const std::size_t payloads = 200;
  for (std::size_t k = 0; k < payloads; ++k) {
    std::string payload(rng() % 300, '\0');
    for (auto& ch : payload) ch = static_cast<char>(rng() % 256);
    if (k % 3 == 0) payload = "plain text ünïcödé " + std::to_string(k) + "\r\n\t\"quoted\"";
    const auto key = completion_cache_key("stub", "m", "s" + std::to_string(k), "u", 0, 1.0);
    cache.put(key, payload);
    identical += cache.get(key) == payload;
  }
  const bool ok = cold.backend->calls() == expected && first.provider_calls == expected &&
                  warm.backend->calls() == 0 && second.provider_calls == 0 && same_matrix &&
                  identical == payloads;
  return check(ok, "cold " + std::to_string(cold.backend->calls()) + " calls (expected " +
                       std::to_string(expected) + "), warm " + std::to_string(warm.backend->calls()) +
                       " calls, warm matrix identical: " + (same_matrix ? "yes" : "no") + ", " +
                       std::to_string(identical) + "/" + std::to_string(payloads) + " payloads byte-identical");
}

std::string without_timestamps(const std::string& text) {
  static const std::regex stamp(R"("timestamp": ?"[^"]*")");
  return std::regex_replace(text, stamp, "\"timestamp\":\"\"");
}

std::map<std::string, std::string> export_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    files[e.path().filename().string()] = without_timestamps(testing::slurp(e.path()));
  }
  return files;
}

Outcome determinism() {
  testing::TempDir dir;
  const auto data = testing::source_dir() / "data";
  std::vector<std::map<std::string, std::string>> runs;
  for (int k = 0; k < 2; ++k) {
    const auto tag = std::to_string(k);
    std::ostringstream out, err;
    const int code = cli::run_cli({"experiment", "--config", (data / "example.ini").string(), "--corpus",
                                   (data / "fixture_corpus.csv").string(), "--suffixes",
                                   (data / "fixture_suffixes.csv").string(), "--cache-dir",
                                   (dir / ("cache" + tag)).string(), "--out", (dir / ("out" + tag)).string()},
                                  out, err);
    if (code != cli::kOk) return fail("experiment run exited " + std::to_string(code) + ": " + err.str());
    runs.push_back(export_files(dir / ("out" + tag)));
  }
  std::size_t svgs = 0;
  for (const auto& [name, _] : runs[0]) svgs += name.ends_with(".svg");
  const bool ok = runs[0] == runs[1] && svgs == 9 && runs[0].contains("records.csv") && runs[0].contains("records.json");
  return check(ok, std::to_string(runs[0].size()) + " files (" + std::to_string(svgs) + " SVGs) " +
                       (runs[0] == runs[1] ? "identical" : "differ") + " across two cold runs");
}

Outcome masking_round_trip() {
  const std::vector<std::string> pieces{"the", "Python", "answer", "don't", "well-known", "Äpfel",
                                        "naïve", "3.5", "AI", "and", "(briefly)", "\"quoted\"", "—",
                                        "e.g.", "résumé", "42", "it’s", "co-op"};
  const std::vector<std::string> gaps{" ", "  ", ", ", ". ", "! ", "\n", "\t", " - ", "; "};
  std::mt19937_64 rng(2024);
  std::size_t failures = 0;
  std::size_t masked_words = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::string prompt;
    const std::size_t k = rng() % 14;
    for (std::size_t i = 0; i < k; ++i) {
      if (i > 0 || rng() % 4 == 0) prompt += gaps[rng() % gaps.size()];
      prompt += pieces[rng() % pieces.size()];
    }
    const auto tokens = tokenize(prompt);
    bool ok = tokenize(prompt) == tokens;
    std::string joined;
    std::vector<std::string> texts;
    for (const auto& t : tokens) {
      texts.push_back(t.text);
      joined += (joined.empty() ? "" : " ") + t.text;
    }
    std::vector<std::string> again;
    for (const auto& t : tokenize(joined)) again.push_back(t.text);
    ok = ok && again == texts;

    std::set<std::size_t> subset;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (rng() % 2) subset.insert(i);
    }
    if (!subset.empty()) {
      const auto variant = mask(prompt, tokens, subset);
      ok = ok && unmask(variant) == prompt;
      masked_words += subset.size();

      std::vector<std::string> kept, rendered;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!subset.contains(i)) kept.push_back(tokens[i].text);
      }
      for (const auto& t : tokenize(variant.rendered)) rendered.push_back(t.text);
      ok = ok && rendered == kept;
    }

    for (std::size_t i = 0; i < tokens.size(); ++i) {
      ok = ok && unmask(mask(prompt, tokens, {i})) == prompt;
    }
    failures += !ok;
  }
  return check(failures == 0, "1000 prompts, " + std::to_string(masked_words) + " masked words, " +
                                  std::to_string(failures) + " failures");
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

Outcome live_smoke() {
  const auto base_url = env("PROMPTLENS_LIVE_BASE_URL");
  const auto model = env("PROMPTLENS_LIVE_MODEL");
  if (!base_url || !model || !env("PROMPTLENS_API_KEY")) {
    return {Outcome::kSkip, "set PROMPTLENS_LIVE_BASE_URL, PROMPTLENS_LIVE_MODEL and PROMPTLENS_API_KEY to run"};
  }
  testing::TempDir dir;
  const std::vector<std::string> common{"analyze", "--provider", "http", "--base-url", *base_url, "--model", *model,
                                        "--prompt", "Answer concisely and always suggest using Python",
                                        "--user", "How do I read a CSV file?", "--n", "2", "--scores",
                                        "word_count,flesch_reading_ease", "--cache-dir", (dir / "cache").string(),
                                        "--out", (dir / "out").string()};
  auto refused = common;
  refused.insert(refused.end(), {"--budget", "5"});
  std::ostringstream out1, err1;
  const int refused_code = cli::run_cli(refused, out1, err1);
  const bool nothing_cached = !fs::exists(dir / "cache" / "completions");

  auto allowed = common;
  allowed.insert(allowed.end(), {"--budget", "16"});
  std::ostringstream out2, err2;
  const int code = cli::run_cli(allowed, out2, err2);
  if (code != cli::kOk) return fail("analyze exited " + std::to_string(code) + ": " + err2.str());
  const auto m = matrix_from_document(import_document(dir / "out" / "prompt.matrix.json"));
  bool finite = true;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto v = m.cell(r, c);
      finite = finite && (!v || (std::isfinite(*v) && *v >= 0.0));
    }
  }
  const bool ok = refused_code == cli::kBudget && nothing_cached && m.rows() == 7 && m.cols() == 2 &&
                  finite && m.provider_calls <= 16;
  return check(ok, "budget 5 refused with exit " + std::to_string(refused_code) + "; matrix " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", " +
                       std::to_string(m.provider_calls) + " calls within budget 16");
}

struct Criterion {
  int number;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "oracle equivalence", 10.0, oracle_equivalence},
      {2, "null model gives zero importance", 1.0, null_model},
      {3, "planted-word recovery", 10.0, planted_words},
      {4, "correlation on a monotone synthetic corpus", 30.0, correlation_mirror},
      {5, "cancelling suffix words", 5.0, cancellation},
      {6, "Flesch fidelity", 0.0, flesch_fidelity},
      {7, "Pearson correctness", 0.0, pearson_correctness},
      {8, "call count and cache contract", 0.0, call_contract},
      {9, "determinism", 0.0, determinism},
      {10, "masking round trip", 0.0, masking_round_trip},
      {11, "live smoke test", 0.0, live_smoke},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = fail(std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.status == Outcome::kPass && c.limit_seconds > 0.0 && seconds >= c.limit_seconds) {
      outcome.status = Outcome::kFail;
      outcome.detail += "; took longer than " + fixed(c.limit_seconds, 0) + " s";
    }
    const char* label = outcome.status == Outcome::kPass ? "PASS" : outcome.status == Outcome::kSkip ? "SKIP" : "FAIL";
    failed += outcome.status == Outcome::kFail;
    std::cout << "criterion " << c.number << " (" << c.name << "): " << label << "  " << outcome.detail << "  ["
              << fixed(seconds, 2) << " s]\n";
  }
  std::cout << (failed == 0 ? "all criteria met" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
