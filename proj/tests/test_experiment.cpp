#include <doctest.h>

#include <cmath>
#include <random>

#include "promptlens/csv.hpp"
#include "promptlens/experiment.hpp"
#include "promptlens/stub.hpp"
#include "support.hpp"

using namespace promptlens;
using testing::StubRig;

namespace {

PromptSpec prompt(std::string id, std::string system, std::vector<std::string> users = {"Tell me."}) {
  return {std::move(id), std::move(system), std::move(users), {}};
}

ExperimentOptions options(int n = 1) {
  ExperimentOptions o;
  o.engine.n = n;
  o.engine.model_id = "stub-model";
  return o;
}

class PoisonBackend final : public CompletionBackend {
 public:
  std::string kind() const override { return "poison"; }
  std::string generate(const CompletionRequest& r, int) override {
    if (r.system_prompt.find("bad") != std::string::npos) {
      throw ProviderError(ProviderError::Kind::kServer, "poisoned");
    }
    return r.system_prompt.find("detailed") != std::string::npos ? "one two three four" : "one two";
  }
};

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("pearson on fixed fixtures") {
  CHECK(std::abs(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) - 0.8) <= 1e-12);
  CHECK(std::abs(pearson({1, 2, 3, 4}, {3, 5, 7, 9}) - 1.0) <= 1e-12);
  CHECK(std::abs(pearson({1, 2, 3, 4}, {-1, -2, -3, -4}) + 1.0) <= 1e-12);
  CHECK(std::abs(pearson({1, 2, 3}, {1, 3, 2}) - 0.5) <= 1e-12);
  CHECK(std::abs(pearson({0, 0, 1, 1}, {0, 1, 0, 1})) <= 1e-12);
  CHECK(std::abs(pearson({1, 2, 3, 4, 5}, {2, 4, 5, 4, 5}) - 6.0 / std::sqrt(60.0)) <= 1e-12);
}

TEST_CASE("pearson rejects degenerate input") {
  CHECK_THROWS_AS(pearson({1.0}, {2.0}), InvalidArgument);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), InvalidArgument);
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), InvalidArgument);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {4, 4, 4}), InvalidArgument);
}

TEST_CASE("pearson is invariant under affine maps up to sign") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xs(8), ys(8), xa(8), ya(8);
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    for (int k = 0; k < 8; ++k) {
      xs[k] = u(rng);
      ys[k] = u(rng);
      xa[k] = a * xs[k] + b;
      ya[k] = c * ys[k] + d;
    }
    const double sign = (a * c > 0) ? 1.0 : -1.0;
    CHECK(std::abs(pearson(xa, ya) - sign * pearson(xs, ys)) <= 1e-9);
  }
}

TEST_CASE("least squares recovers a line") {
  const auto fit = least_squares({1, 2, 3, 4}, {3, 5, 7, 9});
  CHECK(fit.slope == doctest::Approx(2.0));
  CHECK(fit.intercept == doctest::Approx(1.0));
  CHECK_THROWS_AS(least_squares({2, 2}, {1, 3}), InvalidArgument);
}

TEST_CASE("suffix impact of a long-story suffix is |200 - 40|") {
  StubRig rig(testing::rules(R"({"base": {"words": 40}, "rules": [{"when": "story", "words": 160}]})"), 1);
  auto p = prompt("p1", "You are a teacher.");
  p.suffix = "Respond in the form of a long story";
  const auto impact = suffix_impact(p, *rig.provider, {make_word_count_scorer()}, options(1).engine);
  REQUIRE(impact.size() == 1);
  CHECK(impact[0] == 160.0);
  CHECK_THROWS_AS(suffix_impact(prompt("p1", "x"), *rig.provider, {make_word_count_scorer()}, options().engine),
                  InvalidArgument);
}

TEST_CASE("suffix impact is zero when the model ignores the suffix") {
  StubRig ignoring(testing::rules(R"({"base": {"words": 40}, "jitter_words": 3, "ignore_system_prompt": true,
      "rules": [{"when": "story", "words": 160}]})"), 1);
  auto p = prompt("p1", "You are a teacher.");
  p.suffix = "Respond with a long story";
  CHECK(suffix_impact(p, *ignoring.provider, {make_word_count_scorer()}, options(3).engine)[0] == 0.0);

  StubRig insensitive(testing::rules(R"({"base": {"words": 40}, "rules": [{"when": "story", "words": 160}]})"), 1);
  p.suffix = "and the of";
  CHECK(suffix_impact(p, *insensitive.provider, {make_word_count_scorer()}, options(1).engine)[0] == 0.0);
}

TEST_CASE("engineered corpus where impact equals max word importance gives r = 1") {
  StubRig rig(testing::rules(R"({"base": {"words": 20}, "rules": [{"when": "detailed", "words": 10},
      {"when": "two", "gain": 2}, {"when": "three", "gain": 3}, {"when": "four", "gain": 4}, {"when": "five", "gain": 5}]})"), 1);
  std::vector<PromptSpec> corpus{prompt("a", "Level one."), prompt("b", "Level two."), prompt("c", "Level three."),
                                 prompt("d", "Level four."), prompt("e", "Level five.")};
  const std::vector<SuffixSpec> suffixes{{"detail", "detailed", "word_count"}};
  const auto result = run_suffix_experiment(corpus, suffixes, *rig.provider, {make_word_count_scorer()}, options(1));
  REQUIRE(result.records.size() == 5);
  for (const auto& r : result.records) CHECK(r.suffix_impact == r.max_word_importance);
  REQUIRE(result.summaries.size() == 1);
  REQUIRE(result.summaries[0].r.has_value());
  CHECK(std::abs(*result.summaries[0].r - 1.0) <= 1e-12);
  CHECK(result.summaries[0].slope == doctest::Approx(1.0));
  CHECK(result.summaries[0].intercept == doctest::Approx(0.0));
  CHECK(result.summaries[0].designed);
}

TEST_CASE("one record per prompt, suffix and score; one summary per suffix and score") {
  StubRig rig(testing::rules(R"({"base": {"words": 20}, "rules": [{"when": "detailed", "words": 30},
      {"when": "technical", "long_words": 8}]})"), 4);
  std::vector<PromptSpec> corpus{prompt("p1", "You are a chef.", {"a", "b"}), prompt("p2", "You are a pilot.")};
  const std::vector<SuffixSpec> suffixes{{"s1", "Give a detailed answer", "word_count"},
                                         {"s2", "Prefer technical terms", "flesch_reading_ease"}};
  const ScorerSet scorers{make_word_count_scorer(), make_flesch_scorer()};
  const auto result = run_suffix_experiment(corpus, suffixes, *rig.provider, scorers, options(2));
  CHECK(result.records.size() == 8);
  CHECK(result.summaries.size() == 4);
  CHECK(result.exclusions.empty());
  CHECK_FALSE(result.partial);
  CHECK(result.records.front().suffix_id == "s1");
  CHECK(result.records.front().score_id == "flesch_reading_ease");
  CHECK(result.records.front().prompt_id == "p1");
  CHECK(result.records.front().m == 2);
  CHECK(result.records.front().n == 2);
  for (const auto& r : result.records) CHECK(r.designed == ((r.suffix_id == "s1") == (r.score_id == "word_count")));
  const auto& wc = result.records[2];
  CHECK(wc.score_id == "word_count");
  CHECK(wc.suffix_impact == 30.0);
  CHECK(wc.max_word_importance == 30.0);
}

TEST_CASE("call plan matches the calls made on a cold run") {
  StubRig rig(testing::rules(R"({"base": {"words": 20}})"), 4);
  std::vector<PromptSpec> corpus{prompt("p1", "You are a chef.", {"a", "b"}), prompt("p2", "Be kind.")};
  const std::vector<SuffixSpec> suffixes{{"s1", "Give a detailed answer", "word_count"}};
  const auto plan = plan_experiment(corpus, suffixes, *rig.provider, options(3));
  CHECK(plan.total_samples == 3 * (2 + 1) + 3 * 2 * 5 + 3 * 1 * 5);
  const auto result = run_suffix_experiment(corpus, suffixes, *rig.provider, {make_word_count_scorer()}, options(3));
  CHECK(result.provider_calls == plan.total_samples);
  CHECK(rig.backend->calls() == plan.total_samples);

  auto all = options(3);
  all.mask_all_words = true;
  CHECK(plan_experiment(corpus, suffixes, *rig.provider, all).total_samples ==
        3 * (2 + 1) + 3 * 2 * 9 + 3 * 1 * 7);
}

TEST_CASE("budget refusal happens before any call") {
  StubRig rig(testing::rules(R"({"base": {"words": 20}})"), 4);
  auto o = options(3);
  o.engine.budget = 5;
  CHECK_THROWS_AS(run_suffix_experiment({prompt("p1", "Be kind.")}, {{"s1", "Be brief", "word_count"}},
                                        *rig.provider, {make_word_count_scorer()}, o),
                  BudgetExceeded);
  CHECK(rig.backend->calls() == 0);
}

TEST_CASE("provider failures exclude the prompt and the run continues") {
  CompletionProvider provider(std::make_shared<PoisonBackend>(), nullptr);
  std::vector<PromptSpec> corpus{prompt("p1", "A bad prompt."), prompt("p2", "A good prompt."),
                                 prompt("p3", "Another good one.")};
  const auto result = run_suffix_experiment(corpus, {{"s1", "Be detailed", "word_count"}}, provider,
                                            {make_word_count_scorer()}, options(1));
  REQUIRE(result.exclusions.size() == 1);
  CHECK(result.exclusions[0].prompt_id == "p1");
  CHECK(result.exclusions[0].suffix_id.empty());
  CHECK(result.records.size() == 2);
  CHECK(result.records[0].suffix_impact == 2.0);
  CHECK(result.summaries[0].n_points == 2);
  CHECK_FALSE(result.summaries[0].computable);
}

TEST_CASE("a preset cancel flag yields a partial, empty result") {
  StubRig rig(testing::rules(R"({"base": {"words": 20}})"), 4);
  std::atomic<bool> cancel{true};
  auto o = options(1);
  o.engine.cancel = &cancel;
  const auto result = run_suffix_experiment({prompt("p1", "Be kind.")}, {{"s1", "Be brief", "word_count"}},
                                            *rig.provider, {make_word_count_scorer()}, o);
  CHECK(result.partial);
  CHECK(result.records.empty());
  CHECK(rig.backend->calls() == 0);
}

TEST_CASE("experiment input validation") {
  StubRig rig(testing::rules(R"({"base": {"words": 20}})"), 4);
  const ScorerSet scorers{make_word_count_scorer()};
  CHECK_THROWS_AS(run_suffix_experiment({}, {{"s1", "Be brief", "word_count"}}, *rig.provider, scorers, options()),
                  InvalidArgument);
  CHECK_THROWS_AS(run_suffix_experiment({prompt("p1", "x")}, {}, *rig.provider, scorers, options()), InvalidArgument);
  CHECK_THROWS_AS(run_suffix_experiment({prompt("p1", "x")}, {{"s1", "a", "word_count"}, {"s1", "b", "word_count"}},
                                        *rig.provider, scorers, options()),
                  InvalidArgument);
  CHECK_THROWS_AS(run_suffix_experiment({prompt("p1", "x")}, {{"s1", "a", "flesch_reading_ease"}}, *rig.provider,
                                        scorers, options()),
                  InvalidArgument);
}

TEST_CASE("summaries cover every suffix and score") {
  const std::vector<SuffixSpec> suffixes{{"b", "x", "word_count"}, {"a", "y", "flesch_reading_ease"}};
  std::vector<SuffixExperimentRecord> records;
  for (int k = 0; k < 3; ++k) {
    records.push_back({"p" + std::to_string(k), "b", "word_count", 1.0 + k, 2.0 + 2 * k, 1, 1, "m", true});
  }
  records.push_back({"p0", "a", "word_count", 1.0, 1.0, 1, 1, "m", false});
  records.push_back({"p1", "a", "word_count", 1.0, 1.0, 1, 1, "m", false});
  const auto s = summarize(records, suffixes, {"word_count", "flesch_reading_ease"});
  REQUIRE(s.size() == 4);
  CHECK(s[0].suffix_id == "a");
  CHECK(s[0].score_id == "flesch_reading_ease");
  CHECK(s[0].designed);
  CHECK(s[0].reason == "fewer than 2 records");
  CHECK(s[1].score_id == "word_count");
  CHECK_FALSE(s[1].computable);
  CHECK(s[1].reason.find("zero variance") != std::string::npos);
  CHECK(s[3].suffix_id == "b");
  CHECK(s[3].computable);
  CHECK(*s[3].r == doctest::Approx(1.0));
  CHECK(s[3].slope == doctest::Approx(0.5));
  CHECK(s[3].n_points == 3);
}

TEST_CASE("corpus loader groups rows, reports bad lines and skips the header") {
  const auto corpus = parse_corpus(
      "system_prompt,prompt_topic,user_input,input_topic\n"
      "You answer like Al Gore.,politics,What is climate?,climate\n"
      "\"Be brief, please.\",style,Hi,greeting\n"
      "You answer like Al Gore.,politics,\"Is it \"\"hot\"\"?\",climate\n"
      "only,three,fields\n"
      ",topic,question,topic\n");
  REQUIRE(corpus.prompts.size() == 2);
  CHECK(corpus.prompts[0].prompt_id == "p001");
  CHECK(corpus.prompts[0].system_prompt == "You answer like Al Gore.");
  CHECK(corpus.prompts[0].user_inputs == std::vector<std::string>{"What is climate?", "Is it \"hot\"?"});
  CHECK(corpus.prompts[1].prompt_id == "p002");
  CHECK(corpus.prompts[1].system_prompt == "Be brief, please.");
  CHECK(corpus.prompt_topics == std::vector<std::string>{"politics", "style"});
  REQUIRE(corpus.issues.size() == 2);
  CHECK(corpus.issues[0].line == 5);
  CHECK(corpus.issues[1].line == 6);
  CHECK(parse_corpus("").prompts.empty());
}

TEST_CASE("question list loader") {
  const auto corpus = parse_question_list("# SQuAD sample\nWhen was the bridge built?\n\n  Who wrote it?  \r\n");
  REQUIRE(corpus.prompts.size() == 2);
  CHECK(corpus.prompts[0].prompt_id == "q001");
  CHECK(corpus.prompts[0].system_prompt == "Answer truthfully.");
  CHECK(corpus.prompts[1].user_inputs == std::vector<std::string>{"Who wrote it?"});
}

TEST_CASE("suffix loader") {
  const auto suffixes = parse_suffixes(
      "suffix_id,text,score_id\n"
      "detailed,Give a detailed answer,word_count\n"
      "story,\"Respond in the form of a long story\",word_count\n");
  REQUIRE(suffixes.size() == 2);
  CHECK(suffixes[1] == SuffixSpec{"story", "Respond in the form of a long story", "word_count"});
  try {
    parse_suffixes("a,b,c\nbroken,row\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_suffixes("a,,c\n"), ParseError);
  CHECK_THROWS_AS(load_suffixes("/nonexistent/suffixes.csv"), InvalidArgument);
}

TEST_CASE("bundled fixture corpus and suffixes load cleanly") {
  const auto corpus = load_corpus(testing::source_dir() / "data" / "fixture_corpus.csv");
  CHECK(corpus.prompts.size() == 6);
  CHECK(corpus.issues.empty());
  const auto suffixes = load_suffixes(testing::source_dir() / "data" / "fixture_suffixes.csv");
  CHECK(suffixes.size() == 3);
}

}  // TEST_SUITE

TEST_SUITE("experiment") {

TEST_CASE("csv parsing follows the quoting rules") {
  const auto rows = parse_csv("\xEF\xBB\xBF" "a,\"b,c\",\"d\"\"e\"\r\n\n\"multi\nline\",x\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].fields == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(rows[0].line == 1);
  CHECK(rows[1].fields == std::vector<std::string>{"multi\nline", "x"});
  CHECK(rows[1].line == 3);
  CHECK(parse_csv("a,,b\n")[0].fields.size() == 3);
  CHECK_THROWS_AS(parse_csv("\"open"), ParseError);
  CHECK_THROWS_AS(parse_csv("\"a\"b,c"), ParseError);
  CHECK(csv_line({"plain", "with,comma", "q\"uote"}) == "plain,\"with,comma\",\"q\"\"uote\"\n");
}

}  // TEST_SUITE
