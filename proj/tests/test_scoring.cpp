#include <doctest.h>

#include <cmath>
#include <fstream>

#include "flesch_oracle.hpp"
#include "promptlens/scoring.hpp"
#include "promptlens/stub.hpp"
#include "promptlens/text.hpp"
#include "support.hpp"

using namespace promptlens;

namespace {

std::vector<std::string> fixture_lines() {
  std::ifstream in(testing::test_data("flesch_fixture.txt"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

double flesch_from_counts(double words, double sentences, double syllables) {
  return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words);
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("word_count follows the tokenizer rule") {
  CHECK(word_count("") == 0);
  CHECK(word_count("Give a detailed answer") == 4);
  CHECK(word_count("state-of-the-art results") == 2);
  CHECK(word_count("Hello, world!") == 2);
}

TEST_CASE("count_sentences") {
  CHECK(count_sentences("") == 0);
  CHECK(count_sentences("   \n") == 0);
  CHECK(count_sentences("Hello.") == 1);
  CHECK(count_sentences("Hi. Bye.") == 2);
  CHECK(count_sentences("No terminator") == 1);
  CHECK(count_sentences("Wait... what?! Fine") == 3);
  CHECK(count_sentences("Mr. Smith met Dr. Jones.") == 1);
  CHECK(count_sentences("He said \"Stop.\" Then he left.") == 2);
  CHECK(count_sentences("Pi is 3.14 or so.") == 1);
  CHECK(count_sentences("...") == 1);
}

TEST_CASE("count_syllables uses vowel groups") {
  CHECK(count_syllables("cat") == 1);
  CHECK(count_syllables("people") == 2);
  CHECK(count_syllables("a") == 1);
  CHECK(count_syllables("the") == 1);
  CHECK(count_syllables("make") == 1);
  CHECK(count_syllables("table") == 2);
  CHECK(count_syllables("rhythm") == 1);
  CHECK(count_syllables("Beautiful") == 3);
  CHECK(count_syllables("information") == 4);
  CHECK(count_syllables("don't") == 1);
  CHECK(count_syllables("42") == 1);
}

TEST_CASE("flesch_reading_ease of a one-word sentence") {
  CHECK(flesch_reading_ease("Go.") == doctest::Approx(121.22).epsilon(1e-12));
  CHECK(std::abs(flesch_reading_ease("Go.") - (206.835 - 1.015 - 84.6)) < 1e-12);
}

TEST_CASE("flesch_reading_ease is unchanged by repeating a sentence") {
  const std::string s = "The quick brown fox jumps over the lazy dog.";
  CHECK(std::abs(flesch_reading_ease(s) - flesch_reading_ease(s + " " + s)) < 1e-9);
}

TEST_CASE("flesch_reading_ease rejects text without words") {
  CHECK_THROWS_AS(flesch_reading_ease(""), UndefinedScore);
  CHECK_THROWS_AS(flesch_reading_ease("?!"), UndefinedScore);
}

TEST_CASE("flesch fixture matches hand counts exactly") {
  const auto lines = fixture_lines();
  REQUIRE(lines.size() == 20);
  std::string all;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& oracle = testing::kFleschOracle[k];
    CAPTURE(lines[k]);
    CHECK(word_count(lines[k]) == oracle.words);
    CHECK(count_sentences(lines[k]) == oracle.sentences);
    int syllables = 0;
    for (const auto& t : tokenize(lines[k])) syllables += count_syllables(t.text);
    CHECK(syllables == oracle.syllables);
    const double expected = flesch_from_counts(static_cast<double>(oracle.words),
                                               static_cast<double>(oracle.sentences),
                                               static_cast<double>(oracle.syllables));
    CHECK(std::abs(flesch_reading_ease(lines[k]) - expected) < 1e-9);
    all += (k ? " " : "") + lines[k];
  }
  const auto& corpus = testing::kFleschOracle.back();
  CHECK(word_count(all) == corpus.words);
  CHECK(count_sentences(all) == corpus.sentences);
  CHECK(std::abs(flesch_reading_ease(all) - corpus.reference) <= 3.0);
}

TEST_CASE("flesch of the first fixture sentence is close to the reference") {
  CHECK(std::abs(flesch_reading_ease("The cat sat on the mat.") - testing::kFleschOracle[0].reference) <= 3.0);
}

TEST_CASE("cosine_similarity") {
  const VectorXd v = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == 0.0);
  CHECK(cosine_similarity(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(-3, 0)) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), InvalidArgument);
  CHECK_THROWS_AS(cosine_similarity(VectorXd(Eigen::Vector2d(1, 0)), VectorXd(Eigen::Vector3d(1, 0, 0))), InvalidArgument);
}

TEST_CASE("topic_similarity with the stub embedder") {
  auto embedder = std::make_shared<StubEmbedder>();
  TopicSpec ai("AI", embedder);
  CHECK(topic_similarity("AI", ai, *embedder) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(topic_similarity("AI AI", ai, *embedder) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(topic_similarity("cat dog sun", ai, *embedder) == 0.0);
  CHECK(topic_similarity("AI and cats", ai, *embedder) > 0.0);
}

TEST_CASE("scorers and score_text") {
  auto embedder = std::make_shared<StubEmbedder>();
  const auto scorers = make_scorers({"word_count", "flesch_reading_ease", "topic_similarity:python"}, embedder);
  REQUIRE(scorers.size() == 3);
  CHECK(scorers[0]->id() == "word_count");
  CHECK(scorers[2]->id() == "topic_similarity:python");

  const auto full = score_text(scorers, "Use Python. Python is fun.");
  CHECK(full.at("word_count") == 5.0);
  REQUIRE(full.at("flesch_reading_ease").has_value());
  CHECK(*full.at("topic_similarity:python") > 0.5);

  const auto empty = score_text(scorers, "");
  CHECK(empty.at("word_count") == 0.0);
  CHECK_FALSE(empty.at("flesch_reading_ease").has_value());
  CHECK_FALSE(empty.at("topic_similarity:python").has_value());
  CHECK_THROWS_AS(full.at("missing"), InvalidArgument);

  CHECK_THROWS_AS(make_scorers({"bogus"}, embedder), InvalidArgument);
  CHECK_THROWS_AS(make_scorers({"topic_similarity:"}, embedder), InvalidArgument);
}

}  // TEST_SUITE
