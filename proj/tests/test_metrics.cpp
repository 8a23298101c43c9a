#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <regex>
#include <sstream>

#include "metric_fixtures.hpp"
#include "oracles.hpp"
#include "s2t/metrics/report.hpp"
#include "support.hpp"

using namespace s2t;
using namespace s2t::metrics;

using namespace s2t::metric_fixtures;

// ------------------------------------------------------------------ tokenizer and stemmer

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize_caption("A person is slicing a cucumber."),
            (Tokens{"a", "person", "is", "slicing", "a", "cucumber"}));
  EXPECT_TRUE(tokenize_caption("").empty());
  EXPECT_EQ(tokenize_caption("Hello,  world!"), (Tokens{"hello", "world"}));
  EXPECT_EQ(tokenize_caption(" \t- . \n"), Tokens{});
}

TEST(Porter, PublishedExamples) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"caresses", "caress"},    {"ponies", "poni"},        {"ties", "ti"},           {"caress", "caress"},
      {"cats", "cat"},           {"feed", "feed"},          {"agreed", "agre"},       {"plastered", "plaster"},
      {"bled", "bled"},          {"motoring", "motor"},     {"sing", "sing"},         {"conflated", "conflat"},
      {"troubled", "troubl"},    {"sized", "size"},         {"hopping", "hop"},       {"tanned", "tan"},
      {"falling", "fall"},       {"hissing", "hiss"},       {"fizzed", "fizz"},       {"failing", "fail"},
      {"filing", "file"},        {"happy", "happi"},        {"sky", "sky"},           {"relational", "relat"},
      {"conditional", "condit"}, {"rational", "ration"},    {"digitizer", "digit"},   {"radicalli", "radic"},
      {"differentli", "differ"}, {"vileli", "vile"},        {"analogousli", "analog"}, {"vietnamization", "vietnam"},
      {"predication", "predic"}, {"operator", "oper"},      {"feudalism", "feudal"},  {"decisiveness", "decis"},
      {"hopefulness", "hope"},   {"callousness", "callous"}, {"formaliti", "formal"}, {"sensitiviti", "sensit"},
      {"sensibiliti", "sensibl"}, {"triplicate", "triplic"}, {"formative", "form"},   {"formalize", "formal"},
      {"electriciti", "electr"}, {"electrical", "electr"},  {"hopeful", "hope"},      {"goodness", "good"},
      {"revival", "reviv"},      {"allowance", "allow"},    {"inference", "infer"},   {"airliner", "airlin"},
      {"gyroscopic", "gyroscop"}, {"adjustable", "adjust"}, {"defensible", "defens"}, {"irritant", "irrit"},
      {"replacement", "replac"}, {"adjustment", "adjust"},  {"dependent", "depend"},  {"adoption", "adopt"},
      {"homologou", "homolog"},  {"communism", "commun"},   {"activate", "activ"},    {"angulariti", "angular"},
      {"homologous", "homolog"}, {"effective", "effect"},   {"bowdlerize", "bowdler"}, {"probate", "probat"},
      {"rate", "rate"},          {"cease", "ceas"},         {"controll", "control"},  {"roll", "roll"},
      {"generalizations", "gener"}, {"oscillators", "oscil"}, {"a", "a"},             {"is", "is"},
  };
  for (const auto& [w, stem] : cases) EXPECT_EQ(porter_stem(w), stem) << w;
  EXPECT_EQ(porter_stem("slicing"), "slice");
  EXPECT_EQ(porter_stem("slice"), "slice");
}

// ------------------------------------------------------------------ hand-derived values

TEST(Bleu, HandDerived) {
  const auto cat = bleu({{"x", words("the cat"), {words("the cat on the mat")}}}, 1);
  EXPECT_NEAR(cat[0], 100.0 * std::exp(1.0 - 5.0 / 2.0), 1e-12);
  EXPECT_NEAR(cat[0], 22.31, 5e-3);
  const auto same = bleu({{"x", words("a b c d e"), {words("a b c d e")}}, {"y", words("f g h i"), {words("f g h i")}}});
  for (double v : same) EXPECT_EQ(v, 100.0);
  EXPECT_EQ(bleu({{"x", words("a b"), {words("c d")}}})[0], 0.0);
  EXPECT_THROW(bleu({}), std::invalid_argument);
  EXPECT_THROW(bleu({{"x", words("a"), {}}}), std::invalid_argument);
}

TEST(RougeL, HandDerived) {
  EXPECT_EQ(rouge_l({{"x", words("a b c"), {words("a b c")}}}), 100.0);
  EXPECT_DOUBLE_EQ(rouge_l({{"x", words("a b c d"), {words("a c b d")}}}), 75.0);
  EXPECT_DOUBLE_EQ(rouge_l({{"x", words("a b c d"), {words("a c b d")}}}, 3.0), 75.0);
  EXPECT_EQ(rouge_l({{"x", words("a b"), {words("c d")}}}), 0.0);
  EXPECT_THROW(rouge_l({{"x", words("a"), {words("a")}}}, 0.0), std::invalid_argument);
}

TEST(Meteor, HandDerived) {
  EXPECT_DOUBLE_EQ(meteor_lite({{"x", words("a person is slicing"), {words("a person is slicing")}}}), 99.21875);
  EXPECT_EQ(meteor_lite({{"x", words("a b"), {words("c d")}}}), 0.0);
  const auto a = meteor_align(words("slicing"), words("slice"));
  EXPECT_GE(a.matches, 1u);
  const auto chunks = meteor_align(words("c d a b"), words("a b c d"));
  EXPECT_EQ(chunks.matches, 4u);
  EXPECT_EQ(chunks.chunks, 2u);
}

TEST(Cider, HandDerived) {
  const std::vector<CaptionPair> disjoint{{"x", words("a b c"), {words("d e f")}}, {"y", words("g h"), {words("i j")}}};
  EXPECT_EQ(cider(disjoint), 0.0);
  const std::vector<CaptionPair> own{{"x", words("a b c"), {words("a b c")}}, {"y", words("d e"), {words("d e")}}};
  std::vector<oracle::Item> items{{words("a b c"), {words("a b c")}}, {words("d e"), {words("d e")}}};
  EXPECT_NEAR(cider(own), oracle::cider(items, 4, 6.0), 1e-9);
  // Every n-gram occurs in every item's references: all weights vanish.
  const std::vector<CaptionPair> shared{{"x", words("a b"), {words("a b")}}, {"y", words("a b"), {words("a b")}}};
  EXPECT_EQ(cider(shared), 0.0);
  EXPECT_THROW(cider({own[0]}), std::invalid_argument);
}

// ------------------------------------------------------------------ oracle equivalence

TEST(Oracle, TwentyFixtures) {
  ASSERT_EQ(fixtures().size(), 20u);
  for (const Fixture& f : fixtures()) {
    SCOPED_TRACE(f.name);
    const auto pairs = pairs_of(f);
    const auto items = oracle_items(f);
    const auto b = bleu(pairs, 4);
    for (std::size_t n = 1; n <= 4; ++n) EXPECT_NEAR(b[n - 1], oracle::bleu(items, n), 1e-9) << "BLEU-" << n;
    EXPECT_NEAR(rouge_l(pairs), oracle::rouge_l(items, 1.2), 1e-9);
    EXPECT_NEAR(meteor_lite(pairs), oracle::meteor(items, stems_match), 1e-9);
    if (pairs.size() >= 2) {
      EXPECT_NEAR(cider(pairs), oracle::cider(items, 4, 6.0), 1e-9);
    }
  }
}

TEST(Oracle, RandomSmallCorpora) {
  std::mt19937_64 gen(7);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "slice", "slicing", "e"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<CaptionPair> pairs;
    std::vector<oracle::Item> items;
    const std::size_t n_items = 2 + gen() % 3;
    for (std::size_t i = 0; i < n_items; ++i) {
      auto sentence = [&] {
        Tokens t(gen() % 7);
        for (auto& w : t) w = vocab[gen() % vocab.size()];
        return t;
      };
      CaptionPair p{"i" + std::to_string(i), sentence(), {}};
      const std::size_t refs = 1 + gen() % 2;
      for (std::size_t r = 0; r < refs; ++r) p.references.push_back(sentence());
      items.push_back({p.candidate, p.references});
      pairs.push_back(std::move(p));
    }
    const auto b = bleu(pairs, 4);
    for (std::size_t n = 1; n <= 4; ++n) ASSERT_NEAR(b[n - 1], oracle::bleu(items, n), 1e-9);
    ASSERT_NEAR(rouge_l(pairs), oracle::rouge_l(items, 1.2), 1e-9);
    ASSERT_NEAR(meteor_lite(pairs), oracle::meteor(items, stems_match), 1e-9);
    ASSERT_NEAR(cider(pairs), oracle::cider(items, 4, 6.0), 1e-9);
  }
}

// ------------------------------------------------------------------ properties

TEST(Properties, PermutationInvariance) {
  std::mt19937_64 gen(8);
  for (const Fixture& f : fixtures()) {
    auto pairs = pairs_of(f);
    if (pairs.size() < 2) continue;
    const auto b = bleu(pairs);
    const double r = rouge_l(pairs), m = meteor_lite(pairs), c = cider(pairs);
    for (int k = 0; k < 5; ++k) {
      std::shuffle(pairs.begin(), pairs.end(), gen);
      EXPECT_EQ(bleu(pairs), b);
      EXPECT_EQ(rouge_l(pairs), r);
      EXPECT_EQ(meteor_lite(pairs), m);
      EXPECT_EQ(cider(pairs), c);
    }
  }
}

TEST(Properties, MaximaOnIdenticalCorpora) {
  for (const Fixture& f : fixtures()) {
    auto pairs = pairs_of(f);
    bool long_enough = true;
    for (auto& p : pairs) {
      p.candidate = p.references.front();
      long_enough = long_enough && p.candidate.size() >= 4;
    }
    if (!long_enough) continue;
    SCOPED_TRACE(f.name);
    for (double v : bleu(pairs)) EXPECT_EQ(v, 100.0);
    EXPECT_EQ(rouge_l(pairs), 100.0);
    EXPECT_LE(meteor_lite(pairs), 100.0);
    EXPECT_GT(meteor_lite(pairs), 95.0);
  }
}

TEST(Properties, FuzzedBoundedAndFinite) {
  std::mt19937_64 gen(9);
  const std::vector<std::string> vocab{"a", "b", "c", "the", "cat", "cats", "walk", "walking", "x", "y"};
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<CaptionPair> pairs;
    const std::size_t n_items = 2 + gen() % 3;
    for (std::size_t i = 0; i < n_items; ++i) {
      auto sentence = [&] {
        Tokens t(gen() % 11);
        for (auto& w : t) w = vocab[gen() % vocab.size()];
        return t;
      };
      CaptionPair p{"i" + std::to_string(i), sentence(), {}};
      const std::size_t refs = 1 + gen() % 3;
      for (std::size_t r = 0; r < refs; ++r) p.references.push_back(sentence());
      pairs.push_back(std::move(p));
    }
    for (double v : bleu(pairs)) ASSERT_TRUE(std::isfinite(v) && v >= 0.0 && v <= 100.0);
    for (double v : sentence_bleu(pairs[0])) ASSERT_TRUE(std::isfinite(v) && v >= 0.0 && v <= 100.0);
    const double r = rouge_l(pairs);
    ASSERT_TRUE(std::isfinite(r) && r >= 0.0 && r <= 100.0);
    const double m = meteor_lite(pairs);
    ASSERT_TRUE(std::isfinite(m) && m >= 0.0 && m <= 100.0);
    const double c = cider(pairs);
    ASSERT_TRUE(std::isfinite(c) && c >= 0.0 && c <= 10.0);
  }
}

TEST(Properties, SentenceBleuSmoothing) {
  const auto s = sentence_bleu({"x", words("a b x y"), {words("a b c d")}});
  EXPECT_GT(s[3], 0.0);  // zero 3/4-gram precisions replaced by 1e-9
  EXPECT_EQ(bleu({{"x", words("a b x y"), {words("a b c d")}}})[3], 0.0);
}

// ------------------------------------------------------------------ report

TEST(Report, PerfectModel) {
  const References refs{{"a", {"A person is peeling a cucumber."}},
                        {"b", {"A person is slicing bread, then pouring water."}},
                        {"c", {"Someone opens the jar slowly.", "A jar is opened."}}};
  Candidates cands;
  for (const auto& [id, r] : refs) cands[id] = r.front();
  const EvalReport rep = evaluate_corpus(cands, refs, {"synthetic", "abc", "test"});
  EXPECT_EQ(rep.scores.bleu1, 100.0);
  EXPECT_EQ(rep.scores.bleu4, 100.0);
  EXPECT_EQ(rep.scores.rouge_l, 100.0);
  EXPECT_EQ(rep.scores.exact_match, 100.0);
  EXPECT_EQ(rep.items.size(), 3u);
}

TEST(Report, ScoresEqualStandaloneCalls) {
  const References refs{{"a", {"a person is peeling a cucumber"}},
                        {"b", {"a person is slicing bread"}},
                        {"c", {"someone opens the jar"}}};
  const Candidates cands{{"a", "a person peels a cucumber"}, {"b", "a person is slicing"}, {"c", "the jar"}};
  const EvalReport rep = evaluate_corpus(cands, refs, {});
  std::vector<CaptionPair> pairs;
  for (const auto& [id, c] : cands) pairs.push_back({id, tokenize_caption(c), {tokenize_caption(refs.at(id)[0])}});
  const auto b = bleu(pairs);
  EXPECT_EQ(rep.scores.bleu1, json_io::quantize(b[0]));
  EXPECT_EQ(rep.scores.bleu4, json_io::quantize(b[3]));
  EXPECT_EQ(rep.scores.rouge_l, json_io::quantize(rouge_l(pairs)));
  EXPECT_EQ(rep.scores.meteor, json_io::quantize(meteor_lite(pairs)));
  EXPECT_EQ(rep.scores.cider_raw, json_io::quantize(cider(pairs)));
  EXPECT_EQ(rep.scores.cider, json_io::quantize(100.0 * cider(pairs)));
  EXPECT_EQ(rep.scores.exact_match, 0.0);
}

TEST(Report, IdMismatchIsAnError) {
  const References refs{{"a", {"x y"}}, {"b", {"y z"}}};
  EXPECT_THROW(evaluate_corpus({{"a", "x y"}}, refs, {}), InputError);
  EXPECT_THROW(evaluate_corpus({{"a", "x y"}, {"b", "y"}, {"c", "z"}}, refs, {}), InputError);
}

TEST(Report, JsonRoundTripAndFormat) {
  const References refs{{"a", {"a person is peeling a cucumber"}}, {"b", {"a person is slicing bread"}}};
  const Candidates cands{{"a", "a person peels a cucumber"}, {"b", "a person is slicing"}};
  const EvalReport rep = evaluate_corpus(cands, refs, {"synthetic", "0123456789abcdef", "test"});
  const std::string text = rep.dump();
  EXPECT_EQ(EvalReport::from_json(nlohmann::json::parse(text)), rep);
  EXPECT_EQ(EvalReport::from_json(nlohmann::json::parse(text)).dump(), text);
  EXPECT_NE(text.find("\"spice\": null"), std::string::npos);
  // Every floating-point value carries exactly four fractional digits.
  const std::regex number(R"(:\s(-?\d+\.\d+)[,\n])");
  std::size_t count = 0;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), number); it != std::sregex_iterator(); ++it, ++count) {
    const std::string v = (*it)[1];
    EXPECT_EQ(v.size() - v.find('.') - 1, 4u) << v;
  }
  EXPECT_GE(count, 9u);
  // Fixed key order.
  const auto keys = {"\"dataset\"", "\"checkpoint\"", "\"split\"", "\"item_count\"", "\"scores\"", "\"bleu1\"",
                     "\"bleu4\"",   "\"rouge_l\"",    "\"meteor\"", "\"cider\"",      "\"cider_raw\"", "\"spice\"",
                     "\"exact_match\"", "\"items\""};
  std::size_t pos = 0;
  for (const char* k : keys) {
    const auto next = text.find(k, pos);
    ASSERT_NE(next, std::string::npos) << k;
    pos = next;
  }
}

TEST(Report, JsonlReaders) {
  test_support::TempDir dir("metrics_jsonl");
  io::atomic_write(dir / "c.jsonl", candidates_jsonl({{"a", "x"}, {"b", "y"}}));
  io::atomic_write(dir / "r.jsonl", references_jsonl({{"a", {"x"}}, {"b", {"y", "z"}}}));
  EXPECT_EQ(read_candidates(dir / "c.jsonl").at("b"), "y");
  EXPECT_EQ(read_references(dir / "r.jsonl").at("b").size(), 2u);
  io::atomic_write(dir / "dup.jsonl", "{\"item_id\":\"a\",\"candidate\":\"x\"}\n{\"item_id\":\"a\",\"candidate\":\"y\"}\n");
  EXPECT_THROW(read_candidates(dir / "dup.jsonl"), InputError);
  io::atomic_write(dir / "bad.jsonl", "{\"item_id\":\"a\",\"references\":[]}\n");
  EXPECT_THROW(read_references(dir / "bad.jsonl"), InputError);
  io::atomic_write(dir / "broken.jsonl", "{\"item_id\":\n");
  EXPECT_THROW(read_candidates(dir / "broken.jsonl"), InputError);
  EXPECT_THROW(read_candidates(dir / "missing.jsonl"), InputError);
}
