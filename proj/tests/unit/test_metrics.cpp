// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0

#include "musilingo/musilingo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace musilingo;
using namespace musilingo::metrics;

namespace {

// One-hot vector per token over a fixed vocabulary.
class OneHotEmbedder : public Embedder {
 public:
  explicit OneHotEmbedder(Tokens vocab) : vocab_(std::move(vocab)) {}
  Mat embed(const Tokens& tokens) const override {
    Mat out = Mat::Zero(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(vocab_.size()));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto it = std::find(vocab_.begin(), vocab_.end(), tokens[i]);
      out(static_cast<Eigen::Index>(i), it - vocab_.begin()) = 1.0;
    }
    return out;
  }
  std::string name() const override { return "one-hot"; }

 private:
  Tokens vocab_;
};

std::string random_sentence(Rng& rng) {
  static const char* words[] = {"calm", "piano", "drums", "the", "a", "slow", "fast", "guitar", "song", "plays"};
  std::string s;
  const auto n = 1 + rng.index(8);
  for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + words[rng.index(10)];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokenizer and stemmer

TEST(Tokenize, FoldsCaseAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("Hello, World!"), (Tokens{"hello", ",", "world", "!"}));
  EXPECT_EQ(tokenize("  a\tB\nc  "), (Tokens{"a", "b", "c"}));
  EXPECT_EQ(tokenize("rock'n'roll"), (Tokens{"rock", "'", "n", "'", "roll"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("Caf\xc3\xa9"), (Tokens{"caf\xc3\xa9"}));
}

TEST(PorterStemmer, ReferenceVocabulary) {
  const std::pair<const char*, const char*> cases[] = {
      {"caresses", "caress"},     {"ponies", "poni"},         {"ties", "ti"},
      {"caress", "caress"},       {"cats", "cat"},            {"feed", "feed"},
      {"agreed", "agre"},         {"plastered", "plaster"},   {"bled", "bled"},
      {"motoring", "motor"},      {"sing", "sing"},           {"conflated", "conflat"},
      {"troubled", "troubl"},     {"sized", "size"},          {"hopping", "hop"},
      {"tanned", "tan"},          {"falling", "fall"},        {"hissing", "hiss"},
      {"fizzed", "fizz"},         {"failing", "fail"},        {"filing", "file"},
      {"happy", "happi"},         {"sky", "sky"},             {"relational", "relat"},
      {"conditional", "condit"},  {"rational", "ration"},     {"digitizer", "digit"},
      {"operator", "oper"},       {"feudalism", "feudal"},    {"decisiveness", "decis"},
      {"hopefulness", "hope"},    {"callousness", "callous"}, {"triplicate", "triplic"},
      {"formative", "form"},      {"formalize", "formal"},    {"electrical", "electr"},
      {"hopeful", "hope"},        {"goodness", "good"},       {"revival", "reviv"},
      {"allowance", "allow"},     {"inference", "infer"},     {"airliner", "airlin"},
      {"gyroscopic", "gyroscop"}, {"adjustable", "adjust"},   {"defensible", "defens"},
      {"irritant", "irrit"},      {"replacement", "replac"},  {"adjustment", "adjust"},
      {"dependent", "depend"},    {"adoption", "adopt"},      {"communism", "commun"},
      {"activate", "activ"},      {"effective", "effect"},    {"bowdlerize", "bowdler"},
      {"probate", "probat"},      {"rate", "rate"},           {"cease", "ceas"},
      {"controll", "control"},    {"roll", "roll"},           {"generalization", "gener"},
      {"oscillators", "oscil"},   {"a", "a"},                 {"is", "is"},
  };
  for (const auto& [word, stem] : cases) EXPECT_EQ(porter_stem(word), stem) << word;
}

// ---------------------------------------------------------------------------
// BLEU

TEST(Bleu, HandComputedCases) {
  EXPECT_NEAR(bleu_n("the cat sat", "the cat sat down", 1), std::exp(1.0 - 4.0 / 3.0), 1e-12);
  // p1 = 2/3, smoothed p2 = (1 + 1) / (2 + 1)
  EXPECT_NEAR(bleu_n("a b c", "a b d", 2), 2.0 / 3.0, 1e-12);
  // Clipping: "the" appears twice in the reference only once.
  EXPECT_NEAR(bleu_n("the the the", "the cat", 1), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(bleu_n("x y", "a b", 1), 0.0);
  EXPECT_DOUBLE_EQ(b_u("x y", "a b"), 0.0);
  EXPECT_DOUBLE_EQ(b_u("", "a b"), 0.0);
  EXPECT_DOUBLE_EQ(b_u("a b", ""), 0.0);
  EXPECT_THROW(bleu_n("a", "a", 0), ConfigError);
}

TEST(Bleu, IdentityScoresFull) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_sentence(rng);
    EXPECT_NEAR(b_u(s, s), 100.0, 1e-9) << s;
  }
}

TEST(Bleu, BoundedAndCaseInsensitive) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto c = random_sentence(rng), r = random_sentence(rng);
    const double b = b_u(c, r);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 100.0 + 1e-9);
    std::string upper = c;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    EXPECT_EQ(b_u(upper, r), b);
  }
}

// ---------------------------------------------------------------------------
// ROUGE-L

TEST(RougeL, HandComputedCases) {
  EXPECT_NEAR(rouge_l("a b c d", "a c e"), 4.0 / 7.0, 1e-12);
  EXPECT_DOUBLE_EQ(rouge_l("a b", "a b"), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l("a b", "c d"), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("", "c d"), 0.0);
  EXPECT_EQ(lcs_length({"a", "b", "c", "b", "d", "a", "b"}, {"b", "d", "c", "a", "b", "a"}), 4u);
}

TEST(RougeL, LcsNeverShrinksWhenCandidateGrows) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto c = tokenize(random_sentence(rng));
    const auto r = tokenize(random_sentence(rng));
    const auto before = lcs_length(c, r);
    c.push_back(r[rng.index(r.size())]);
    EXPECT_GE(lcs_length(c, r), before);
    EXPECT_LE(lcs_length(c, r), std::min(c.size(), r.size()));
    EXPECT_EQ(lcs_length(c, r), lcs_length(r, c));
  }
}

// ---------------------------------------------------------------------------
// METEOR

TEST(Meteor, HandComputedCases) {
  // Two matches in one chunk: penalty 0.5 * (1/2)^3.
  EXPECT_NEAR(meteor("the cat", "the cat"), 0.9375, 1e-12);
  // "cats" aligns to "cat" at the stem stage.
  EXPECT_NEAR(meteor("the cats sat", "the cat sat"), 1.0 - 0.5 / 27.0, 1e-12);
  // Two chunks of one word each: P = R = 1, frag = 1.
  EXPECT_NEAR(meteor("b a", "a b"), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(meteor("x", "a b"), 0.0);
  EXPECT_DOUBLE_EQ(meteor("", "a b"), 0.0);
}

TEST(Meteor, RecallWeightedMean) {
  // m = 1, P = 1/1, R = 1/4, one chunk.
  const double p = 1.0, r = 0.25;
  const double fmean = p * r / (0.9 * p + 0.1 * r);
  EXPECT_NEAR(meteor("a", "a b c d"), fmean * (1.0 - 0.5), 1e-12);
}

TEST(Meteor, AlignmentPrefersExactThenStem) {
  const auto a = meteor_align({"playing", "play"}, {"play", "played"});
  EXPECT_EQ(a, (Alignment{{0, 1}, {1, 0}}));
  EXPECT_EQ(count_chunks(a), 2u);
  EXPECT_EQ(count_chunks({{0, 0}, {1, 1}, {2, 2}, {4, 3}}), 2u);
  EXPECT_EQ(count_chunks({}), 0u);
}

// ---------------------------------------------------------------------------
// BERT-S

TEST(BertS, IdenticalIsOneAndDisjointOneHotIsZero) {
  const HashEmbedder hash;
  EXPECT_DOUBLE_EQ(bert_s("soft piano with strings", "soft piano with strings", hash), 1.0);
  const OneHotEmbedder onehot({"a", "b", "c"});
  EXPECT_DOUBLE_EQ(bert_s("a", "b", onehot), 0.0);
  // P = 1 (the candidate word is found), R = 1/2.
  EXPECT_NEAR(bert_s("a", "a b", onehot), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(bert_s("", "a", onehot), 0.0);
}

TEST(BertS, HashEmbedderIsSeeded) {
  const HashEmbedder a(32, 1), b(32, 1), c(32, 2);
  EXPECT_EQ(a.vector_for("piano"), b.vector_for("piano"));
  EXPECT_NE(a.vector_for("piano"), c.vector_for("piano"));
  EXPECT_NE(a.vector_for("piano"), a.vector_for("drums"));
  EXPECT_THROW(HashEmbedder(0), ConfigError);
}

TEST(BertS, VectorFileEmbedder) {
  const auto path = std::filesystem::temp_directory_path() / "musilingo_vectors.txt";
  {
    std::ofstream out(path);
    out << "piano 1 0 0\nkeys 0.9 0.1 0\ndrums 0 0 1\n";
  }
  const VectorFileEmbedder e(path.string());
  EXPECT_EQ(e.embed({"drums"}), (Mat(1, 3) << 0, 0, 1).finished());
  const double cos = 0.9 / std::sqrt(0.82);
  EXPECT_NEAR(bert_s("piano", "keys", e), cos, 1e-12);
  {
    std::ofstream out(path);
    out << "piano 1 0 0\nkeys 0.9 0.1\n";
  }
  EXPECT_THROW(VectorFileEmbedder{path.string()}, DataError);
  std::filesystem::remove(path);
  EXPECT_THROW(VectorFileEmbedder{path.string()}, DataError);
}

// ---------------------------------------------------------------------------
// Corpus

TEST(Corpus, MeanOfPairScores) {
  Rng rng(4);
  std::vector<std::string> cands, refs;
  for (int i = 0; i < 50; ++i) {
    cands.push_back(random_sentence(rng));
    refs.push_back(random_sentence(rng));
  }
  const HashEmbedder hash;
  const auto rep = evaluate_corpus(cands, refs, hash);
  ASSERT_EQ(rep.pairs.size(), 50u);
  double bu = 0, mt = 0, rl = 0, bs = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto s = score_pair(cands[i], refs[i], hash);
    bu += s.bu / 50;
    mt += s.meteor / 50;
    rl += s.rouge_l / 50;
    bs += s.bert_s / 50;
  }
  EXPECT_NEAR(rep.mean.bu, bu, 1e-9);
  EXPECT_NEAR(rep.mean.meteor, mt, 1e-9);
  EXPECT_NEAR(rep.mean.rouge_l, rl, 1e-9);
  EXPECT_NEAR(rep.mean.bert_s, bs, 1e-9);
  const auto j = rep.to_json();
  EXPECT_EQ(j["count"], 50);
  EXPECT_NEAR(j["R-L"].get<double>(), 100.0 * rl, 1e-9);
  EXPECT_NE(rep.table().find("BERT-S"), std::string::npos);
}

TEST(Corpus, SinglePairAndErrors) {
  const HashEmbedder hash;
  const auto rep = evaluate_corpus({"a calm song."}, {"a calm song."}, hash);
  EXPECT_NEAR(rep.mean.bu, 100.0, 1e-9);
  EXPECT_DOUBLE_EQ(rep.mean.rouge_l, 1.0);
  EXPECT_THROW(evaluate_corpus({"a"}, {"a", "b"}, hash), DataError);
  EXPECT_THROW(evaluate_corpus({}, {}, hash), DataError);
}
