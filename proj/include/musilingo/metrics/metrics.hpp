// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Caption and answer quality metrics. All scores except B-U lie in [0, 1];
// B-U is reported on a 0-100 scale.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/metrics/text.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace musilingo::metrics {

using Tokens = std::vector<std::string>;

// ---------------------------------------------------------------------------
// BLEU

namespace bleu_detail {

inline std::map<Tokens, int> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, int> counts;
  if (t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i),
                                                                  t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace bleu_detail

/// Cumulative BLEU-n with uniform weights against a single reference.
/// Orders >= 2 use add-one smoothing so short hypotheses do not collapse to
/// zero; unigram precision is left unsmoothed.
inline double bleu_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw ConfigError("BLEU order must be >= 1");
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto cand = bleu_detail::ngram_counts(candidate, static_cast<std::size_t>(k));
    const auto ref = bleu_detail::ngram_counts(reference, static_cast<std::size_t>(k));
    double matched = 0.0, total = 0.0;
    for (const auto& [gram, count] : cand) {
      total += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    const double p = k == 1 ? matched / total : (matched + 1.0) / (total + 1.0);
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / n);
}

inline double bleu_n(std::string_view candidate, std::string_view reference, int n) {
  return bleu_n(tokenize(candidate), tokenize(reference), n);
}

/// Mean of cumulative BLEU-1..4, times 100.
inline double b_u(const Tokens& candidate, const Tokens& reference) {
  double s = 0.0;
  for (int n = 1; n <= 4; ++n) s += bleu_n(candidate, reference, n);
  return 100.0 * s / 4.0;
}

inline double b_u(std::string_view candidate, std::string_view reference) {
  return b_u(tokenize(candidate), tokenize(reference));
}

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS-based F1.
inline double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

inline double rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l(tokenize(candidate), tokenize(reference));
}

// ---------------------------------------------------------------------------
// METEOR

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

/// Word alignment as (candidate index, reference index), sorted by candidate.
using Alignment = std::vector<std::pair<std::size_t, std::size_t>>;

/// Greedy two-stage alignment: exact matches first, then Porter-stem
/// matches among the words still unaligned. Each stage scans the candidate
/// left to right and takes the leftmost free reference word.
inline Alignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  std::vector<bool> cand_used(candidate.size(), false), ref_used(reference.size(), false);
  Alignment out;
  auto stage = [&](auto&& key_c, auto&& key_r) {
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (cand_used[i]) continue;
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (ref_used[j] || key_c(i) != key_r(j)) continue;
        cand_used[i] = ref_used[j] = true;
        out.emplace_back(i, j);
        break;
      }
    }
  };
  stage([&](std::size_t i) { return candidate[i]; }, [&](std::size_t j) { return reference[j]; });
  std::vector<std::string> cs(candidate.size()), rs(reference.size());
  for (std::size_t i = 0; i < candidate.size(); ++i) cs[i] = porter_stem(candidate[i]);
  for (std::size_t j = 0; j < reference.size(); ++j) rs[j] = porter_stem(reference[j]);
  stage([&](std::size_t i) { return cs[i]; }, [&](std::size_t j) { return rs[j]; });
  std::sort(out.begin(), out.end());
  return out;
}

/// Minimal number of runs of alignments contiguous in both sentences.
inline std::size_t count_chunks(const Alignment& sorted) {
  if (sorted.empty()) return 0;
  std::size_t chunks = 1;
  for (std::size_t k = 1; k < sorted.size(); ++k)
    if (sorted[k].first != sorted[k - 1].first + 1 || sorted[k].second != sorted[k - 1].second + 1) ++chunks;
  return chunks;
}

inline double meteor(const Tokens& candidate, const Tokens& reference, const MeteorParams& p = {}) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const Alignment a = meteor_align(candidate, reference);
  if (a.empty()) return 0.0;
  const double m = static_cast<double>(a.size());
  const double precision = m / static_cast<double>(candidate.size());
  const double recall = m / static_cast<double>(reference.size());
  const double fmean = precision * recall / (p.alpha * precision + (1.0 - p.alpha) * recall);
  const double frag = static_cast<double>(count_chunks(a)) / m;
  const double penalty = p.gamma * std::pow(frag, p.beta);
  return fmean * (1.0 - penalty);
}

inline double meteor(std::string_view candidate, std::string_view reference) {
  return meteor(tokenize(candidate), tokenize(reference));
}

// ---------------------------------------------------------------------------
// BERT-S

/// Maps tokens to row vectors. Implementations must be deterministic.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Mat embed(const Tokens& tokens) const = 0;
  virtual std::string name() const = 0;
};

/// Seeded Gaussian vector per distinct token. Identical tokens share a
/// vector; different tokens are nearly orthogonal.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(int dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    if (dim <= 0) throw ConfigError("embedding dim must be positive");
  }

  RowVec vector_for(const std::string& token) const {
    Rng rng(derive_seed(seed_, "tok:" + token));
    RowVec v(dim_);
    for (int i = 0; i < dim_; ++i) v(i) = rng.normal();
    return v;
  }

  Mat embed(const Tokens& tokens) const override {
    Mat out(static_cast<Eigen::Index>(tokens.size()), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = vector_for(tokens[i]);
    return out;
  }

  std::string name() const override { return "hash-" + std::to_string(dim_); }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Word vectors read from a whitespace-separated text file: one token per
/// line followed by its components. Unknown tokens fall back to hashing.
class VectorFileEmbedder : public Embedder {
 public:
  explicit VectorFileEmbedder(const std::string& path) : fallback_(1) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open word vectors " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string word;
      if (!(ss >> word)) continue;
      std::vector<double> vals;
      double x;
      while (ss >> x) vals.push_back(x);
      if (vals.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": no vector components");
      if (dim_ == 0) dim_ = static_cast<int>(vals.size());
      if (static_cast<int>(vals.size()) != dim_)
        throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim_) + " components");
      table_[word] = Eigen::Map<const RowVec>(vals.data(), dim_);
    }
    if (table_.empty()) throw DataError("no word vectors in " + path);
    fallback_ = HashEmbedder(dim_, 0);
  }

  Mat embed(const Tokens& tokens) const override {
    Mat out(static_cast<Eigen::Index>(tokens.size()), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto it = table_.find(tokens[i]);
      out.row(static_cast<Eigen::Index>(i)) = it != table_.end() ? it->second : fallback_.vector_for(tokens[i]);
    }
    return out;
  }

  std::string name() const override { return "vectors-" + std::to_string(dim_); }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, RowVec> table_;
  HashEmbedder fallback_;
};

/// Greedy cosine matching F1. Precision and recall are clamped at zero
/// before combining.
inline double bert_s(const Tokens& candidate, const Tokens& reference, const Embedder& embedder) {
  if (candidate.empty() || reference.empty()) return 0.0;
  auto unit_rows = [](Mat m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (n > 0.0) m.row(i) /= n;
    }
    return m;
  };
  const Mat c = unit_rows(embedder.embed(candidate));
  const Mat r = unit_rows(embedder.embed(reference));
  const Mat sim = c * r.transpose();
  const double precision = std::max(0.0, sim.rowwise().maxCoeff().mean());
  const double recall = std::max(0.0, sim.colwise().maxCoeff().mean());
  if (precision + recall <= 0.0) return 0.0;
  return std::min(1.0, 2.0 * precision * recall / (precision + recall));
}

inline double bert_s(std::string_view candidate, std::string_view reference, const Embedder& embedder) {
  return bert_s(tokenize(candidate), tokenize(reference), embedder);
}

// ---------------------------------------------------------------------------
// Corpus evaluation

struct PairScores {
  double bu = 0.0;      // 0-100
  double meteor = 0.0;  // 0-1
  double rouge_l = 0.0;
  double bert_s = 0.0;
};

struct EvalReport {
  std::vector<PairScores> pairs;
  PairScores mean;
  std::string embedder;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["count"] = pairs.size();
    j["embedder"] = embedder;
    j["B-U"] = mean.bu;
    j["M-R"] = 100.0 * mean.meteor;
    j["R-L"] = 100.0 * mean.rouge_l;
    j["BERT-S"] = 100.0 * mean.bert_s;
    auto& rows = j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : pairs)
      rows.push_back({{"B-U", p.bu}, {"M-R", p.meteor}, {"R-L", p.rouge_l}, {"BERT-S", p.bert_s}});
    return j;
  }

  /// One header row and one score row; every column is on a 0-100 scale.
  std::string table() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %8s %8s %8s %8s\n%-8zu %8.2f %8.2f %8.2f %8.2f\n", "n", "B-U", "M-R", "R-L",
                  "BERT-S", pairs.size(), mean.bu, 100.0 * mean.meteor, 100.0 * mean.rouge_l, 100.0 * mean.bert_s);
    return buf;
  }
};

inline PairScores score_pair(std::string_view candidate, std::string_view reference, const Embedder& embedder) {
  const Tokens c = tokenize(candidate), r = tokenize(reference);
  return {b_u(c, r), meteor(c, r), rouge_l(c, r), bert_s(c, r, embedder)};
}

/// Scores aligned candidate/reference lists and averages each metric.
inline EvalReport evaluate_corpus(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                                  const Embedder& embedder) {
  if (candidates.size() != references.size())
    throw DataError("prediction count " + std::to_string(candidates.size()) + " != reference count " +
                    std::to_string(references.size()));
  if (candidates.empty()) throw DataError("nothing to evaluate");
  EvalReport rep;
  rep.embedder = embedder.name();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    rep.pairs.push_back(score_pair(candidates[i], references[i], embedder));
    rep.mean.bu += rep.pairs.back().bu;
    rep.mean.meteor += rep.pairs.back().meteor;
    rep.mean.rouge_l += rep.pairs.back().rouge_l;
    rep.mean.bert_s += rep.pairs.back().bert_s;
  }
  const double n = static_cast<double>(candidates.size());
  rep.mean.bu /= n;
  rep.mean.meteor /= n;
  rep.mean.rouge_l /= n;
  rep.mean.bert_s /= n;
  return rep;
}

}  // namespace musilingo::metrics
