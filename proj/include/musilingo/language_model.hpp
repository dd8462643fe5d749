// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen causal language model over mixed music/text embedding sequences.

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/common.hpp"
#include "musilingo/config.hpp"
#include "musilingo/nn.hpp"

#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace musilingo {

struct TokenSequence {
  std::vector<int> ids;
  std::string text;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

/// Byte-level vocabulary: ids 0..255 are raw bytes, then end-of-sequence
/// and padding.
class ByteTokenizer {
 public:
  static constexpr int kEos = 256;
  static constexpr int kPad = 257;
  static constexpr int kVocabSize = 258;

  static TokenSequence tokenize(std::string_view s) {
    TokenSequence t;
    t.text = std::string(s);
    t.ids.reserve(s.size());
    for (unsigned char c : s) t.ids.push_back(c);
    return t;
  }

  /// Special tokens carry no text and are skipped.
  static std::string detokenize(std::span<const int> ids) {
    std::string s;
    s.reserve(ids.size());
    for (int id : ids)
      if (id >= 0 && id < 256) s.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    return s;
  }
};

/// Forward activations kept for one backward pass to the input embeddings.
class LmTape {
 public:
  virtual ~LmTape() = default;
  const Mat& logits() const { return logits_; }
  /// d(loss)/d(input embeddings) given d(loss)/d(logits).
  virtual Mat backward(const Mat& grad_logits) const = 0;

 protected:
  Mat logits_;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual TokenSequence tokenize(std::string_view s) const = 0;
  virtual std::string detokenize(std::span<const int> ids) const = 0;
  virtual int vocab_size() const = 0;
  virtual int dim() const = 0;
  virtual int max_len() const = 0;
  virtual int eos_id() const = 0;
  virtual int pad_id() const = 0;

  /// Token embedding rows [n x D_t].
  virtual Mat embed_tokens(std::span<const int> ids) const = 0;
  /// Next-token logits [S x V]; row i depends only on rows <= i of the input.
  virtual Mat forward_logits(const Mat& embeddings) const = 0;
  virtual std::unique_ptr<LmTape> forward_with_tape(const Mat& embeddings) const = 0;
  virtual std::uint64_t parameter_digest() const = 0;
};

class ToyLanguageModel final : public LanguageModel {
 public:
  explicit ToyLanguageModel(const LmConfig& cfg) : cfg_(cfg) {
    if (cfg.dim < 1 || cfg.layers < 1 || cfg.heads < 1 || cfg.max_len < 2)
      throw ConfigError("toy language model dimensions are invalid");
    Rng rng(derive_seed(cfg.seed, "toy-lm"));
    token_embed_ = rng.normal_matrix(ByteTokenizer::kVocabSize, cfg.dim, cfg.embed_std);
    pos_embed_ = rng.normal_matrix(cfg.max_len, cfg.dim, cfg.embed_std);
    nn::BlockInit init;
    init.attn_std = cfg.attn_std;
    init.out_gain = cfg.out_gain;
    for (int l = 0; l < cfg.layers; ++l) blocks_.push_back(nn::random_block(rng, cfg.dim, cfg.heads, init));
    final_ln_ = {RowVec::Ones(cfg.dim), RowVec::Zero(cfg.dim)};
    unembed_ = rng.normal_matrix(cfg.dim, ByteTokenizer::kVocabSize,
                                 cfg.unembed_std / std::sqrt(static_cast<double>(cfg.dim)));
  }

  TokenSequence tokenize(std::string_view s) const override { return ByteTokenizer::tokenize(s); }
  std::string detokenize(std::span<const int> ids) const override { return ByteTokenizer::detokenize(ids); }
  int vocab_size() const override { return ByteTokenizer::kVocabSize; }
  int dim() const override { return cfg_.dim; }
  int max_len() const override { return cfg_.max_len; }
  int eos_id() const override { return ByteTokenizer::kEos; }
  int pad_id() const override { return ByteTokenizer::kPad; }

  Mat embed_tokens(std::span<const int> ids) const override {
    Mat out(static_cast<Eigen::Index>(ids.size()), cfg_.dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= ByteTokenizer::kVocabSize) throw DataError("token id out of range");
      out.row(static_cast<Eigen::Index>(i)) = token_embed_.row(ids[i]);
    }
    return out;
  }

  Mat forward_logits(const Mat& embeddings) const override { return run(embeddings, nullptr); }

  std::unique_ptr<LmTape> forward_with_tape(const Mat& embeddings) const override {
    auto tape = std::make_unique<Tape>(*this);
    tape->set_logits(run(embeddings, tape.get()));
    return tape;
  }

  std::uint64_t parameter_digest() const override {
    Digest d;
    d.matrix(token_embed_).matrix(pos_embed_);
    for (const auto& b : blocks_) nn::digest_block(d, b);
    d.matrix(final_ln_.gamma).matrix(final_ln_.beta).matrix(unembed_);
    return d.value();
  }

 private:
  class Tape final : public LmTape {
   public:
    explicit Tape(const ToyLanguageModel& m) : model_(m) {}
    void set_logits(Mat l) { logits_ = std::move(l); }

    Mat backward(const Mat& grad_logits) const override {
      require_shape(grad_logits.rows() == logits_.rows() && grad_logits.cols() == logits_.cols(),
                    "logit gradient shape");
      Mat dx = nn::layer_norm_backward(grad_logits * model_.unembed_.transpose(), model_.final_ln_, final_ln);
      for (std::size_t l = model_.blocks_.size(); l-- > 0;) dx = nn::block_backward(model_.blocks_[l], dx, blocks[l]);
      return dx;  // positional embeddings are additive constants
    }

    const ToyLanguageModel& model_;
    std::vector<nn::BlockCache> blocks;
    nn::LayerNormCache final_ln;
  };

  Mat run(const Mat& embeddings, Tape* tape) const {
    require_shape(embeddings.cols() == cfg_.dim, "embedding width " + std::to_string(embeddings.cols()) +
                                                     " != lm.dim " + std::to_string(cfg_.dim));
    if (embeddings.rows() == 0) throw DataError("empty input sequence");
    if (embeddings.rows() > cfg_.max_len)
      throw DataError("sequence length " + std::to_string(embeddings.rows()) + " exceeds lm.max_len " +
                      std::to_string(cfg_.max_len));
    if (!all_finite(embeddings)) throw DataError("input embeddings are not finite");
    Mat x = embeddings + pos_embed_.topRows(embeddings.rows());
    if (tape) tape->blocks.resize(blocks_.size());
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      x = nn::block_forward(blocks_[l], x, /*causal=*/true, tape ? &tape->blocks[l] : nullptr);
    const Mat h = nn::layer_norm(x, final_ln_, tape ? &tape->final_ln : nullptr);
    return h * unembed_;
  }

  LmConfig cfg_;
  Mat token_embed_;
  Mat pos_embed_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
  Mat unembed_;
};

inline std::unique_ptr<LanguageModel> make_language_model(const LmConfig& cfg) {
  if (cfg.backend == "toy") return std::make_unique<ToyLanguageModel>(cfg);
  if (cfg.backend == "pretrained")
    throw RuntimeError("the pretrained language model backend is not available in this build; use lm.backend=toy");
  throw ConfigError("unknown lm.backend '" + cfg.backend + "'");
}

// ---------------------------------------------------------------------------
// Decoding

struct DecodeOptions {
  enum class Mode { greedy, sample };
  Mode mode = Mode::greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static DecodeOptions greedy() { return {}; }
  static DecodeOptions sample(double temperature, std::uint64_t seed) {
    return {Mode::sample, temperature, seed};
  }
};

struct Generation {
  std::vector<int> ids;  // generated ids, end-of-sequence excluded
  std::string text;
  bool stopped_at_eos = false;
};

/// Autoregressive continuation of an embedded prefix. Stops at the
/// end-of-sequence token, after max_new tokens, or at the context limit.
inline Generation generate_from_prefix(const Mat& prefix, const LanguageModel& lm, const DecodeOptions& decode,
                                       int max_new) {
  if (max_new <= 0) throw ConfigError("max_new must be positive");
  if (decode.mode == DecodeOptions::Mode::sample && !(decode.temperature > 0.0))
    throw ConfigError("sampling temperature must be positive");
  Rng rng(derive_seed(decode.seed, "decode"));
  Mat seq = prefix;
  Generation out;
  for (int step = 0; step < max_new && seq.rows() < lm.max_len(); ++step) {
    const Mat logits = lm.forward_logits(seq);
    RowVec last = logits.row(logits.rows() - 1);
    last(lm.pad_id()) = -std::numeric_limits<double>::infinity();
    int next = 0;
    if (decode.mode == DecodeOptions::Mode::greedy) {
      last.maxCoeff(&next);
    } else {
      const RowVec scaled = last / decode.temperature;
      const double mx = scaled.maxCoeff();
      const RowVec p = (scaled.array() - mx).exp();
      double u = rng.uniform() * p.sum();
      next = static_cast<int>(p.size()) - 1;
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        u -= p(k);
        if (u < 0.0) {
          next = static_cast<int>(k);
          break;
        }
      }
    }
    if (next == lm.eos_id()) {
      out.stopped_at_eos = true;
      break;
    }
    out.ids.push_back(next);
    const int id = next;
    Mat grown(seq.rows() + 1, seq.cols());
    grown.topRows(seq.rows()) = seq;
    grown.row(seq.rows()) = lm.embed_tokens(std::span<const int>(&id, 1)).row(0);
    seq = std::move(grown);
  }
  out.text = lm.detokenize(out.ids);
  return out;
}

/// Music embedding followed directly by the tokenised prompt.
inline Generation generate(const MusicEmbedding& music, std::string_view prompt, const LanguageModel& lm,
                           const DecodeOptions& decode, int max_new) {
  require_shape(music.values.cols() == lm.dim(), "music embedding width != lm.dim");
  const TokenSequence p = lm.tokenize(prompt);
  Mat prefix(music.frames() + static_cast<Eigen::Index>(p.size()), lm.dim());
  prefix.topRows(music.frames()) = music.values;
  if (!p.empty()) prefix.bottomRows(static_cast<Eigen::Index>(p.size())) = lm.embed_tokens(p.ids);
  return generate_from_prefix(prefix, lm, decode, max_new);
}

}  // namespace musilingo
