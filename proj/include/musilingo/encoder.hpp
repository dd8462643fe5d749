// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen music encoders and the learnable weighted average over their
// per-layer hidden states.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/config.hpp"
#include "musilingo/data.hpp"
#include "musilingo/nn.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

namespace musilingo {

/// Hidden states of every encoder layer for one clip: states[l] is [T x D_m].
struct LayeredFeatures {
  std::vector<Mat> states;

  std::size_t layer_count() const { return states.size(); }
  Eigen::Index frames() const { return states.empty() ? 0 : states.front().rows(); }
  Eigen::Index dim() const { return states.empty() ? 0 : states.front().cols(); }

  void validate() const {
    if (states.empty()) throw DataError("layered features have no layers");
    for (const auto& s : states) {
      require_shape(s.rows() == frames() && s.cols() == dim(), "layer states disagree in shape");
      if (!all_finite(s)) throw DataError("layered features contain non-finite values");
    }
    if (frames() == 0) throw DataError("layered features have zero frames");
  }
};

/// Trainable logits over encoder layers; the mixing weights are their softmax.
struct LayerWeights {
  Vec logits;

  static LayerWeights uniform(std::size_t n) { return {Vec::Zero(static_cast<Eigen::Index>(n))}; }

  std::size_t size() const { return static_cast<std::size_t>(logits.size()); }

  Vec weights() const {
    const double mx = logits.maxCoeff();
    Vec e = (logits.array() - mx).exp();
    return e / e.sum();
  }
};

/// Convex combination of the layer states: out[τ] = Σ_l w_l · states[l][τ].
inline Mat aggregate_layers(const LayeredFeatures& feats, const LayerWeights& lw) {
  if (lw.size() != feats.layer_count())
    throw DataError("layer weight count " + std::to_string(lw.size()) + " != encoder layer count " +
                    std::to_string(feats.layer_count()));
  const Vec w = lw.weights();
  Mat out = Mat::Zero(feats.frames(), feats.dim());
  for (std::size_t l = 0; l < feats.layer_count(); ++l) out += w(static_cast<Eigen::Index>(l)) * feats.states[l];
  return out;
}

/// Gradient with respect to the logits given d(loss)/d(aggregate).
inline Vec aggregate_layers_backward(const LayeredFeatures& feats, const LayerWeights& lw,
                                     const Mat& grad_out) {
  const Vec w = lw.weights();
  Vec g(w.size());
  for (Eigen::Index l = 0; l < w.size(); ++l)
    g(l) = (grad_out.array() * feats.states[static_cast<std::size_t>(l)].array()).sum();
  const double mean = w.dot(g);
  return w.array() * (g.array() - mean);
}

// ---------------------------------------------------------------------------
// Backends

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual LayeredFeatures encode(const MusicClip& clip) const = 0;
  /// Number of states returned per clip (L+1 with the embedding layer).
  virtual std::size_t state_count() const = 0;
  virtual int dim() const = 0;
  virtual std::uint64_t parameter_digest() const = 0;
};

/// Small transformer with seed-generated weights. Its parameters are set
/// once in the constructor and never exposed for mutation.
class ToyEncoder final : public EncoderBackend {
 public:
  explicit ToyEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    if (cfg.layers < 1 || cfg.dim < 1 || cfg.input_dim < 1 || cfg.frames < 1)
      throw ConfigError("toy encoder dimensions must be >= 1");
    Rng rng(derive_seed(cfg.seed, "toy-encoder"));
    input_proj_ = rng.normal_matrix(cfg.input_dim, cfg.dim, 1.0 / std::sqrt(static_cast<double>(cfg.input_dim)));
    input_bias_ = rng.normal_matrix(1, cfg.dim, 0.1);
    const int heads = cfg.dim % 4 == 0 ? 4 : 1;
    for (int l = 0; l < cfg.layers; ++l) blocks_.push_back(nn::random_block(rng, cfg.dim, heads));
  }

  LayeredFeatures encode(const MusicClip& clip) const override {
    const Mat frames = frame_features(clip);
    Mat x = frames * input_proj_;
    x.rowwise() += input_bias_.row(0);
    x += positional(x.rows(), cfg_.dim);

    LayeredFeatures out;
    if (cfg_.include_embedding_layer) out.states.push_back(x);
    for (const auto& b : blocks_) {
      x = nn::block_forward(b, x, /*causal=*/false);
      out.states.push_back(x);
    }
    return out;
  }

  std::size_t state_count() const override { return static_cast<std::size_t>(cfg_.state_count()); }
  int dim() const override { return cfg_.dim; }

  std::uint64_t parameter_digest() const override {
    Digest d;
    d.matrix(input_proj_).matrix(input_bias_);
    for (const auto& b : blocks_) nn::digest_block(d, b);
    return d.value();
  }

  /// Per-frame inputs [T x input_dim]. Waveforms are cut into T equal
  /// frames, each summarised by the RMS of input_dim sub-windows.
  Mat frame_features(const MusicClip& clip) const {
    if (const auto* f = std::get_if<FrameFeatures>(&clip.content)) {
      if (f->frames.rows() == 0) throw DataError("clip " + clip.id + " is empty");
      if (f->frames.cols() != cfg_.input_dim)
        throw DataError("clip " + clip.id + ": feature dim mismatch (" + std::to_string(f->frames.cols()) +
                        " != encoder.input_dim " + std::to_string(cfg_.input_dim) + ")");
      if (!all_finite(f->frames)) throw DataError("clip " + clip.id + " has non-finite features");
      return f->frames;
    }
    const auto& w = std::get<Waveform>(clip.content);
    if (w.samples.empty()) throw DataError("clip " + clip.id + " is empty");
    const auto n = w.samples.size();
    const auto frames = static_cast<std::size_t>(cfg_.frames);
    const auto bins = static_cast<std::size_t>(cfg_.input_dim);
    Mat out = Mat::Zero(cfg_.frames, cfg_.input_dim);
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t begin = t * n / frames;
      const std::size_t end = (t + 1) * n / frames;
      const std::size_t len = end - begin;
      for (std::size_t b = 0; b < bins && len > 0; ++b) {
        const std::size_t lo = begin + b * len / bins;
        const std::size_t hi = begin + (b + 1) * len / bins;
        if (hi <= lo) continue;
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += w.samples[i] * w.samples[i];
        out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = std::sqrt(acc / static_cast<double>(hi - lo));
      }
    }
    if (!all_finite(out)) throw DataError("clip " + clip.id + " has non-finite samples");
    return out;
  }

 private:
  static Mat positional(Eigen::Index frames, int dim) {
    Mat p(frames, dim);
    for (Eigen::Index t = 0; t < frames; ++t) {
      for (int k = 0; k < dim; ++k) {
        const double rate = std::pow(10000.0, -static_cast<double>(2 * (k / 2)) / dim);
        p(t, k) = (k % 2 == 0) ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
      }
    }
    return p;
  }

  EncoderConfig cfg_;
  Mat input_proj_;
  Mat input_bias_;
  std::vector<nn::TransformerBlock> blocks_;
};

// Layered-features file written by an external extraction script (for
// example a pretrained self-supervised music model run offline):
//   "MLLF" | u32 version=1 | u32 layers | u32 frames | u32 dim | f64 LE data
inline void write_layered_features(const LayeredFeatures& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path.string());
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  out.write("MLLF", 4);
  u32(1);
  u32(static_cast<std::uint32_t>(f.layer_count()));
  u32(static_cast<std::uint32_t>(f.frames()));
  u32(static_cast<std::uint32_t>(f.dim()));
  for (const auto& s : f.states)
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) {
        const auto bits = std::bit_cast<std::uint64_t>(s(r, c));
        for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
      }
}

inline LayeredFeatures read_layered_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open layered features " + path.string());
  auto u32 = [&]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated layered features " + path.string());
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  };
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MLLF", 4) != 0) throw DataError("bad magic in " + path.string());
  if (u32() != 1) throw DataError("unsupported layered features version in " + path.string());
  const auto layers = u32(), frames = u32(), dim = u32();
  LayeredFeatures f;
  for (std::uint32_t l = 0; l < layers; ++l) {
    Mat s(frames, dim);
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated layered features " + path.string());
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        s(r, c) = std::bit_cast<double>(bits);
      }
    f.states.push_back(std::move(s));
  }
  f.validate();
  return f;
}

/// Adapter for a pretrained encoder whose per-layer states were extracted
/// offline into `<weights_path>/<clip_id>.mllf`.
class PretrainedEncoder final : public EncoderBackend {
 public:
  explicit PretrainedEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    if (cfg.weights_path.empty() || !std::filesystem::is_directory(cfg.weights_path))
      throw RuntimeError("pretrained encoder needs encoder.weights_path pointing at a features directory");
  }

  LayeredFeatures encode(const MusicClip& clip) const override {
    auto f = read_layered_features(std::filesystem::path(cfg_.weights_path) / (clip.id + ".mllf"));
    if (f.layer_count() != state_count() || f.dim() != cfg_.dim)
      throw DataError("clip " + clip.id + ": feature dim mismatch with encoder config");
    return f;
  }

  std::size_t state_count() const override { return static_cast<std::size_t>(cfg_.state_count()); }
  int dim() const override { return cfg_.dim; }
  std::uint64_t parameter_digest() const override { return Digest{}.str(cfg_.weights_path).value(); }

 private:
  EncoderConfig cfg_;
};

inline std::unique_ptr<EncoderBackend> make_encoder(const EncoderConfig& cfg) {
  if (cfg.backend == "toy") return std::make_unique<ToyEncoder>(cfg);
  if (cfg.backend == "pretrained") return std::make_unique<PretrainedEncoder>(cfg);
  throw ConfigError("unknown encoder.backend '" + cfg.backend + "'");
}

}  // namespace musilingo
