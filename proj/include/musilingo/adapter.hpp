// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// The trainable bridge between the frozen encoder and the frozen language
// model: a linear projection into the text embedding space followed by
// mean-pooling of consecutive groups of `compression` frames.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/encoder.hpp"

namespace musilingo {

struct AdapterState {
  Mat weight;  // [D_m x D_t]
  RowVec bias;  // [D_t]; kept at zero when use_bias is false
  int compression = 1;
  bool use_bias = true;

  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }

  void validate() const {
    if (compression < 1) throw DataError("adapter compression length must be >= 1");
    require_shape(bias.size() == weight.cols(), "adapter bias length != output dim");
    if (!all_finite(weight) || !all_finite(bias)) throw DataError("adapter parameters are not finite");
  }
};

/// Fan-in scaled Gaussian weight, zero bias.
inline AdapterState init_adapter(int in_dim, int out_dim, int compression, bool use_bias, std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("adapter dimensions must be >= 1");
  if (compression < 1) throw ConfigError("adapter compression length must be >= 1");
  Rng rng(derive_seed(seed, "adapter-init"));
  AdapterState a;
  a.weight = rng.normal_matrix(in_dim, out_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  a.bias = RowVec::Zero(out_dim);
  a.compression = compression;
  a.use_bias = use_bias;
  return a;
}

/// Music tokens in the text embedding space, [T' x D_t] with T' = ceil(T / t).
struct MusicEmbedding {
  Mat values;
  Eigen::Index source_frames = 0;

  Eigen::Index frames() const { return values.rows(); }
};

inline Eigen::Index compressed_length(Eigen::Index frames, int t) { return (frames + t - 1) / t; }

inline Mat project(const Mat& x, const AdapterState& a) {
  require_shape(x.cols() == a.weight.rows(),
                "adapter input width " + std::to_string(x.cols()) + " != " + std::to_string(a.weight.rows()));
  if (!all_finite(x)) throw DataError("adapter input is not finite");
  Mat out = x * a.weight;
  if (a.use_bias) out.rowwise() += a.bias;
  return out;
}

/// Group g is the mean of rows [g*t, min((g+1)*t, T)); the last group may
/// be shorter and is averaged over its own size.
inline MusicEmbedding temporal_compress(const Mat& m, int t) {
  if (m.rows() == 0) throw DataError("temporal_compress on an empty sequence");
  if (t < 1) throw DataError("compression length must be >= 1");
  const Eigen::Index groups = compressed_length(m.rows(), t);
  MusicEmbedding out{Mat(groups, m.cols()), m.rows()};
  for (Eigen::Index g = 0; g < groups; ++g) {
    const Eigen::Index begin = g * t;
    const Eigen::Index size = std::min<Eigen::Index>(t, m.rows() - begin);
    out.values.row(g) = m.middleRows(begin, size).colwise().sum() / static_cast<double>(size);
  }
  return out;
}

inline Mat temporal_compress_backward(const Mat& grad, Eigen::Index source_frames, int t) {
  require_shape(grad.rows() == compressed_length(source_frames, t), "compressed gradient rows");
  Mat out(source_frames, grad.cols());
  for (Eigen::Index g = 0; g < grad.rows(); ++g) {
    const Eigen::Index begin = g * t;
    const Eigen::Index size = std::min<Eigen::Index>(t, source_frames - begin);
    for (Eigen::Index r = 0; r < size; ++r) out.row(begin + r) = grad.row(g) / static_cast<double>(size);
  }
  return out;
}

struct AdaptCache {
  Mat aggregated;  // [T x D_m]
};

/// temporal_compress(project(aggregate_layers(feats, lw), a), a.compression)
inline MusicEmbedding adapt(const LayeredFeatures& feats, const LayerWeights& lw, const AdapterState& a,
                            AdaptCache* cache = nullptr) {
  Mat agg = aggregate_layers(feats, lw);
  MusicEmbedding out = temporal_compress(project(agg, a), a.compression);
  if (cache) cache->aggregated = std::move(agg);
  return out;
}

struct AdapterGrads {
  Mat weight;
  RowVec bias;
  Vec layer_logits;

  static AdapterGrads zeros_like(const AdapterState& a, const LayerWeights& lw) {
    return {Mat::Zero(a.weight.rows(), a.weight.cols()), RowVec::Zero(a.bias.size()),
            Vec::Zero(lw.logits.size())};
  }

  AdapterGrads& operator+=(const AdapterGrads& o) {
    weight += o.weight;
    bias += o.bias;
    layer_logits += o.layer_logits;
    return *this;
  }

  double squared_norm() const {
    return weight.squaredNorm() + bias.squaredNorm() + layer_logits.squaredNorm();
  }
};

/// Backpropagates d(loss)/d(music embedding) into the trainable parameters.
inline AdapterGrads adapt_backward(const LayeredFeatures& feats, const LayerWeights& lw, const AdapterState& a,
                                   const AdaptCache& cache, const Mat& grad_music) {
  const Mat grad_proj = temporal_compress_backward(grad_music, feats.frames(), a.compression);
  AdapterGrads g;
  g.weight = cache.aggregated.transpose() * grad_proj;
  g.bias = a.use_bias ? RowVec(grad_proj.colwise().sum()) : RowVec::Zero(a.bias.size());
  const Mat grad_agg = grad_proj * a.weight.transpose();
  g.layer_logits = aggregate_layers_backward(feats, lw, grad_agg);
  return g;
}

inline std::uint64_t digest(const AdapterState& a, const LayerWeights& lw) {
  Digest d;
  d.matrix(a.weight).matrix(a.bias).u64(static_cast<std::uint64_t>(a.compression)).u64(a.use_bias ? 1 : 0);
  d.matrix(lw.logits);
  return d.value();
}

}  // namespace musilingo
