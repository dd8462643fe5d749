// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal pre-LN transformer block shared by the toy encoder and the toy
// language model. Parameters are never updated, so the backward pass only
// propagates gradients to the block input.

#pragma once

#include "musilingo/common.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace musilingo::nn {

struct LayerNorm {
  RowVec gamma;
  RowVec beta;
  static constexpr double kEps = 1e-5;
};

struct LayerNormCache {
  Mat normalized;  // x-hat
  Vec inv_std;
};

inline Mat layer_norm(const Mat& x, const LayerNorm& ln, LayerNormCache* cache = nullptr) {
  const Eigen::Index d = x.cols();
  Mat xhat(x.rows(), d);
  Vec inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
    inv_std(r) = 1.0 / std::sqrt(var + LayerNorm::kEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Mat y = (xhat.array().rowwise() * ln.gamma.array()).rowwise() + ln.beta.array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

inline Mat layer_norm_backward(const Mat& dy, const LayerNorm& ln, const LayerNormCache& cache) {
  const double d = static_cast<double>(dy.cols());
  Mat dxhat = dy.array().rowwise() * ln.gamma.array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / d;
    const double mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / d;
    dx.row(r) = (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx) *
                cache.inv_std(r);
  }
  return dx;
}

inline constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2/pi)

inline double gelu(double z) {
  return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + 0.044715 * z * z * z)));
}

inline double gelu_grad(double z) {
  const double t = std::tanh(kGeluC * (z + 0.044715 * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * z * z);
}

struct TransformerBlock {
  int heads = 1;
  LayerNorm ln1, ln2;
  Mat wq, wk, wv, wo;  // [D x D]
  Mat w1;              // [D x H]
  RowVec b1;
  Mat w2;  // [H x D]
  RowVec b2;

  int dim() const { return static_cast<int>(wq.rows()); }
};

struct BlockCache {
  LayerNormCache ln1, ln2;
  Mat q, k, v;
  std::vector<Mat> attn;  // per head [S x S]
  Mat pre_act;            // [S x H]
  Mat act;
};

struct BlockInit {
  double attn_std = 0.0;    // 0 selects 1/sqrt(D)
  double out_gain = 1.0;    // multiplier on wo and w2
  double hidden_mult = 4.0;
};

inline TransformerBlock random_block(Rng& rng, int dim, int heads, const BlockInit& init = {}) {
  if (dim % heads != 0) throw ConfigError("model dim must be divisible by head count");
  const int hidden = static_cast<int>(init.hidden_mult * dim);
  const double s = init.attn_std > 0.0 ? init.attn_std : 1.0 / std::sqrt(static_cast<double>(dim));
  TransformerBlock b;
  b.heads = heads;
  b.ln1 = {RowVec::Ones(dim), RowVec::Zero(dim)};
  b.ln2 = {RowVec::Ones(dim), RowVec::Zero(dim)};
  b.wq = rng.normal_matrix(dim, dim, s);
  b.wk = rng.normal_matrix(dim, dim, s);
  b.wv = rng.normal_matrix(dim, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  b.wo = rng.normal_matrix(dim, dim, init.out_gain / std::sqrt(static_cast<double>(dim)));
  b.w1 = rng.normal_matrix(dim, hidden, 1.0 / std::sqrt(static_cast<double>(dim)));
  b.b1 = RowVec::Zero(hidden);
  b.w2 = rng.normal_matrix(hidden, dim, init.out_gain / std::sqrt(static_cast<double>(hidden)));
  b.b2 = RowVec::Zero(dim);
  return b;
}

inline void digest_block(Digest& d, const TransformerBlock& b) {
  d.u64(static_cast<std::uint64_t>(b.heads));
  d.matrix(b.ln1.gamma).matrix(b.ln1.beta).matrix(b.ln2.gamma).matrix(b.ln2.beta);
  d.matrix(b.wq).matrix(b.wk).matrix(b.wv).matrix(b.wo);
  d.matrix(b.w1).matrix(b.b1).matrix(b.w2).matrix(b.b2);
}

inline Mat block_forward(const TransformerBlock& b, const Mat& x, bool causal,
                         BlockCache* cache = nullptr) {
  const Eigen::Index seq = x.rows();
  const int dh = b.dim() / b.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  LayerNormCache ln1_cache;
  const Mat h1 = layer_norm(x, b.ln1, &ln1_cache);
  Mat q = h1 * b.wq;
  Mat k = h1 * b.wk;
  Mat v = h1 * b.wv;

  Mat heads_out(seq, b.dim());
  std::vector<Mat> attn(static_cast<std::size_t>(b.heads));
  for (int h = 0; h < b.heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    Mat scores = (qh * kh.transpose()) * scale;
    Mat probs(seq, seq);
    for (Eigen::Index i = 0; i < seq; ++i) {
      const Eigen::Index limit = causal ? i + 1 : seq;
      const double mx = scores.row(i).head(limit).maxCoeff();
      double total = 0.0;
      for (Eigen::Index j = 0; j < seq; ++j) {
        const double e = j < limit ? std::exp(scores(i, j) - mx) : 0.0;
        probs(i, j) = e;
        total += e;
      }
      probs.row(i) /= total;
    }
    heads_out.middleCols(h * dh, dh) = probs * v.middleCols(h * dh, dh);
    attn[static_cast<std::size_t>(h)] = std::move(probs);
  }
  Mat x1 = x + heads_out * b.wo;

  LayerNormCache ln2_cache;
  const Mat h2 = layer_norm(x1, b.ln2, &ln2_cache);
  Mat pre = (h2 * b.w1).rowwise() + b.b1;
  Mat act = pre.unaryExpr([](double z) { return gelu(z); });
  Mat out = x1 + ((act * b.w2).rowwise() + b.b2);

  if (cache) {
    cache->ln1 = std::move(ln1_cache);
    cache->ln2 = std::move(ln2_cache);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->pre_act = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

/// Gradient of a scalar with respect to the block input, given its
/// gradient with respect to the block output.
inline Mat block_backward(const TransformerBlock& b, const Mat& dout, const BlockCache& cache) {
  const int dh = b.dim() / b.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // MLP branch
  Mat dact = dout * b.w2.transpose();
  Mat dpre = dact.array() * cache.pre_act.unaryExpr([](double z) { return gelu_grad(z); }).array();
  Mat dx1 = dout + layer_norm_backward(dpre * b.w1.transpose(), b.ln2, cache.ln2);

  // attention branch
  const Mat dheads = dx1 * b.wo.transpose();
  Mat dq(dheads.rows(), b.dim());
  Mat dk(dheads.rows(), b.dim());
  Mat dv(dheads.rows(), b.dim());
  for (int h = 0; h < b.heads; ++h) {
    const Mat& probs = cache.attn[static_cast<std::size_t>(h)];
    const auto dho = dheads.middleCols(h * dh, dh);
    const Mat dprobs = dho * cache.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = probs.transpose() * dho;
    const Vec row_dot = (dprobs.array() * probs.array()).rowwise().sum();
    const Mat dscores = (probs.array() * (dprobs.colwise() - row_dot).array()) * scale;
    dq.middleCols(h * dh, dh) = dscores * cache.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = dscores.transpose() * cache.q.middleCols(h * dh, dh);
  }
  const Mat dh1 = dq * b.wq.transpose() + dk * b.wk.transpose() + dv * b.wv.transpose();
  return dx1 + layer_norm_backward(dh1, b.ln1, cache.ln1);
}

}  // namespace musilingo::nn
