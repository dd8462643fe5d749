// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/config.hpp"

#include <cmath>

namespace musilingo {

/// Adam first/second moments for every trainable tensor.
struct AdamMoments {
  AdapterGrads first;
  AdapterGrads second;
  std::int64_t updates = 0;

  static AdamMoments zeros_like(const AdapterState& a, const LayerWeights& lw) {
    return {AdapterGrads::zeros_like(a, lw), AdapterGrads::zeros_like(a, lw), 0};
  }
};

/// Linear warmup over ceil(warmup_frac * total) steps, then cosine decay to zero.
inline double scheduled_lr(const TrainerConfig& cfg, std::int64_t step, std::int64_t total) {
  if (total <= 0) return cfg.lr;
  const auto warmup = static_cast<std::int64_t>(std::ceil(cfg.warmup_frac * static_cast<double>(total)));
  if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::int64_t decay_steps = total - warmup;
  if (decay_steps <= 0) return cfg.lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(decay_steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(progress, 1.0)));
}

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
inline double clip_global_norm(AdapterGrads& g, double max_norm) {
  const double norm = std::sqrt(g.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    g.weight *= s;
    g.bias *= s;
    g.layer_logits *= s;
  }
  return norm;
}

/// One AdamW update. Weight decay is decoupled and applied to the
/// projection matrix only.
inline void adamw_update(AdapterState& a, LayerWeights& lw, AdamMoments& mom, const AdapterGrads& g, double lr,
                         const TrainerConfig& cfg) {
  mom.updates += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(mom.updates));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(mom.updates));

  auto step = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps));
  };

  a.weight *= (1.0 - lr * cfg.weight_decay);
  step(a.weight, mom.first.weight, mom.second.weight, g.weight);
  if (a.use_bias) step(a.bias, mom.first.bias, mom.second.bias, g.bias);
  step(lw.logits, mom.first.layer_logits, mom.second.layer_logits, g.layer_logits);
}

}  // namespace musilingo
