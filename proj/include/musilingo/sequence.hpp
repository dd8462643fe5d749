// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Assembly of mixed music/text sequences and the masked next-token loss.
//
// Shift convention: logits at position i predict the token at i+1, and a
// target position contributes to the loss when loss_mask[i+1] is set.

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/common.hpp"
#include "musilingo/config.hpp"
#include "musilingo/language_model.hpp"

#include <cstdint>
#include <vector>

namespace musilingo {

enum class Segment : std::uint8_t { preamble, music, prompt, answer, pad };

struct PromptTemplate {
  std::string pre_music;
  std::string post_music;
  std::string answer_prefix = "###Assistant:";

  static PromptTemplate from_config(const PromptConfig& c) { return {c.pre_music, c.post_music, c.answer_prefix}; }
  /// Caption pre-training concatenates music and caption with no text around them.
  static PromptTemplate pretraining() { return {"", "", ""}; }
};

struct MixedSequence {
  Mat embeddings;                     // [S x D_t]
  std::vector<Segment> segments;      // [S]
  std::vector<std::uint8_t> loss_mask;  // [S]
  std::vector<int> token_ids;         // [S]; pad id on music rows
  Eigen::Index music_begin = 0;
  Eigen::Index music_end = 0;

  Eigen::Index size() const { return embeddings.rows(); }
  std::size_t mask_count() const {
    std::size_t n = 0;
    for (auto m : loss_mask) n += m;
    return n;
  }
};

namespace seq_detail {

struct Builder {
  const LanguageModel& lm;
  std::vector<Mat> blocks;
  MixedSequence seq;
  Eigen::Index rows = 0;

  void text(const TokenSequence& t, Segment seg, bool masked) {
    if (t.empty()) return;
    blocks.push_back(lm.embed_tokens(t.ids));
    for (int id : t.ids) {
      seq.segments.push_back(seg);
      seq.loss_mask.push_back(masked ? 1 : 0);
      seq.token_ids.push_back(id);
    }
    rows += static_cast<Eigen::Index>(t.size());
  }

  void music(const MusicEmbedding& m) {
    require_shape(m.values.cols() == lm.dim(), "music embedding width " + std::to_string(m.values.cols()) +
                                                   " != lm.dim " + std::to_string(lm.dim()));
    if (m.frames() == 0) throw DataError("empty music embedding");
    seq.music_begin = rows;
    blocks.push_back(m.values);
    for (Eigen::Index i = 0; i < m.frames(); ++i) {
      seq.segments.push_back(Segment::music);
      seq.loss_mask.push_back(0);
      seq.token_ids.push_back(lm.pad_id());
    }
    rows += m.frames();
    seq.music_end = rows;
  }

  MixedSequence finish() {
    seq.embeddings.resize(rows, lm.dim());
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
      seq.embeddings.middleRows(at, b.rows()) = b;
      at += b.rows();
    }
    return std::move(seq);
  }
};

}  // namespace seq_detail

/// [pre_music | music | post_music | caption], loss on caption positions.
inline MixedSequence build_pretrain(const MusicEmbedding& music, const TokenSequence& caption,
                                    const PromptTemplate& tmpl, const LanguageModel& lm) {
  if (caption.empty()) throw DataError("empty caption");
  seq_detail::Builder b{lm, {}, {}};
  b.text(lm.tokenize(tmpl.pre_music), Segment::preamble, false);
  b.music(music);
  b.text(lm.tokenize(tmpl.post_music), Segment::prompt, false);
  b.text(caption, Segment::answer, true);
  return b.finish();
}

/// [pre_music | music | post_music | question | answer_prefix | answer],
/// loss on answer positions only; the prefix is conditioning context.
inline MixedSequence build_instruct(const MusicEmbedding& music, const TokenSequence& question,
                                    const TokenSequence& answer, const PromptTemplate& tmpl,
                                    const LanguageModel& lm) {
  if (question.empty()) throw DataError("empty question");
  if (answer.empty()) throw DataError("empty answer");
  seq_detail::Builder b{lm, {}, {}};
  b.text(lm.tokenize(tmpl.pre_music), Segment::preamble, false);
  b.music(music);
  b.text(lm.tokenize(tmpl.post_music), Segment::prompt, false);
  b.text(question, Segment::prompt, false);
  b.text(lm.tokenize(tmpl.answer_prefix), Segment::prompt, false);
  b.text(answer, Segment::answer, true);
  return b.finish();
}

/// Inference prefix for captioning-style generation.
inline MixedSequence build_pretrain_prompt(const MusicEmbedding& music, const PromptTemplate& tmpl,
                                           const LanguageModel& lm) {
  seq_detail::Builder b{lm, {}, {}};
  b.text(lm.tokenize(tmpl.pre_music), Segment::preamble, false);
  b.music(music);
  b.text(lm.tokenize(tmpl.post_music), Segment::prompt, false);
  return b.finish();
}

/// Inference prefix for question answering; generation continues after the
/// answer prefix.
inline MixedSequence build_instruct_prompt(const MusicEmbedding& music, const TokenSequence& question,
                                           const PromptTemplate& tmpl, const LanguageModel& lm) {
  if (question.empty()) throw DataError("empty question");
  seq_detail::Builder b{lm, {}, {}};
  b.text(lm.tokenize(tmpl.pre_music), Segment::preamble, false);
  b.music(music);
  b.text(lm.tokenize(tmpl.post_music), Segment::prompt, false);
  b.text(question, Segment::prompt, false);
  b.text(lm.tokenize(tmpl.answer_prefix), Segment::prompt, false);
  return b.finish();
}

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
  double sum = 0.0;        // summed cross-entropy over counted positions
  std::size_t count = 0;   // number of counted target positions
  Mat grad_logits;         // d(sum)/d(logits)

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

/// Summed next-token cross-entropy over masked targets, with its gradient.
inline LossResult masked_lm_loss_sum(const Mat& logits, std::span<const int> target_ids,
                                     std::span<const std::uint8_t> mask, bool with_grad = true) {
  const auto seq = static_cast<std::size_t>(logits.rows());
  require_shape(target_ids.size() == seq && mask.size() == seq, "logits, targets and mask must share length");
  LossResult r;
  if (with_grad) r.grad_logits = Mat::Zero(logits.rows(), logits.cols());
  for (std::size_t i = 0; i + 1 < seq; ++i) {
    if (!mask[i + 1]) continue;
    const int target = target_ids[i + 1];
    if (target < 0 || target >= logits.cols()) throw DataError("target id out of range");
    const auto row = logits.row(static_cast<Eigen::Index>(i));
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    r.sum += lse - row(target);
    ++r.count;
    if (with_grad) {
      auto g = r.grad_logits.row(static_cast<Eigen::Index>(i));
      g = (row.array() - lse).exp();
      g(target) -= 1.0;
    }
  }
  return r;
}

/// Mean masked cross-entropy. Throws when no target position is masked.
inline double masked_lm_loss(const Mat& logits, std::span<const int> target_ids, std::span<const std::uint8_t> mask) {
  const LossResult r = masked_lm_loss_sum(logits, target_ids, mask, /*with_grad=*/false);
  if (r.count == 0) throw DataError("loss mask selects no target positions");
  return r.mean();
}

// ---------------------------------------------------------------------------
// Batching

/// Right-pads sequences to a common length. Pad rows use the pad token
/// embedding, carry Segment::pad and are never masked; because attention is
/// causal they cannot influence earlier positions.
inline std::vector<MixedSequence> collate(std::vector<MixedSequence> batch, const LanguageModel& lm) {
  Eigen::Index longest = 0;
  for (const auto& s : batch) longest = std::max(longest, s.size());
  const int pad = lm.pad_id();
  const RowVec pad_row = lm.embed_tokens(std::span<const int>(&pad, 1)).row(0);
  for (auto& s : batch) {
    const Eigen::Index extra = longest - s.size();
    if (extra == 0) continue;
    Mat grown(longest, s.embeddings.cols());
    grown.topRows(s.size()) = s.embeddings;
    for (Eigen::Index r = s.size(); r < longest; ++r) grown.row(r) = pad_row;
    s.embeddings = std::move(grown);
    s.segments.insert(s.segments.end(), static_cast<std::size_t>(extra), Segment::pad);
    s.loss_mask.insert(s.loss_mask.end(), static_cast<std::size_t>(extra), 0);
    s.token_ids.insert(s.token_ids.end(), static_cast<std::size_t>(extra), pad);
  }
  return batch;
}

}  // namespace musilingo
