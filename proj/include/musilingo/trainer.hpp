// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage adapter training: caption pre-training followed by instruction
// tuning. Only the adapter and the layer-mixing logits receive updates;
// the encoder and language model are taken by const reference throughout.

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/checkpoint.hpp"
#include "musilingo/config.hpp"
#include "musilingo/data.hpp"
#include "musilingo/encoder.hpp"
#include "musilingo/language_model.hpp"
#include "musilingo/optim.hpp"
#include "musilingo/sequence.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <unordered_map>
#include <vector>

namespace musilingo {

/// Non-finite loss or gradient during training.
class TrainingError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

/// Encodes each clip once. Encoders are deterministic and frozen, so the
/// cached states are exactly what a fresh encode would return.
class FeatureStore {
 public:
  FeatureStore(const EncoderBackend& encoder, const std::vector<MusicClip>& clips) : encoder_(encoder) {
    for (const auto& c : clips) clips_.emplace(c.id, &c);
  }

  const LayeredFeatures& get(const std::string& clip_id) {
    if (auto it = cache_.find(clip_id); it != cache_.end()) return it->second;
    auto c = clips_.find(clip_id);
    if (c == clips_.end()) throw DataError("unknown clip id '" + clip_id + "'");
    LayeredFeatures f = encoder_.encode(*c->second);
    f.validate();
    return cache_.emplace(clip_id, std::move(f)).first->second;
  }

  const MusicClip& clip(const std::string& clip_id) const {
    auto c = clips_.find(clip_id);
    if (c == clips_.end()) throw DataError("unknown clip id '" + clip_id + "'");
    return *c->second;
  }

 private:
  const EncoderBackend& encoder_;
  std::unordered_map<std::string, const MusicClip*> clips_;
  std::unordered_map<std::string, LayeredFeatures> cache_;
};

/// One training sequence before assembly. An empty question selects the
/// caption layout; otherwise the instruction layout is used.
struct TrainingExample {
  const LayeredFeatures* features = nullptr;
  TokenSequence question;
  TokenSequence target;  // ends with the end-of-sequence token
};

inline TrainState init_train_state(const RunConfig& cfg, std::size_t encoder_states, int encoder_dim) {
  TrainState s;
  s.adapter = init_adapter(encoder_dim, cfg.lm.dim, cfg.adapter.compression, cfg.adapter.bias, cfg.trainer.seed);
  s.layer_weights = LayerWeights::uniform(encoder_states);
  s.moments = AdamMoments::zeros_like(s.adapter, s.layer_weights);
  s.seed = cfg.trainer.seed;
  return s;
}

/// Starts a new stage from an existing state: keeps parameters and the
/// global step, resets optimizer moments and the per-stage counters.
inline TrainState begin_stage(TrainState s, Stage stage, std::uint64_t seed) {
  s.stage = stage;
  s.stage_step = 0;
  s.stage_total = 0;
  s.seed = seed;
  s.has_ema = false;
  s.loss_ema = 0.0;
  s.moments = AdamMoments::zeros_like(s.adapter, s.layer_weights);
  return s;
}

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t target_tokens = 0;
};

/// Loss and parameter gradients for a batch, without updating anything.
inline std::pair<StepResult, AdapterGrads> batch_gradients(std::span<const TrainingExample> batch,
                                                           const TrainState& state, const LanguageModel& lm,
                                                           const PromptTemplate& tmpl) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<AdaptCache> caches(batch.size());
  std::vector<MixedSequence> seqs;
  seqs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const MusicEmbedding music = adapt(*ex.features, state.layer_weights, state.adapter, &caches[i]);
    seqs.push_back(ex.question.empty() ? build_pretrain(music, ex.target, tmpl, lm)
                                       : build_instruct(music, ex.question, ex.target, tmpl, lm));
  }
  seqs = collate(std::move(seqs), lm);

  std::vector<std::unique_ptr<LmTape>> tapes;
  std::vector<LossResult> losses;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : seqs) {
    tapes.push_back(lm.forward_with_tape(s.embeddings));
    losses.push_back(masked_lm_loss_sum(tapes.back()->logits(), s.token_ids, s.loss_mask));
    total += losses.back().sum;
    count += losses.back().count;
  }
  if (count == 0) throw DataError("batch has no target tokens");
  StepResult res;
  res.loss = total / static_cast<double>(count);
  res.target_tokens = count;
  if (!std::isfinite(res.loss)) throw TrainingError("non-finite loss " + std::to_string(res.loss) + " at step " +
                                                    std::to_string(state.step));

  AdapterGrads grads = AdapterGrads::zeros_like(state.adapter, state.layer_weights);
  const double scale = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const Mat grad_in = tapes[i]->backward(losses[i].grad_logits * scale);
    const Mat grad_music = grad_in.middleRows(seqs[i].music_begin, seqs[i].music_end - seqs[i].music_begin);
    grads += adapt_backward(*batch[i].features, state.layer_weights, state.adapter, caches[i], grad_music);
  }
  res.grad_norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(res.grad_norm))
    throw TrainingError("non-finite gradient at step " + std::to_string(state.step) + " (loss " +
                        std::to_string(res.loss) + ")");
  return {res, std::move(grads)};
}

/// Forward, backward, clip and one AdamW update at learning rate `lr`.
inline StepResult train_step(std::span<const TrainingExample> batch, TrainState& state, const LanguageModel& lm,
                             const PromptTemplate& tmpl, const TrainerConfig& cfg, double lr) {
  auto [res, grads] = batch_gradients(batch, state, lm, tmpl);
  clip_global_norm(grads, cfg.clip_norm);
  adamw_update(state.adapter, state.layer_weights, state.moments, grads, lr, cfg);
  state.step += 1;
  state.stage_step += 1;
  state.loss_ema = state.has_ema ? 0.99 * state.loss_ema + 0.01 * res.loss : res.loss;
  state.has_ema = true;
  return res;
}

// ---------------------------------------------------------------------------
// Stage driver

struct LogRecord {
  std::int64_t step = 0;
  Stage stage = Stage::pretrain;
  double loss = 0.0;
  double loss_ema = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;

  Json to_json() const {
    Json j;
    j["step"] = step;
    j["stage"] = to_string(stage);
    j["loss"] = loss;
    j["loss_ema"] = loss_ema;
    j["lr"] = lr;
    j["wall_ms"] = wall_ms;
    return j;
  }
};

struct TrainHooks {
  std::function<void(const LogRecord&)> on_log;
  /// Called every trainer.checkpoint_every steps and once at the end.
  std::function<void(const TrainState&)> on_checkpoint;
  /// Stop after this many steps of the stage (simulated interruption); < 0 runs to completion.
  std::int64_t stop_at_stage_step = -1;
};

inline std::int64_t steps_per_epoch(std::size_t examples, int batch_size) {
  return static_cast<std::int64_t>((examples + static_cast<std::size_t>(batch_size) - 1) /
                                   static_cast<std::size_t>(batch_size));
}

inline std::int64_t stage_total_steps(std::size_t examples, const TrainerConfig& cfg) {
  if (cfg.steps > 0) return cfg.steps;
  return steps_per_epoch(examples, cfg.batch_size) * cfg.epochs;
}

/// Example order for one epoch, a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "epoch-" + std::to_string(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

inline std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::uint64_t seed,
                                              std::int64_t stage_step) {
  const std::int64_t spe = steps_per_epoch(n, batch_size);
  const std::int64_t epoch = stage_step / spe;
  const auto slot = static_cast<std::size_t>(stage_step % spe);
  const auto order = epoch_order(n, seed, epoch);
  const std::size_t begin = slot * static_cast<std::size_t>(batch_size);
  const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

/// Runs (or resumes) the current stage of `state` to completion.
inline TrainState run_stage(const std::vector<TrainingExample>& examples, TrainState state, const LanguageModel& lm,
                            const PromptTemplate& tmpl, const TrainerConfig& cfg, const TrainHooks& hooks = {}) {
  if (examples.empty()) throw DataError("empty dataset");
  const std::int64_t total = stage_total_steps(examples.size(), cfg);
  state.stage_total = total;
  std::vector<TrainingExample> batch;
  while (state.stage_step < total) {
    if (hooks.stop_at_stage_step >= 0 && state.stage_step >= hooks.stop_at_stage_step) break;
    const auto started = std::chrono::steady_clock::now();
    batch.clear();
    for (auto i : batch_indices(examples.size(), cfg.batch_size, state.seed, state.stage_step))
      batch.push_back(examples[i]);
    const double lr = scheduled_lr(cfg, state.stage_step, total);
    const StepResult r = train_step(batch, state, lm, tmpl, cfg, lr);
    if (hooks.on_log && (state.stage_step % cfg.log_every == 0 || state.stage_step == total)) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      hooks.on_log({state.step, state.stage, r.loss, state.loss_ema, lr, ms});
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.stage_step % cfg.checkpoint_every == 0 &&
        state.stage_step != total)
      hooks.on_checkpoint(state);
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  return state;
}

// ---------------------------------------------------------------------------
// Stage entry points

inline TokenSequence with_eos(TokenSequence t, const LanguageModel& lm) {
  t.ids.push_back(lm.eos_id());
  return t;
}

inline std::vector<TrainingExample> caption_examples(const std::vector<CaptionRecord>& captions,
                                                     FeatureStore& features, const LanguageModel& lm) {
  std::vector<TrainingExample> out;
  out.reserve(captions.size());
  for (const auto& c : captions)
    out.push_back({&features.get(c.clip_id), {}, with_eos(lm.tokenize(c.caption), lm)});
  return out;
}

/// Per-version counts of the Q&A records handed to the trainer.
struct ReadStats {
  std::size_t short_records = 0;
  std::size_t long_records = 0;
};

inline std::vector<TrainingExample> qa_examples(const std::vector<QAPair>& pairs, FeatureStore& features,
                                                const LanguageModel& lm, ReadStats* stats = nullptr) {
  std::vector<TrainingExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (stats) (p.version == QAVersion::short_form ? stats->short_records : stats->long_records) += 1;
    out.push_back({&features.get(p.clip_id), lm.tokenize(p.question), with_eos(lm.tokenize(p.answer), lm)});
  }
  return out;
}

/// Caption pre-training on the configured caption field. `state` is either
/// a fresh state or a resumed pre-training state.
inline TrainState pretrain(const std::vector<CaptionRecord>& captions, FeatureStore& features,
                           const LanguageModel& lm, const RunConfig& cfg, TrainState state,
                           const TrainHooks& hooks = {}) {
  const auto selected = select_field(captions, cfg.data.caption_field);
  if (selected.empty()) throw DataError("no captions with field_name '" + cfg.data.caption_field + "'");
  if (state.stage != Stage::pretrain) throw ConfigError("pretrain needs a pre-training state");
  const auto examples = caption_examples(selected, features, lm);
  return run_stage(examples, std::move(state), lm, PromptTemplate::from_config(cfg.prompt), cfg.trainer, hooks);
}

/// Instruction tuning on the train split of `pairs` (already partitioned by
/// the caller). Pass `resume = true` to continue an interrupted fine-tuning
/// stage instead of starting a new one from `init`.
inline TrainState finetune(const std::vector<QAPair>& pairs, FeatureStore& features, const LanguageModel& lm,
                           const RunConfig& cfg, TrainState init, bool resume = false,
                           const TrainHooks& hooks = {}, ReadStats* stats = nullptr) {
  const auto train = select_split(pairs, parse_split(cfg.data.split));
  if (train.empty()) throw DataError("no Q&A records in the " + cfg.data.split + " split");
  TrainState state = resume ? std::move(init) : begin_stage(std::move(init), Stage::finetune, cfg.trainer.seed);
  if (resume && state.stage != Stage::finetune) throw ConfigError("resume needs a fine-tuning state");
  const auto examples = qa_examples(train, features, lm, stats);
  return run_stage(examples, std::move(state), lm, PromptTemplate::from_config(cfg.prompt), cfg.trainer, hooks);
}

}  // namespace musilingo
