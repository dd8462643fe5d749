// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint of the trainable state.
//
// Adapter checkpoint (little-endian):
//   "MLCK" | u32 version | u64 config digest | i64 step | u32 compression |
//   u32 in_dim | u32 out_dim | u32 n_layer_logits | u8 has_bias |
//   f64 weight[in_dim*out_dim] (row-major) | f64 bias[out_dim] | f64 logits[n]
//
// Resume state, written next to it as "<checkpoint>.state":
//   "MLTS" | u32 version | u8 stage | i64 stage_step | i64 stage_total |
//   u64 seed | u8 has_ema | f64 loss_ema | i64 adam_updates |
//   first moments (weight, bias, logits) | second moments (same order)

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/common.hpp"
#include "musilingo/optim.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace musilingo {

enum class Stage : std::uint8_t { pretrain = 0, finetune = 1 };

inline std::string to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "finetune"; }

struct TrainState {
  AdapterState adapter;
  LayerWeights layer_weights;
  AdamMoments moments;
  std::int64_t step = 0;        // global optimizer steps, monotone across stages
  std::int64_t stage_step = 0;  // steps taken in the current stage
  std::int64_t stage_total = 0;
  Stage stage = Stage::pretrain;
  std::uint64_t seed = 0;
  bool has_ema = false;
  double loss_ema = 0.0;

  std::uint64_t trainable_digest() const { return digest(adapter, layer_weights); }
  std::size_t trainable_parameter_count() const {
    return static_cast<std::size_t>(adapter.weight.size() + adapter.bias.size() + layer_weights.logits.size());
  }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kResumeStateVersion = 1;

/// Raised when a checkpoint was produced under a different architecture.
class CheckpointMismatch : public DataError {
 public:
  using DataError::DataError;
};

namespace ckpt_detail {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw RuntimeError("cannot write checkpoint " + path.string());
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  template <typename Derived>
  void values(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void close() {
    out_.close();
    if (!out_) throw RuntimeError("failed writing checkpoint " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open checkpoint " + path.string());
  }
  void raw(char* p, std::size_t n) {
    if (!in_.read(p, static_cast<std::streamsize>(n))) throw DataError("truncated checkpoint " + path_.string());
  }
  std::uint8_t u8() {
    char c;
    raw(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    raw(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    raw(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  template <typename Derived>
  void values(Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

inline void write_grads(Writer& w, const AdapterGrads& g) {
  w.values(g.weight);
  w.values(g.bias);
  w.values(g.layer_logits);
}

inline void read_grads(Reader& r, AdapterGrads& g) {
  r.values(g.weight);
  r.values(g.bias);
  r.values(g.layer_logits);
}

}  // namespace ckpt_detail

inline std::filesystem::path resume_state_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".state";
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainState& s, std::uint64_t config_digest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    ckpt_detail::Writer w(path);
    w.raw("MLCK", 4);
    w.u32(kCheckpointVersion);
    w.u64(config_digest);
    w.i64(s.step);
    w.u32(static_cast<std::uint32_t>(s.adapter.compression));
    w.u32(static_cast<std::uint32_t>(s.adapter.in_dim()));
    w.u32(static_cast<std::uint32_t>(s.adapter.out_dim()));
    w.u32(static_cast<std::uint32_t>(s.layer_weights.size()));
    w.u8(s.adapter.use_bias ? 1 : 0);
    w.values(s.adapter.weight);
    w.values(s.adapter.bias);
    w.values(s.layer_weights.logits);
    w.close();
  }
  ckpt_detail::Writer w(resume_state_path(path));
  w.raw("MLTS", 4);
  w.u32(kResumeStateVersion);
  w.u8(static_cast<std::uint8_t>(s.stage));
  w.i64(s.stage_step);
  w.i64(s.stage_total);
  w.u64(s.seed);
  w.u8(s.has_ema ? 1 : 0);
  w.f64(s.loss_ema);
  w.i64(s.moments.updates);
  ckpt_detail::write_grads(w, s.moments.first);
  ckpt_detail::write_grads(w, s.moments.second);
  w.close();
}

/// Loads a checkpoint. A digest mismatch raises CheckpointMismatch unless
/// `force` is set. Without a resume-state file the optimizer state starts
/// from zero.
inline TrainState load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_digest,
                                  bool force = false) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  ckpt_detail::Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "MLCK", 4) != 0) throw DataError("not a checkpoint file: " + path.string());
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  const auto digest_in_file = r.u64();
  if (digest_in_file != expected_digest && !force)
    throw CheckpointMismatch("checkpoint " + path.string() + " was written for config digest " +
                             Digest::to_hex(digest_in_file) + " but the current config has " +
                             Digest::to_hex(expected_digest) + " (use --force to load anyway)");
  TrainState s;
  s.step = r.i64();
  s.adapter.compression = static_cast<int>(r.u32());
  const auto in_dim = r.u32(), out_dim = r.u32(), n_logits = r.u32();
  s.adapter.use_bias = r.u8() != 0;
  s.adapter.weight.resize(in_dim, out_dim);
  s.adapter.bias.resize(out_dim);
  s.layer_weights.logits.resize(n_logits);
  r.values(s.adapter.weight);
  r.values(s.adapter.bias);
  r.values(s.layer_weights.logits);
  r.expect_end();
  s.adapter.validate();
  s.moments = AdamMoments::zeros_like(s.adapter, s.layer_weights);

  const auto side = resume_state_path(path);
  if (std::filesystem::exists(side)) {
    ckpt_detail::Reader sr(side);
    sr.raw(magic, 4);
    if (std::memcmp(magic, "MLTS", 4) != 0) throw DataError("not a resume-state file: " + side.string());
    if (sr.u32() != kResumeStateVersion) throw DataError("unsupported resume-state version in " + side.string());
    s.stage = static_cast<Stage>(sr.u8());
    s.stage_step = sr.i64();
    s.stage_total = sr.i64();
    s.seed = sr.u64();
    s.has_ema = sr.u8() != 0;
    s.loss_ema = sr.f64();
    s.moments.updates = sr.i64();
    ckpt_detail::read_grads(sr, s.moments.first);
    ckpt_detail::read_grads(sr, s.moments.second);
    sr.expect_end();
  }
  return s;
}

}  // namespace musilingo
