// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. A config file is a flat JSON object whose keys are the
// dotted names listed in RunConfig::keys(); command-line overrides use the
// same names.

#pragma once

#include "musilingo/common.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace musilingo {

struct EncoderConfig {
  std::string backend = "toy";  // toy | pretrained
  int layers = 2;               // transformer blocks L
  int dim = 32;                 // D_m
  int frames = 16;              // T for raw waveforms
  int input_dim = 16;           // per-frame feature width fed to the toy encoder
  std::uint64_t seed = 1;
  bool include_embedding_layer = true;
  std::string weights_path;

  int state_count() const { return include_embedding_layer ? layers + 1 : layers; }
};

struct AdapterConfig {
  int compression = 4;  // t
  bool bias = true;
};

struct LmConfig {
  std::string backend = "toy";  // toy | pretrained
  int dim = 32;                 // D_t
  int layers = 2;
  int heads = 2;
  int max_len = 256;
  std::uint64_t seed = 2;
  // Toy initialisation scales. Small input embeddings and a wide
  // unembedding let attention over the music prefix dominate the output.
  double embed_std = 0.1;
  double attn_std = 0.0;  // 0 selects 1/sqrt(D_t)
  double out_gain = 1.0;
  double unembed_std = 10.0;
  std::string weights_path;
};

struct PromptConfig {
  std::string pre_music;
  std::string post_music;
  std::string answer_prefix = "###Assistant:";
};

struct TrainerConfig {
  int batch_size = 8;
  std::int64_t steps = 0;  // 0: derive from epochs
  int epochs = 2;
  double lr = 1e-4;
  double warmup_frac = 0.02;
  double weight_decay = 0.05;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: only at the end
  std::int64_t log_every = 1;
};

struct DataConfig {
  std::string clips;
  std::string captions;
  std::string qa;
  std::string musicqa;
  std::string caption_field = "caption_writing";
  std::string split = "train";
};

struct RunConfig {
  EncoderConfig encoder;
  AdapterConfig adapter;
  LmConfig lm;
  PromptConfig prompt;
  TrainerConfig trainer;
  DataConfig data;

  struct Key {
    std::string name;
    std::function<nlohmann::json(const RunConfig&)> get;
    std::function<void(RunConfig&, const nlohmann::json&)> set;
  };

  static const std::vector<Key>& keys();

  /// Sets one key from a JSON value; throws ConfigError for unknown keys
  /// or mistyped values.
  void set(const std::string& key, const nlohmann::json& value);

  /// Sets one key from its command-line text form.
  void set_from_string(const std::string& key, const std::string& text);

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void validate() const;

  /// Fingerprint of everything a checkpoint's parameters depend on:
  /// backend architecture, seeds of the frozen backends and adapter shape.
  std::uint64_t architecture_digest() const;
};

namespace config_detail {

template <typename T>
T as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

// Builds a Key from a pointer-to-section and pointer-to-member.
template <typename Section, typename T>
RunConfig::Key make_key(std::string name, Section RunConfig::*section, T Section::*member) {
  auto key_name = name;
  return RunConfig::Key{
      std::move(name),
      [section, member](const RunConfig& c) { return nlohmann::json((c.*section).*member); },
      [section, member, key_name](RunConfig& c, const nlohmann::json& v) {
        (c.*section).*member = as<T>(v, key_name);
      }};
}

}  // namespace config_detail

inline const std::vector<RunConfig::Key>& RunConfig::keys() {
  using config_detail::make_key;
  using C = RunConfig;
  static const std::vector<Key> table = {
      make_key("encoder.backend", &C::encoder, &EncoderConfig::backend),
      make_key("encoder.layers", &C::encoder, &EncoderConfig::layers),
      make_key("encoder.dim", &C::encoder, &EncoderConfig::dim),
      make_key("encoder.frames", &C::encoder, &EncoderConfig::frames),
      make_key("encoder.input_dim", &C::encoder, &EncoderConfig::input_dim),
      make_key("encoder.seed", &C::encoder, &EncoderConfig::seed),
      make_key("encoder.include_embedding_layer", &C::encoder, &EncoderConfig::include_embedding_layer),
      make_key("encoder.weights_path", &C::encoder, &EncoderConfig::weights_path),
      make_key("adapter.compression", &C::adapter, &AdapterConfig::compression),
      make_key("adapter.bias", &C::adapter, &AdapterConfig::bias),
      make_key("lm.backend", &C::lm, &LmConfig::backend),
      make_key("lm.dim", &C::lm, &LmConfig::dim),
      make_key("lm.layers", &C::lm, &LmConfig::layers),
      make_key("lm.heads", &C::lm, &LmConfig::heads),
      make_key("lm.max_len", &C::lm, &LmConfig::max_len),
      make_key("lm.seed", &C::lm, &LmConfig::seed),
      make_key("lm.embed_std", &C::lm, &LmConfig::embed_std),
      make_key("lm.attn_std", &C::lm, &LmConfig::attn_std),
      make_key("lm.out_gain", &C::lm, &LmConfig::out_gain),
      make_key("lm.unembed_std", &C::lm, &LmConfig::unembed_std),
      make_key("lm.weights_path", &C::lm, &LmConfig::weights_path),
      make_key("prompt.pre_music", &C::prompt, &PromptConfig::pre_music),
      make_key("prompt.post_music", &C::prompt, &PromptConfig::post_music),
      make_key("prompt.answer_prefix", &C::prompt, &PromptConfig::answer_prefix),
      make_key("trainer.batch_size", &C::trainer, &TrainerConfig::batch_size),
      make_key("trainer.steps", &C::trainer, &TrainerConfig::steps),
      make_key("trainer.epochs", &C::trainer, &TrainerConfig::epochs),
      make_key("trainer.lr", &C::trainer, &TrainerConfig::lr),
      make_key("trainer.warmup_frac", &C::trainer, &TrainerConfig::warmup_frac),
      make_key("trainer.weight_decay", &C::trainer, &TrainerConfig::weight_decay),
      make_key("trainer.clip_norm", &C::trainer, &TrainerConfig::clip_norm),
      make_key("trainer.beta1", &C::trainer, &TrainerConfig::beta1),
      make_key("trainer.beta2", &C::trainer, &TrainerConfig::beta2),
      make_key("trainer.eps", &C::trainer, &TrainerConfig::eps),
      make_key("trainer.seed", &C::trainer, &TrainerConfig::seed),
      make_key("trainer.checkpoint_every", &C::trainer, &TrainerConfig::checkpoint_every),
      make_key("trainer.log_every", &C::trainer, &TrainerConfig::log_every),
      make_key("data.clips", &C::data, &DataConfig::clips),
      make_key("data.captions", &C::data, &DataConfig::captions),
      make_key("data.qa", &C::data, &DataConfig::qa),
      make_key("data.musicqa", &C::data, &DataConfig::musicqa),
      make_key("data.caption_field", &C::data, &DataConfig::caption_field),
      make_key("data.split", &C::data, &DataConfig::split),
  };
  return table;
}

inline void RunConfig::set(const std::string& key, const nlohmann::json& value) {
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void RunConfig::set_from_string(const std::string& key, const std::string& text) {
  for (const auto& k : keys()) {
    if (k.name != key) continue;
    const nlohmann::json current = k.get(*this);
    if (current.is_string()) {
      k.set(*this, nlohmann::json(text));
      return;
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("cannot parse value '" + text + "' for config key '" + key + "'");
    }
    k.set(*this, parsed);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : keys()) j[k.name] = k.get(*this);
  return j;
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) c.set(key, value);
  return c;
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = from_json(j);
  // Relative data paths are relative to the config file, not the working directory.
  const auto base = path.parent_path();
  for (std::string* p : {&c.data.clips, &c.data.captions, &c.data.qa, &c.data.musicqa}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return c;
}

inline void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

inline void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(encoder.backend == "toy" || encoder.backend == "pretrained",
       "encoder.backend must be toy or pretrained");
  need(lm.backend == "toy" || lm.backend == "pretrained", "lm.backend must be toy or pretrained");
  need(encoder.layers >= 1 && encoder.dim >= 1 && encoder.frames >= 1 && encoder.input_dim >= 1,
       "encoder dimensions must be >= 1");
  if (encoder.backend == "toy") {
    need(encoder.layers >= 2 && encoder.layers <= 4, "toy encoder.layers must be in [2, 4]");
    need(encoder.dim >= 16 && encoder.dim <= 64, "toy encoder.dim must be in [16, 64]");
  }
  need(adapter.compression >= 1, "adapter.compression must be >= 1");
  need(lm.dim >= 1 && lm.layers >= 1 && lm.heads >= 1, "lm dimensions must be >= 1");
  need(lm.dim % lm.heads == 0, "lm.dim must be divisible by lm.heads");
  need(lm.max_len >= 2, "lm.max_len must be >= 2");
  need(trainer.batch_size >= 1, "trainer.batch_size must be >= 1");
  need(trainer.steps >= 0, "trainer.steps must be >= 0");
  need(trainer.epochs >= 1 || trainer.steps > 0, "trainer.epochs must be >= 1 when steps = 0");
  need(trainer.lr >= 0.0, "trainer.lr must be >= 0");
  need(trainer.warmup_frac >= 0.0 && trainer.warmup_frac < 1.0, "trainer.warmup_frac must be in [0, 1)");
  need(trainer.clip_norm >= 0.0, "trainer.clip_norm must be >= 0");
  need(trainer.log_every >= 1, "trainer.log_every must be >= 1");
  need(data.split == "train" || data.split == "test", "data.split must be train or test");
}

inline std::uint64_t RunConfig::architecture_digest() const {
  Digest d;
  d.str("encoder").str(encoder.backend).u64(encoder.layers).u64(encoder.dim).u64(encoder.input_dim);
  d.u64(encoder.seed).u64(encoder.include_embedding_layer ? 1 : 0).str(encoder.weights_path);
  d.str("adapter").u64(adapter.compression).u64(adapter.bias ? 1 : 0);
  d.str("lm").str(lm.backend).u64(lm.dim).u64(lm.layers).u64(lm.heads).u64(lm.max_len).u64(lm.seed);
  d.f64(lm.embed_std).f64(lm.attn_std).f64(lm.out_gain).f64(lm.unembed_std).str(lm.weights_path);
  return d.value();
}

}  // namespace musilingo
