// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small synthetic corpus for smoke runs: noisy tones with templated
// captions and Q&A pairs. Every clip gets a distinct tone so the toy
// encoder can tell them apart.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/data.hpp"

#include <cmath>
#include <iterator>
#include <string>
#include <vector>

namespace musilingo {

struct ToyCorpus {
  std::vector<MusicClip> clips;
  std::vector<CaptionRecord> captions;
  std::vector<QAPair> qa;
};

/// Clip i carries a tone at angular step 0.01 * (i + 1) with amplitude
/// varying by index, modulated by seeded Gaussian noise.
inline MusicClip make_toy_clip(std::string id, std::size_t index, std::uint64_t seed, int sample_rate = 1600,
                               double duration_s = 1.0) {
  Rng rng(derive_seed(seed, "clip:" + id));
  MusicClip c;
  c.id = std::move(id);
  c.source_ref = "synthetic";
  c.duration_s = duration_s;
  Waveform w;
  w.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double amp = 0.2 + 0.1 * static_cast<double>(index % 8);
  const double step = 0.01 * static_cast<double>(index + 1);
  w.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) w.samples[k] = rng.normal() * amp * std::sin(static_cast<double>(k) * step);
  c.content = std::move(w);
  return c;
}

/// The last round(test_fraction * n) clips form the test split.
inline ToyCorpus make_toy_corpus(std::size_t n_clips, std::uint64_t seed, double test_fraction = 0.25) {
  if (n_clips == 0) throw ConfigError("toy corpus needs at least one clip");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in [0, 1)");
  static const char* const moods[] = {"calm", "upbeat", "dark", "bright", "gentle", "tense"};
  static const char* const instruments[] = {"piano", "guitar", "violin", "drums", "synth", "flute", "cello"};
  static const char* const genres[] = {"jazz", "rock", "folk", "techno", "classical", "pop"};
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n_clips)));
  Rng rng(derive_seed(seed, "toy-corpus"));
  ToyCorpus out;
  for (std::size_t i = 0; i < n_clips; ++i) {
    const std::string id = "toy" + std::to_string(i);
    const Split split = i + n_test >= n_clips && n_test > 0 ? Split::test : Split::train;
    const std::string mood = moods[rng.index(std::size(moods))];
    const std::string inst = instruments[rng.index(std::size(instruments))];
    const std::string genre = genres[rng.index(std::size(genres))];
    out.clips.push_back(make_toy_clip(id, i, seed));
    out.captions.push_back({id, "A " + mood + " " + genre + " piece with " + inst + ".", "caption_writing",
                            to_string(split)});
    QAPair s;
    s.clip_id = id;
    s.question = "What instrument is playing?";
    s.answer = "The " + inst + " is playing.";
    s.version = QAVersion::short_form;
    s.split = split;
    s.provenance = {"template", "toy"};
    out.qa.push_back(s);
    QAPair l = s;
    l.question = "Can you provide a summary of the music?";
    l.answer = "This is a " + mood + " " + genre + " piece led by the " + inst + ".";
    l.version = QAVersion::long_form;
    out.qa.push_back(std::move(l));
  }
  return out;
}

}  // namespace musilingo
