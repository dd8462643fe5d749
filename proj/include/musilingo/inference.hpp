// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/encoder.hpp"
#include "musilingo/language_model.hpp"
#include "musilingo/sequence.hpp"

#include <string_view>

namespace musilingo {

/// Captioning posed as a question to an instruction-tuned model.
inline constexpr std::string_view kCaptionQuestion = "Please give a caption to the music";

/// Decodes a response for one clip. An empty question uses the caption
/// pre-training layout; otherwise the instruction layout, continuing after
/// the answer prefix.
inline Generation describe(const LayeredFeatures& features, const AdapterState& adapter, const LayerWeights& lw,
                           const LanguageModel& lm, const PromptTemplate& tmpl, std::string_view question,
                           const DecodeOptions& decode, int max_new) {
  const MusicEmbedding music = adapt(features, lw, adapter);
  const MixedSequence prefix = question.empty()
                                   ? build_pretrain_prompt(music, tmpl, lm)
                                   : build_instruct_prompt(music, lm.tokenize(question), tmpl, lm);
  return generate_from_prefix(prefix.embeddings, lm, decode, max_new);
}

}  // namespace musilingo
