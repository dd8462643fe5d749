// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chat prompts for instruction-pair generation and verification. The
// system texts are reproduced character for character, including their
// original wording quirks, so regenerated data stays comparable.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/data.hpp"

#include <string>
#include <string_view>

namespace musilingo::datagen {

struct ChatPrompt {
  std::string system;
  std::string user;

  bool operator==(const ChatPrompt&) const = default;
};

inline constexpr std::string_view kDelimiter = "####";

inline constexpr std::string_view kSystemV1 =
    "You will be provided with a piece of caption that describes a music. The cation will be delimited with #### "
    "characters.\n"
    "\n"
    "Your task is to generate five question-answer pairs related to the music caption. The question should ask to "
    "describe the music content in detail. The answer should be the answer to the question and contain details of "
    "the provided music caption.\n"
    "\n"
    "The question can include but not limited to any of the following information when the caption include them: "
    "music tempo, mood of the music, instruments used, singer, genre, music tags, or any inference, etc.\n"
    "\n"
    "IMPORTANT: Output a JSON object with the following four keys: 'Question 1', 'Answer 1', 'Question 2', "
    "'Answer 2', 'Question 3', 'Answer 3', 'Question 4', 'Answer 4', 'Question 5', 'Answer 5'";

inline constexpr std::string_view kSystemV2 =
    "You will be provided with a piece of caption that describes a music. The cation will be delimited with #### "
    "characters.\n"
    "\n"
    "Your task is to generate a conversational question-answer pair related to describing the music in detail. The "
    "question should ask to describe the music content in general. The answer should be a paraphrased and "
    "well-structured paragraph based on the provided description, with a minimum of 100 words and a maximum of 200 "
    "words. The answer must be a paraphrased version of the provided information, very detailed and descriptive, and "
    "within the specified word count.\n"
    "\n"
    "##SAMPLE QUESTIONS:\n"
    "- Can you provide a summary of the music?\n"
    "- What are the main features of the music?\n"
    "- Could you briefly describe the music content?\n"
    "\n"
    "IMPORTANT: Output a JSON object with only two keys: \"Q\" for question and \"A\" for answer.";

inline constexpr std::string_view kVerificationQuestion =
    "Does this question-answer pair come from the context delimited with ####?";

/// Pairs requested per caption.
inline int pairs_per_caption(QAVersion v) { return v == QAVersion::short_form ? 5 : 1; }

inline std::string delimit(std::string_view caption) {
  std::string out(kDelimiter);
  out += caption;
  out += kDelimiter;
  return out;
}

inline ChatPrompt render_prompt(std::string_view caption, QAVersion version) {
  if (is_blank(caption)) throw DataError("cannot render a prompt for an empty caption");
  return {std::string(version == QAVersion::short_form ? kSystemV1 : kSystemV2), delimit(caption)};
}

inline ChatPrompt render_prompt_v1(std::string_view caption) { return render_prompt(caption, QAVersion::short_form); }
inline ChatPrompt render_prompt_v2(std::string_view caption) { return render_prompt(caption, QAVersion::long_form); }

/// Stable identifier of the system text a pair was generated from.
inline std::string prompt_hash(QAVersion version) {
  return Digest{}.str(version == QAVersion::short_form ? kSystemV1 : kSystemV2).hex();
}

inline ChatPrompt render_verification_prompt(std::string_view caption, const QAPair& pair) {
  std::string system(kVerificationQuestion);
  system += " Answer yes or no.";
  std::string user = delimit(caption);
  user += "\n\nQuestion: " + pair.question + "\nAnswer: " + pair.answer;
  return {std::move(system), std::move(user)};
}

}  // namespace musilingo::datagen
