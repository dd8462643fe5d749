// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chat-completion clients and the retry policy shared by every backend.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/datagen/prompts.hpp"
#include "json.hpp"

#include <chrono>
#include <functional>
#include <iterator>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace musilingo::datagen {

/// A failed request: timeout, transport error or bad HTTP status.
class ClientError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// `request_seed` is derived from the run seed and the request identity,
  /// so a backend that honours it is reproducible per request.
  virtual std::string complete(const ChatPrompt& prompt, std::uint64_t request_seed) = 0;
  virtual std::string model_name() const = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

/// Calls the client up to `policy.attempts` times, sleeping between
/// attempts with exponentially growing delays. Rethrows the last
/// ClientError once attempts are exhausted.
inline std::string complete_with_retries(ChatClient& client, const ChatPrompt& prompt, std::uint64_t request_seed,
                                         const RetryPolicy& policy, const Sleeper& sleep) {
  if (policy.attempts < 1) throw ConfigError("retry attempts must be >= 1");
  auto delay = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return client.complete(prompt, request_seed);
    } catch (const ClientError&) {
      if (attempt >= policy.attempts) throw;
    }
    if (sleep) sleep(delay);
    delay = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(delay.count()) * policy.multiplier));
  }
}

/// Test double driven by a responder function. The responder sees the
/// prompt and the 1-based attempt number for that exact prompt, and may
/// throw ClientError to simulate a failure. Thread-safe.
class ScriptedClient : public ChatClient {
 public:
  using Responder = std::function<std::string(const ChatPrompt&, int attempt)>;

  explicit ScriptedClient(Responder responder, std::string model = "scripted")
      : responder_(std::move(responder)), model_(std::move(model)) {}

  std::string complete(const ChatPrompt& prompt, std::uint64_t) override {
    int attempt = 0;
    {
      std::lock_guard lock(mu_);
      attempt = ++attempts_[prompt.system + '\x1f' + prompt.user];
      ++calls_;
    }
    return responder_(prompt, attempt);
  }

  std::string model_name() const override { return model_; }

  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  Responder responder_;
  std::string model_;
  mutable std::mutex mu_;
  std::map<std::string, int> attempts_;
  std::size_t calls_ = 0;
};

/// Offline generator used by the command line when no endpoint is
/// configured. Answers are built from the caption text, so pairs are
/// grounded in their caption and every verification returns "Yes".
class MockChatClient : public ChatClient {
 public:
  std::string complete(const ChatPrompt& prompt, std::uint64_t request_seed) override {
    const std::string caption = extract_caption(prompt.user);
    if (prompt.system.starts_with(kVerificationQuestion)) return "Yes.";
    if (prompt.system == kSystemV1) return short_form(caption, request_seed);
    if (prompt.system == kSystemV2) return long_form(caption, request_seed);
    throw ClientError("mock client: unrecognised prompt");
  }

  std::string model_name() const override { return "mock"; }

  static std::string extract_caption(const std::string& user) {
    const auto d = std::string(kDelimiter);
    const auto a = user.find(d);
    const auto b = a == std::string::npos ? a : user.find(d, a + d.size());
    if (b == std::string::npos) return user;
    return user.substr(a + d.size(), b - a - d.size());
  }

 private:
  static std::string first_sentence(const std::string& caption) {
    const auto end = caption.find_first_of(".!?");
    std::string s = end == std::string::npos ? caption : caption.substr(0, end + 1);
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    return s;
  }

  static std::string short_form(const std::string& caption, std::uint64_t seed) {
    static const char* const questions[] = {
        "What is the mood of the music?",          "Which instruments can be heard?",
        "How would you describe the tempo?",       "What genre does this music belong to?",
        "Is there a singer in this recording?",    "Where could this music be used?",
        "What is the overall sound of the track?", "How is the recording quality?",
    };
    constexpr std::size_t kQuestions = std::size(questions);
    Rng rng(seed);
    // Five distinct questions: partial Fisher-Yates over the bank.
    std::size_t order[kQuestions];
    for (std::size_t i = 0; i < kQuestions; ++i) order[i] = i;
    for (std::size_t i = 0; i < 5; ++i) std::swap(order[i], order[i + rng.index(kQuestions - i)]);
    nlohmann::ordered_json j;
    const std::string lead = first_sentence(caption);
    for (int i = 0; i < 5; ++i) {
      const auto n = std::to_string(i + 1);
      j["Question " + n] = questions[order[i]];
      j["Answer " + n] = i == 0 ? caption : "According to the description: " + lead;
    }
    return j.dump();
  }

  static std::string long_form(const std::string& caption, std::uint64_t seed) {
    static const char* const questions[] = {
        "Can you provide a summary of the music?",
        "What are the main features of the music?",
        "Could you briefly describe the music content?",
    };
    Rng rng(seed);
    nlohmann::ordered_json j;
    j["Q"] = questions[rng.index(std::size(questions))];
    j["A"] = "Here is a description of the piece. " + caption;
    return "```json\n" + j.dump(2) + "\n```";
  }
};

}  // namespace musilingo::datagen
