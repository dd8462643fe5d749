// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Caption -> instruction-pair generation with parsing, hygiene and
// verification filters.
//
// Bookkeeping unit is the requested pair: a v1 caption requests five, a v2
// caption one. Every requested pair ends up either kept or dropped for
// exactly one reason, so kept + sum(dropped) == generated.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/data.hpp"
#include "musilingo/datagen/client.hpp"
#include "musilingo/datagen/prompts.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace musilingo::datagen {

enum class DropReason : std::uint8_t {
  parse_error,
  bad_keys,
  empty_field,
  no_terminal_punct,
  duplicate,
  failed_verification,
  runtime_error,
};

inline constexpr DropReason kAllDropReasons[] = {
    DropReason::parse_error, DropReason::bad_keys,          DropReason::empty_field,  DropReason::no_terminal_punct,
    DropReason::duplicate,   DropReason::failed_verification, DropReason::runtime_error,
};

inline std::string to_string(DropReason r) {
  switch (r) {
    case DropReason::parse_error: return "parse_error";
    case DropReason::bad_keys: return "bad_keys";
    case DropReason::empty_field: return "empty_field";
    case DropReason::no_terminal_punct: return "no_terminal_punct";
    case DropReason::duplicate: return "duplicate";
    case DropReason::failed_verification: return "failed_verification";
    case DropReason::runtime_error: return "runtime_error";
  }
  return "unknown";
}

struct GenerationOutcome {
  std::string raw;
  std::vector<QAPair> parsed;  // non-empty iff parsing succeeded
  std::set<DropReason> drop_reasons;
};

namespace gen_detail {

// Index one past the brace matching raw[open], or npos.
inline std::size_t match_brace(std::string_view raw, std::size_t open) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

/// First JSON object embedded in `raw`, skipping prose and code fences.
inline std::optional<nlohmann::json> extract_object(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const auto close = match_brace(raw, open);
    if (close == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(raw.substr(open, close - open), nullptr, /*allow_exceptions=*/false);
    if (j.is_object()) return j;
  }
  return std::nullopt;
}

inline std::vector<std::pair<std::string, std::string>> expected_keys(QAVersion v) {
  if (v == QAVersion::long_form) return {{"Q", "A"}};
  std::vector<std::pair<std::string, std::string>> keys;
  for (int i = 1; i <= 5; ++i) keys.emplace_back("Question " + std::to_string(i), "Answer " + std::to_string(i));
  return keys;
}

}  // namespace gen_detail

/// Parses a generator reply. Failures are reported through drop_reasons,
/// never thrown. Parsed pairs carry only question, answer and version.
inline GenerationOutcome parse_response(std::string_view raw, QAVersion version) {
  GenerationOutcome out;
  out.raw = std::string(raw);
  const auto obj = gen_detail::extract_object(raw);
  if (!obj) {
    out.drop_reasons.insert(DropReason::parse_error);
    return out;
  }
  const auto keys = gen_detail::expected_keys(version);
  bool ok = obj->size() == 2 * keys.size();
  for (const auto& [q, a] : keys) {
    ok = ok && obj->contains(q) && obj->contains(a) && (*obj)[q].is_string() && (*obj)[a].is_string();
  }
  if (!ok) {
    out.drop_reasons.insert(DropReason::bad_keys);
    return out;
  }
  for (const auto& [q, a] : keys) {
    QAPair p;
    p.question = (*obj)[q].get<std::string>();
    p.answer = (*obj)[a].get<std::string>();
    p.version = version;
    out.parsed.push_back(std::move(p));
  }
  return out;
}

/// Returns the reason a parsed pair must be dropped, or nothing to keep it.
inline std::optional<DropReason> hygiene_filter(const QAPair& pair) {
  if (is_blank(pair.question) || is_blank(pair.answer)) return DropReason::empty_field;
  if (!ends_with_terminal_punctuation(pair.answer)) return DropReason::no_terminal_punct;
  return std::nullopt;
}

enum class Verdict : std::uint8_t { positive, negative };

/// Case-insensitive leading yes/no, ignoring leading whitespace, quotes and
/// markdown emphasis. Anything else is ambiguous.
inline std::optional<bool> parse_verdict(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && (std::isspace(static_cast<unsigned char>(reply[i])) ||
                              std::string_view("*\"'`([_").find(reply[i]) != std::string_view::npos))
    ++i;
  auto word_is = [&](std::string_view w) {
    if (reply.size() - i < w.size()) return false;
    for (std::size_t k = 0; k < w.size(); ++k)
      if (std::tolower(static_cast<unsigned char>(reply[i + k])) != w[k]) return false;
    const std::size_t after = i + w.size();
    return after == reply.size() || !std::isalnum(static_cast<unsigned char>(reply[after]));
  };
  if (word_is("yes")) return true;
  if (word_is("no")) return false;
  return std::nullopt;
}

/// Asks the client whether the pair is grounded in the caption. An
/// ambiguous reply counts as negative. Client failures propagate.
inline Verdict verify_pair(std::string_view caption, const QAPair& pair, ChatClient& client,
                           std::uint64_t request_seed = 0, const RetryPolicy& retry = {},
                           const Sleeper& sleep = real_sleeper()) {
  const auto reply = complete_with_retries(client, render_verification_prompt(caption, pair), request_seed, retry, sleep);
  const auto v = parse_verdict(reply);
  return v.value_or(false) ? Verdict::positive : Verdict::negative;
}

inline std::size_t word_count(std::string_view text) {
  std::istringstream ss{std::string(text)};
  std::size_t n = 0;
  for (std::string w; ss >> w;) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineOptions {
  std::uint64_t seed = 0;
  bool verify = true;
  int concurrency = 1;
  double max_requests_per_s = 0.0;  // 0 disables rate limiting
  RetryPolicy retry;
  Sleeper sleeper = real_sleeper();
};

struct RunReport {
  QAVersion version = QAVersion::short_form;
  std::string generator_model;
  std::size_t captions = 0;
  std::size_t generated = 0;
  std::size_t kept = 0;
  std::map<DropReason, std::size_t> dropped;
  std::vector<std::size_t> answer_words;  // long-form kept answers, in output order

  std::size_t dropped_total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : dropped) n += c;
    return n;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["version"] = musilingo::to_string(version);
    j["generator_model"] = generator_model;
    j["captions"] = captions;
    j["generated"] = generated;
    j["kept"] = kept;
    auto& d = j["dropped_by_reason"] = nlohmann::ordered_json::object();
    for (auto r : kAllDropReasons) d[to_string(r)] = dropped.contains(r) ? dropped.at(r) : 0;
    if (!answer_words.empty()) {
      const auto [lo, hi] = std::minmax_element(answer_words.begin(), answer_words.end());
      std::size_t in_range = 0, total = 0;
      for (auto w : answer_words) {
        total += w;
        in_range += (w >= 100 && w <= 200) ? 1 : 0;
      }
      j["answer_words"] = {{"min", *lo},
                           {"max", *hi},
                           {"mean", static_cast<double>(total) / static_cast<double>(answer_words.size())},
                           {"within_100_200", in_range}};
    }
    return j;
  }
};

struct PipelineResult {
  std::vector<QAPair> pairs;
  RunReport report;
};

/// Spaces request starts at least 1/rate seconds apart across threads.
class RateLimiter {
 public:
  RateLimiter(double per_second, Sleeper sleep) : sleep_(std::move(sleep)) {
    if (per_second > 0.0)
      interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / per_second));
  }

  void acquire() {
    if (interval_ == Clock::duration::zero()) return;
    Clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      slot = std::max(Clock::now(), next_);
      next_ = slot + interval_;
    }
    const auto wait = std::chrono::ceil<std::chrono::milliseconds>(slot - Clock::now());
    if (wait.count() > 0 && sleep_) sleep_(wait);
  }

 private:
  using Clock = std::chrono::steady_clock;
  Sleeper sleep_;
  Clock::duration interval_ = Clock::duration::zero();
  Clock::time_point next_{};
  std::mutex mu_;
};

namespace gen_detail {

struct CaptionResult {
  std::vector<QAPair> candidates;  // passed hygiene and verification
  std::map<DropReason, std::size_t> dropped;
};

inline CaptionResult process_caption(const CaptionRecord& rec, QAVersion version, ChatClient& client,
                                     const PipelineOptions& opts, RateLimiter& limiter, const std::string& phash) {
  CaptionResult out;
  const auto expected = static_cast<std::size_t>(pairs_per_caption(version));
  const std::string request_id = rec.clip_id + '\x1f' + rec.field_name + '\x1f' + musilingo::to_string(version);

  auto call = [&](const ChatPrompt& prompt, std::string_view kind) -> std::optional<std::string> {
    try {
      limiter.acquire();
      return complete_with_retries(client, prompt, derive_seed(opts.seed, std::string(kind) + '\x1f' + request_id),
                                   opts.retry, opts.sleeper);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };

  const auto raw = call(render_prompt(rec.caption, version), "gen");
  if (!raw) {
    out.dropped[DropReason::runtime_error] += expected;
    return out;
  }
  auto outcome = parse_response(*raw, version);
  if (outcome.parsed.empty()) {
    out.dropped[*outcome.drop_reasons.begin()] += expected;
    return out;
  }
  const Split split = rec.split.empty() ? Split::train : parse_split(rec.split);
  for (std::size_t k = 0; k < outcome.parsed.size(); ++k) {
    QAPair p = std::move(outcome.parsed[k]);
    p.clip_id = rec.clip_id;
    p.split = split;
    p.provenance = {client.model_name(), phash};
    if (const auto why = hygiene_filter(p)) {
      ++out.dropped[*why];
      continue;
    }
    if (opts.verify) {
      const auto reply = call(render_verification_prompt(rec.caption, p), "verify:" + std::to_string(k));
      if (!reply) {
        ++out.dropped[DropReason::runtime_error];
        continue;
      }
      if (!parse_verdict(*reply).value_or(false)) {
        ++out.dropped[DropReason::failed_verification];
        continue;
      }
    }
    out.candidates.push_back(std::move(p));
  }
  return out;
}

}  // namespace gen_detail

/// Generates, filters and assembles instruction pairs. Captions may be
/// processed concurrently; the output order follows the caption order.
inline PipelineResult run_pipeline(const std::vector<CaptionRecord>& captions, QAVersion version, ChatClient& client,
                                   const PipelineOptions& opts = {}) {
  if (opts.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  const std::string phash = prompt_hash(version);
  RateLimiter limiter(opts.max_requests_per_s, opts.sleeper);
  std::vector<gen_detail::CaptionResult> results(captions.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < captions.size(); i = next++) {
      try {
        results[i] = gen_detail::process_caption(captions[i], version, client, opts, limiter, phash);
      } catch (const std::exception&) {
        results[i] = {{}, {{DropReason::runtime_error, static_cast<std::size_t>(pairs_per_caption(version))}}};
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(opts.concurrency), captions.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  PipelineResult out;
  RunReport& rep = out.report;
  rep.version = version;
  rep.generator_model = client.model_name();
  rep.captions = captions.size();
  rep.generated = captions.size() * static_cast<std::size_t>(pairs_per_caption(version));
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& r : results) {
    for (const auto& [why, n] : r.dropped) rep.dropped[why] += n;
    for (auto& p : r.candidates) {
      if (!seen.emplace(p.clip_id, p.question).second) {
        ++rep.dropped[DropReason::duplicate];
        continue;
      }
      if (version == QAVersion::long_form) rep.answer_words.push_back(word_count(p.answer));
      out.pairs.push_back(std::move(p));
    }
  }
  rep.kept = out.pairs.size();
  return out;
}

}  // namespace musilingo::datagen
