// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain records and their line-delimited JSON persistence.
//
// Every dataset file holds one JSON object per line. Blank lines are
// ignored; any other line that fails to parse or violates a record
// invariant aborts the load with a DataError naming the 1-based line.

#pragma once

#include "musilingo/common.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <variant>
#include <vector>

namespace musilingo {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Clips

struct Waveform {
  std::vector<double> samples;  // mono
  double sample_rate = 0.0;
};

/// Per-frame features already extracted upstream, [T x input_dim].
struct FrameFeatures {
  Mat frames;
};

struct MusicClip {
  std::string id;
  std::string source_ref;
  double duration_s = 0.0;
  std::variant<Waveform, FrameFeatures> content;

  bool has_waveform() const { return std::holds_alternative<Waveform>(content); }

  void validate() const {
    if (id.empty()) throw DataError("clip has empty id");
    if (const auto* w = std::get_if<Waveform>(&content)) {
      if (w->sample_rate <= 0.0) throw DataError("clip " + id + ": sample_rate must be positive");
      const double expected = std::round(duration_s * w->sample_rate);
      if (expected <= 0.0 || static_cast<double>(w->samples.size()) != expected)
        throw DataError("clip " + id + ": waveform length " + std::to_string(w->samples.size()) +
                        " does not match round(duration_s * sample_rate)");
    } else {
      const auto& f = std::get<FrameFeatures>(content).frames;
      if (f.rows() == 0 || f.cols() == 0) throw DataError("clip " + id + ": empty frame features");
    }
  }
};

// ---------------------------------------------------------------------------
// Caption and Q&A records

inline constexpr std::string_view kCaptionWritingField = "caption_writing";

struct CaptionRecord {
  std::string clip_id;
  std::string caption;
  std::string field_name{kCaptionWritingField};
  std::string split;  // optional; eval-split membership of the clip when known

  bool operator==(const CaptionRecord&) const = default;
};

enum class QAVersion { short_form, long_form };
enum class Split { train, test };

inline std::string to_string(QAVersion v) { return v == QAVersion::short_form ? "short" : "long"; }
inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline QAVersion parse_version(std::string_view s) {
  if (s == "short") return QAVersion::short_form;
  if (s == "long") return QAVersion::long_form;
  throw DataError("unknown version '" + std::string(s) + "' (expected short|long)");
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "' (expected train|test)");
}

struct Provenance {
  std::string generator_model;
  std::string prompt_hash;
  bool operator==(const Provenance&) const = default;
};

struct QAPair {
  std::string clip_id;
  std::string question;
  std::string answer;
  QAVersion version = QAVersion::short_form;
  Split split = Split::train;
  Provenance provenance;
  std::set<std::string> filter_flags;

  bool operator==(const QAPair&) const = default;
};

/// True when the last non-whitespace character closes a sentence.
inline bool ends_with_terminal_punctuation(std::string_view text) {
  auto end = text.find_last_not_of(" \t\r\n\f\v");
  if (end == std::string_view::npos) return false;
  switch (text[end]) {
    case '.':
    case '!':
    case '?':
    case '"':
    case '\'':
    case ')':
    case ']':
      return true;
    default:
      return false;
  }
}

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

inline void validate(const CaptionRecord& r) {
  if (r.clip_id.empty()) throw DataError("caption record has empty clip_id");
  if (is_blank(r.caption)) throw DataError("caption for clip " + r.clip_id + " is empty");
}

inline void validate(const QAPair& p) {
  if (p.clip_id.empty()) throw DataError("qa record has empty clip_id");
  if (is_blank(p.question)) throw DataError("qa record for clip " + p.clip_id + " has empty question");
  if (is_blank(p.answer)) throw DataError("qa record for clip " + p.clip_id + " has empty answer");
  if (!ends_with_terminal_punctuation(p.answer))
    throw DataError("qa record for clip " + p.clip_id + " has an answer without terminal punctuation");
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline const Json& require_key(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing required key \"") + key + "\"");
  return *it;
}

inline std::string require_string(const Json& obj, const char* key) {
  const Json& v = require_key(obj, key);
  if (!v.is_string()) throw DataError(std::string("key \"") + key + "\" must be a string");
  return v.get<std::string>();
}

inline std::string optional_string(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw DataError(std::string("key \"") + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace detail

inline Json to_json(const CaptionRecord& r) {
  Json j;
  j["clip_id"] = r.clip_id;
  j["caption"] = r.caption;
  j["field_name"] = r.field_name;
  if (!r.split.empty()) j["split"] = r.split;
  return j;
}

inline CaptionRecord caption_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  CaptionRecord r;
  r.clip_id = detail::require_string(j, "clip_id");
  r.caption = detail::require_string(j, "caption");
  auto field = detail::optional_string(j, "field_name");
  if (!field.empty()) r.field_name = std::move(field);
  r.split = detail::optional_string(j, "split");
  validate(r);
  return r;
}

inline Json to_json(const QAPair& p) {
  Json j;
  j["clip_id"] = p.clip_id;
  j["question"] = p.question;
  j["answer"] = p.answer;
  j["version"] = to_string(p.version);
  j["split"] = to_string(p.split);
  j["provenance"] = {{"generator_model", p.provenance.generator_model},
                     {"prompt_hash", p.provenance.prompt_hash}};
  j["filter_flags"] = Json::array();
  for (const auto& f : p.filter_flags) j["filter_flags"].push_back(f);
  return j;
}

inline QAPair qa_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  QAPair p;
  p.clip_id = detail::require_string(j, "clip_id");
  p.question = detail::require_string(j, "question");
  p.answer = detail::require_string(j, "answer");
  p.version = parse_version(detail::require_string(j, "version"));
  p.split = parse_split(detail::require_string(j, "split"));
  if (auto it = j.find("provenance"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw DataError("key \"provenance\" must be an object");
    p.provenance.generator_model = detail::optional_string(*it, "generator_model");
    p.provenance.prompt_hash = detail::optional_string(*it, "prompt_hash");
  }
  if (auto it = j.find("filter_flags"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("key \"filter_flags\" must be an array");
    for (const auto& f : *it) {
      if (!f.is_string()) throw DataError("filter_flags entries must be strings");
      p.filter_flags.insert(f.get<std::string>());
    }
  }
  validate(p);
  return p;
}

inline Json to_json(const MusicClip& c) {
  Json j;
  j["id"] = c.id;
  j["source_ref"] = c.source_ref;
  j["duration_s"] = c.duration_s;
  if (const auto* w = std::get_if<Waveform>(&c.content)) {
    j["sample_rate"] = w->sample_rate;
    j["audio"] = w->samples;
  } else {
    const auto& f = std::get<FrameFeatures>(c.content).frames;
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index k = 0; k < f.cols(); ++k) row.push_back(f(r, k));
      rows.push_back(std::move(row));
    }
    j["features"] = std::move(rows);
  }
  return j;
}

inline MusicClip clip_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  MusicClip c;
  c.id = detail::require_string(j, "id");
  c.source_ref = detail::optional_string(j, "source_ref");
  const Json& dur = detail::require_key(j, "duration_s");
  if (!dur.is_number()) throw DataError("key \"duration_s\" must be a number");
  c.duration_s = dur.get<double>();
  const bool has_audio = j.contains("audio");
  const bool has_features = j.contains("features");
  if (has_audio == has_features) throw DataError("clip must carry exactly one of \"audio\" or \"features\"");
  if (has_audio) {
    Waveform w;
    const Json& sr = detail::require_key(j, "sample_rate");
    if (!sr.is_number()) throw DataError("key \"sample_rate\" must be a number");
    w.sample_rate = sr.get<double>();
    const Json& audio = j["audio"];
    if (!audio.is_array()) throw DataError("key \"audio\" must be an array");
    w.samples.reserve(audio.size());
    for (const auto& s : audio) {
      if (!s.is_number()) throw DataError("audio samples must be numbers");
      w.samples.push_back(s.get<double>());
    }
    c.content = std::move(w);
  } else {
    const Json& rows = j["features"];
    if (!rows.is_array() || rows.empty() || !rows[0].is_array())
      throw DataError("key \"features\" must be a non-empty array of rows");
    const auto cols = rows[0].size();
    Mat f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || rows[r].size() != cols) throw DataError("feature rows must have equal length");
      for (std::size_t k = 0; k < cols; ++k) {
        if (!rows[r][k].is_number()) throw DataError("features must be numbers");
        f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k].get<double>();
      }
    }
    c.content = FrameFeatures{std::move(f)};
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// File I/O

namespace detail {

template <typename Record, typename Parse, typename Key>
std::vector<Record> load_lines(const std::filesystem::path& path, Parse parse, Key key) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Record> out;
  std::set<decltype(key(std::declval<const Record&>()))> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    try {
      Json j = Json::parse(line);
      Record rec = parse(j);
      if (!seen.insert(key(rec)).second) throw DataError("duplicate record id");
      out.push_back(std::move(rec));
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename Record>
void save_lines(const std::vector<Record>& records, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace detail

inline std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
  return detail::load_lines<CaptionRecord>(path, caption_from_json, [](const CaptionRecord& r) {
    return std::make_pair(r.clip_id, r.field_name);
  });
}

inline std::vector<QAPair> load_qa(const std::filesystem::path& path) {
  // A Q&A record is identified by its clip, version and question text.
  return detail::load_lines<QAPair>(path, qa_from_json, [](const QAPair& p) {
    return std::make_tuple(p.clip_id, to_string(p.version), p.question);
  });
}

inline std::vector<MusicClip> load_clips(const std::filesystem::path& path) {
  return detail::load_lines<MusicClip>(path, clip_from_json, [](const MusicClip& c) { return c.id; });
}

enum class DatasetKind { captions, qa };
using Dataset = std::variant<std::vector<CaptionRecord>, std::vector<QAPair>>;

inline Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind) {
  if (kind == DatasetKind::captions) return load_captions(path);
  return load_qa(path);
}

inline void save_dataset(const std::vector<CaptionRecord>& records, const std::filesystem::path& path) {
  for (const auto& r : records) validate(r);
  detail::save_lines(records, path);
}

inline void save_dataset(const std::vector<QAPair>& records, const std::filesystem::path& path) {
  for (const auto& r : records) validate(r);
  detail::save_lines(records, path);
}

inline void save_clips(const std::vector<MusicClip>& clips, const std::filesystem::path& path) {
  for (const auto& c : clips) c.validate();
  detail::save_lines(clips, path);
}

// ---------------------------------------------------------------------------
// Partitions

enum class Partition { short_only, long_only, mixed };

inline Partition parse_partition(std::string_view s) {
  if (s == "short") return Partition::short_only;
  if (s == "long") return Partition::long_only;
  if (s == "mixed") return Partition::mixed;
  throw ConfigError("unknown partition '" + std::string(s) + "' (expected short|long|mixed)");
}

inline std::vector<QAPair> partition(const std::vector<QAPair>& records, Partition selector) {
  std::vector<QAPair> out;
  for (const auto& r : records) {
    const bool keep = selector == Partition::mixed ||
                      (selector == Partition::short_only && r.version == QAVersion::short_form) ||
                      (selector == Partition::long_only && r.version == QAVersion::long_form);
    if (keep) out.push_back(r);
  }
  return out;
}

inline std::vector<QAPair> select_split(const std::vector<QAPair>& records, Split split) {
  std::vector<QAPair> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const QAPair& r) { return r.split == split; });
  return out;
}

/// Keeps only the caption variant used for training (e.g. "caption_writing").
inline std::vector<CaptionRecord> select_field(const std::vector<CaptionRecord>& records,
                                               std::string_view field) {
  std::vector<CaptionRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [field](const CaptionRecord& r) { return r.field_name == field; });
  return out;
}

}  // namespace musilingo
