// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Human quality audit: seeded sampling of instruction pairs into a blank
// annotation sheet, and percentage summaries of filled sheets.
//
// Sheet rows are JSON lines holding the pair fields plus "clarity",
// "feasibility", "practicality" (y/u/n) and "output_quality"
// (excellent/pass/fail). Blank annotation fields are not counted.

#pragma once

#include "musilingo/common.hpp"
#include "musilingo/data.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace musilingo::datagen {

/// Indices of floor(fraction * N) distinct pairs, ascending. The draw is a
/// partial Fisher-Yates shuffle seeded from `seed`.
inline std::vector<std::size_t> sample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("audit fraction must be in (0, 1]");
  if (n == 0) throw DataError("cannot sample an audit from an empty dataset");
  // The epsilon absorbs products that land a hair below an integer.
  const auto k = std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "audit"));
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct AuditRow {
  QAPair pair;
  std::string clarity;
  std::string feasibility;
  std::string practicality;
  std::string output_quality;
};

inline std::vector<AuditRow> sample_audit(const std::vector<QAPair>& dataset, double fraction = 0.01,
                                          std::uint64_t seed = 0) {
  std::vector<AuditRow> rows;
  for (auto i : sample_indices(dataset.size(), fraction, seed)) rows.push_back({dataset[i], "", "", "", ""});
  return rows;
}

inline Json to_json(const AuditRow& r) {
  Json j = to_json(r.pair);
  j["clarity"] = r.clarity;
  j["feasibility"] = r.feasibility;
  j["practicality"] = r.practicality;
  j["output_quality"] = r.output_quality;
  return j;
}

inline void save_audit_sheet(const std::vector<AuditRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (const auto& r : rows) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Summary

enum class Judgement : std::uint8_t { yes, unsure, no };
enum class OutputQuality : std::uint8_t { excellent, pass, fail };

namespace audit_detail {

inline std::string lower_trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace audit_detail

inline std::optional<Judgement> parse_judgement(const std::string& raw) {
  const auto s = audit_detail::lower_trim(raw);
  if (s.empty()) return std::nullopt;
  if (s == "y" || s == "yes") return Judgement::yes;
  if (s == "u" || s == "unsure") return Judgement::unsure;
  if (s == "n" || s == "no") return Judgement::no;
  throw DataError("unrecognised judgement \"" + raw + "\" (expected y/u/n)");
}

inline std::optional<OutputQuality> parse_output_quality(const std::string& raw) {
  const auto s = audit_detail::lower_trim(raw);
  if (s.empty()) return std::nullopt;
  if (s == "excellent" || s == "excellence") return OutputQuality::excellent;
  if (s == "pass" || s == "fair") return OutputQuality::pass;
  if (s == "fail" || s == "failed") return OutputQuality::fail;
  throw DataError("unrecognised output quality \"" + raw + "\" (expected excellent/pass/fail)");
}

/// Percentages for one group of annotated rows. Each criterion has its own
/// denominator: the rows where that field is filled.
struct AuditSummary {
  struct Rate {
    std::size_t hits = 0;
    std::size_t annotated = 0;
    double percent() const { return annotated ? 100.0 * static_cast<double>(hits) / static_cast<double>(annotated) : 0.0; }
  };
  std::size_t rows = 0;
  Rate clarity, feasibility, practicality, excellent, not_failed;
};

inline std::vector<AuditRow> load_audit_sheet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<AuditRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    try {
      const Json j = Json::parse(line);
      AuditRow r;
      r.pair = qa_from_json(j);
      r.clarity = detail::optional_string(j, "clarity");
      r.feasibility = detail::optional_string(j, "feasibility");
      r.practicality = detail::optional_string(j, "practicality");
      r.output_quality = detail::optional_string(j, "output_quality");
      rows.push_back(std::move(r));
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

/// Summaries keyed by dataset version.
inline std::map<QAVersion, AuditSummary> summarize_audit(const std::vector<AuditRow>& rows) {
  std::map<QAVersion, AuditSummary> out;
  for (const auto& r : rows) {
    auto& s = out[r.pair.version];
    ++s.rows;
    auto tally = [](AuditSummary::Rate& rate, const std::string& field) {
      if (const auto j = parse_judgement(field)) {
        ++rate.annotated;
        rate.hits += *j == Judgement::yes ? 1 : 0;
      }
    };
    tally(s.clarity, r.clarity);
    tally(s.feasibility, r.feasibility);
    tally(s.practicality, r.practicality);
    if (const auto q = parse_output_quality(r.output_quality)) {
      ++s.excellent.annotated;
      ++s.not_failed.annotated;
      s.excellent.hits += *q == OutputQuality::excellent ? 1 : 0;
      s.not_failed.hits += *q != OutputQuality::fail ? 1 : 0;
    }
  }
  return out;
}

inline std::string version_label(QAVersion v) { return v == QAVersion::short_form ? "MI short" : "MI long"; }

inline nlohmann::ordered_json to_json(const std::map<QAVersion, AuditSummary>& summary) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [v, s] : summary) {
    j[version_label(v)] = {{"rows", s.rows},
                           {"clarity_pct", s.clarity.percent()},
                           {"feasibility_pct", s.feasibility.percent()},
                           {"practicality_pct", s.practicality.percent()},
                           {"excellent_pct", s.excellent.percent()},
                           {"not_failed_pct", s.not_failed.percent()}};
  }
  return j;
}

/// Criterion rows against one column per version present.
inline std::string format_audit_table(const std::map<QAVersion, AuditSummary>& summary) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-32s", "");
  out += buf;
  for (const auto& [v, _] : summary) {
    std::snprintf(buf, sizeof buf, " %10s", version_label(v).c_str());
    out += buf;
  }
  out += '\n';
  using Getter = const AuditSummary::Rate& (*)(const AuditSummary&);
  const std::pair<const char*, Getter> lines[] = {
      {"Instruction has Clarity", [](const AuditSummary& s) -> const AuditSummary::Rate& { return s.clarity; }},
      {"Instruction has Feasibility", [](const AuditSummary& s) -> const AuditSummary::Rate& { return s.feasibility; }},
      {"Instruction has Practicality",
       [](const AuditSummary& s) -> const AuditSummary::Rate& { return s.practicality; }},
      {"Output Quality excellent", [](const AuditSummary& s) -> const AuditSummary::Rate& { return s.excellent; }},
      {"Output Quality not failed", [](const AuditSummary& s) -> const AuditSummary::Rate& { return s.not_failed; }},
  };
  for (const auto& [label, get] : lines) {
    std::snprintf(buf, sizeof buf, "%-32s", label);
    out += buf;
    for (const auto& [_, s] : summary) {
      std::snprintf(buf, sizeof buf, " %9.1f%%", get(s).percent());
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace musilingo::datagen
