// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "musilingo/musilingo.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace musilingo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome ok(std::string d) { return {true, std::move(d)}; }
Outcome fail(std::string d) { return {false, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Shape law

Outcome shape_law() {
  Rng rng(11);
  std::size_t cases = 0;
  for (int T = 1; T <= 64; ++T) {
    const Mat m = rng.normal_matrix(T, 3, 1.0);
    for (int t = 1; t <= T + 2; ++t) {
      ++cases;
      const MusicEmbedding e = temporal_compress(m, t);
      const int expected = (T + t - 1) / t;
      if (e.frames() != expected)
        return fail("T=" + std::to_string(T) + " t=" + std::to_string(t) + " gave " + std::to_string(e.frames()));
      for (int g = 0; g < expected; ++g) {
        const int begin = g * t;
        const int end = std::min(T, begin + t);
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int r = begin; r < end; ++r) s += m(r, c);
          if (std::abs(e.values(g, c) - s / (end - begin)) > 1e-9)
            return fail("group mean off at T=" + std::to_string(T) + " t=" + std::to_string(t));
        }
      }
    }
  }
  return ok(std::to_string(cases) + " (T, t) cases");
}

// ---------------------------------------------------------------------------
// 2. Gradient check

MusicClip feature_clip(const std::string& id, int frames, int dim, Rng& rng) {
  MusicClip c;
  c.id = id;
  c.duration_s = 1.0;
  c.content = FrameFeatures{rng.normal_matrix(frames, dim, 1.0)};
  return c;
}

std::string random_text(Rng& rng, std::size_t len) {
  static const std::string alphabet = "abcdefghij klmno.";
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.index(alphabet.size())]);
  return s;
}

// Relative error is measured per parameter group as ||fd - bp|| / max(||fd||, ||bp||).
// Single coordinates with near-zero gradient are dominated by the O(h^2)
// truncation term and say nothing about the backward pass.
Outcome gradient_check() {
  double worst_group = 0.0, worst_coord = 0.0;
  std::size_t coords = 0;
  for (int inst = 0; inst < 10; ++inst) {
    Rng rng(derive_seed(100, "gc" + std::to_string(inst)));
    RunConfig cfg;
    cfg.encoder.dim = 16;
    cfg.encoder.input_dim = 8;
    cfg.encoder.seed = 10 + inst;
    cfg.lm.dim = 16;
    cfg.lm.heads = 2;
    cfg.lm.seed = 20 + inst;
    cfg.adapter.compression = 1 + inst % 4;
    cfg.trainer.seed = 30 + inst;
    ToyEncoder enc(cfg.encoder);
    ToyLanguageModel lm(cfg.lm);
    const std::vector<MusicClip> clips = {feature_clip("a", 5 + inst, 8, rng)};
    FeatureStore store(enc, clips);
    TrainState st = init_train_state(cfg, enc.state_count(), enc.dim());
    for (Eigen::Index i = 0; i < st.layer_weights.logits.size(); ++i) st.layer_weights.logits(i) = rng.normal();
    for (Eigen::Index i = 0; i < st.adapter.bias.size(); ++i) st.adapter.bias(i) = 0.1 * rng.normal();
    const bool instruct = inst % 2 == 1;
    std::vector<TrainingExample> batch = {
        {&store.get("a"), instruct ? lm.tokenize(random_text(rng, 4)) : TokenSequence{},
         with_eos(lm.tokenize(random_text(rng, 6)), lm)}};
    const PromptTemplate tmpl = PromptTemplate::from_config(cfg.prompt);
    const auto grads = batch_gradients(batch, st, lm, tmpl).second;
    auto central = [&](double& p) {
      const double h = 1e-3, saved = p;
      p = saved + h;
      const double up = batch_gradients(batch, st, lm, tmpl).first.loss;
      p = saved - h;
      const double down = batch_gradients(batch, st, lm, tmpl).first.loss;
      p = saved;
      return (up - down) / (2 * h);
    };
    auto group = [&](auto& params, const auto& analytic) {
      Mat fd(params.rows(), params.cols());
      for (Eigen::Index r = 0; r < params.rows(); ++r)
        for (Eigen::Index c = 0; c < params.cols(); ++c) {
          fd(r, c) = central(params(r, c));
          const double a = analytic(r, c);
          worst_coord = std::max(worst_coord, std::abs(fd(r, c) - a) / std::max({std::abs(fd(r, c)), std::abs(a), 1e-8}));
          ++coords;
        }
      const Mat an = analytic;
      worst_group = std::max(worst_group, (fd - an).norm() / std::max({fd.norm(), an.norm(), 1e-12}));
    };
    group(st.adapter.weight, grads.weight);
    group(st.adapter.bias, grads.bias);
    group(st.layer_weights.logits, grads.layer_logits);
  }
  const std::string d = std::to_string(coords) + " coordinates, worst group relative error " +
                        fmt("%.2e", worst_group) + " (worst single coordinate " + fmt("%.1e", worst_coord) + ")";
  return worst_group <= 1e-4 ? ok(d) : fail(d);
}

// ---------------------------------------------------------------------------
// 3. Frozen contract

Outcome frozen_contract() {
  RunConfig cfg;
  cfg.trainer.steps = 200;
  cfg.trainer.batch_size = 4;
  cfg.trainer.lr = 1e-3;
  cfg.encoder.frames = 8;
  const auto corpus = make_toy_corpus(4, 5, 0.0);
  ToyEncoder enc(cfg.encoder);
  ToyLanguageModel lm(cfg.lm);
  const auto enc_before = enc.parameter_digest();
  const auto lm_before = lm.parameter_digest();
  FeatureStore store(enc, corpus.clips);
  TrainState st = init_train_state(cfg, enc.state_count(), enc.dim());
  const auto adapter_before = st.trainable_digest();
  st = pretrain(corpus.captions, store, lm, cfg, st);
  if (st.step != 200) return fail("ran " + std::to_string(st.step) + " steps");
  if (enc.parameter_digest() != enc_before) return fail("encoder parameters changed");
  if (lm.parameter_digest() != lm_before) return fail("language model parameters changed");
  if (st.trainable_digest() == adapter_before) return fail("adapter parameters did not change");
  return ok("encoder " + Digest::to_hex(enc_before) + ", lm " + Digest::to_hex(lm_before) + " unchanged after 200 steps");
}

// ---------------------------------------------------------------------------
// 4. Loss-mask isolation

Outcome mask_isolation() {
  Rng rng(44);
  for (int inst = 0; inst < 100; ++inst) {
    const auto S = static_cast<Eigen::Index>(2 + rng.index(30));
    const int V = 16 + static_cast<int>(rng.index(250));
    const Mat logits = rng.normal_matrix(S, V, 3.0);
    std::vector<int> targets(static_cast<std::size_t>(S));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(S));
    for (auto& t : targets) t = static_cast<int>(rng.index(static_cast<std::uint64_t>(V)));
    for (auto& m : mask) m = rng.uniform() < 0.5 ? 1 : 0;
    mask[1 + rng.index(static_cast<std::uint64_t>(S - 1))] = 1;
    const double before = masked_lm_loss(logits, targets, mask);
    auto scrambled = targets;
    for (std::size_t i = 0; i < scrambled.size(); ++i)
      if (!mask[i]) scrambled[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(V)));
    const double after = masked_lm_loss(logits, scrambled, mask);
    if (before != after) return fail("instance " + std::to_string(inst) + " changed by " + fmt("%.3e", after - before));
  }
  return ok("100 instances, loss difference exactly 0");
}

// ---------------------------------------------------------------------------
// 5. Toy overfit

Outcome toy_overfit() {
  const std::vector<std::string> captions = {"soft piano.",  "loud drums.",  "jazz trio.",   "sad violin.",
                                             "fast techno.", "calm guitar.", "rock anthem.", "folk song."};
  RunConfig cfg;
  cfg.encoder.dim = 64;
  cfg.encoder.frames = 64;
  cfg.adapter.compression = 4;
  cfg.lm.dim = 64;
  cfg.lm.heads = 4;
  cfg.trainer.lr = 0.02;
  cfg.trainer.weight_decay = 0.0;
  cfg.trainer.steps = 500;
  cfg.trainer.batch_size = 8;
  std::vector<MusicClip> clips;
  std::vector<CaptionRecord> records;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    clips.push_back(make_toy_clip("c" + std::to_string(i), i, 7));
    records.push_back({clips.back().id, captions[i], "caption_writing", ""});
  }
  ToyEncoder enc(cfg.encoder);
  ToyLanguageModel lm(cfg.lm);
  FeatureStore store(enc, clips);
  double last_loss = 0.0;
  TrainHooks hooks;
  hooks.on_log = [&](const LogRecord& r) { last_loss = r.loss; };
  TrainState st = pretrain(records, store, lm, cfg, init_train_state(cfg, enc.state_count(), enc.dim()), hooks);
  std::vector<std::string> decoded;
  std::size_t verbatim = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto g = describe(store.get(clips[i].id), st.adapter, st.layer_weights, lm,
                            PromptTemplate::from_config(cfg.prompt), "", DecodeOptions::greedy(), 40);
    decoded.push_back(g.text);
    verbatim += g.text == captions[i] ? 1 : 0;
  }
  const auto report = metrics::evaluate_corpus(decoded, captions, metrics::HashEmbedder());
  const std::string d = "final loss " + fmt("%.4f", last_loss) + " after " + std::to_string(st.step) + " steps, " +
                        std::to_string(verbatim) + "/8 verbatim, B-U " + fmt("%.4f", report.mean.bu) + ", R-L " +
                        fmt("%.4f", report.mean.rouge_l);
  const bool pass = st.step <= 500 && last_loss < 0.05 && verbatim == 8 && report.mean.bu == 100.0 &&
                    report.mean.rouge_l == 1.0;
  return pass ? ok(d) : fail(d);
}

// ---------------------------------------------------------------------------
// 6. Metric oracles

using Tokens = std::vector<std::string>;

double oracle_bleu(const Tokens& c, const Tokens& r, int n) {
  if (c.empty() || r.empty()) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    std::vector<Tokens> cg, rg;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= c.size(); ++i) cg.emplace_back(c.begin() + i, c.begin() + i + k);
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= r.size(); ++i) rg.emplace_back(r.begin() + i, r.begin() + i + k);
    // Clipped matches: each reference n-gram occurrence is consumed at most once.
    std::vector<bool> used(rg.size(), false);
    double matches = 0.0;
    for (const auto& g : cg)
      for (std::size_t j = 0; j < rg.size(); ++j)
        if (!used[j] && rg[j] == g) {
          used[j] = true;
          matches += 1.0;
          break;
        }
    double num = matches, den = static_cast<double>(cg.size());
    if (k >= 2) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;
    log_sum += std::log(num / den);
  }
  const double bp = c.size() >= r.size() ? 1.0 : std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size()));
  return bp * std::exp(log_sum / n);
}

double oracle_rouge(const Tokens& c, const Tokens& r) {
  std::vector<std::vector<int>> t(c.size() + 1, std::vector<int>(r.size() + 1, 0));
  for (std::size_t i = 1; i <= c.size(); ++i)
    for (std::size_t j = 1; j <= r.size(); ++j)
      t[i][j] = c[i - 1] == r[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  const double l = t[c.size()][r.size()];
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(c.size()), rc = l / static_cast<double>(r.size());
  return 2 * p * rc / (p + rc);
}

double oracle_meteor(const Tokens& c, const Tokens& r) {
  const auto a = metrics::meteor_align(c, r);
  if (a.empty()) return 0.0;
  double chunks = 1.0;
  for (std::size_t k = 1; k < a.size(); ++k)
    if (!(a[k].first == a[k - 1].first + 1 && a[k].second == a[k - 1].second + 1)) chunks += 1.0;
  const double m = static_cast<double>(a.size());
  const double p = m / static_cast<double>(c.size()), rc = m / static_cast<double>(r.size());
  const double fmean = 10.0 * p * rc / (rc + 9.0 * p);
  return fmean * (1.0 - 0.5 * std::pow(chunks / m, 3.0));
}

Outcome metric_oracles() {
  static const std::vector<std::string> vocab = {"the",  "a",     "cat",  "cats",  "sat",   "play", "plays",
                                                 "playing", "music", "calm", "piano", "drum", ",",     "."};
  Rng rng(66);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto draw = [&] {
      Tokens t(1 + rng.index(8));
      for (auto& w : t) w = vocab[rng.index(vocab.size())];
      return t;
    };
    const Tokens c = draw(), r = draw();
    for (int n = 1; n <= 4; ++n) worst = std::max(worst, std::abs(metrics::bleu_n(c, r, n) - oracle_bleu(c, r, n)));
    worst = std::max(worst, std::abs(metrics::rouge_l(c, r) - oracle_rouge(c, r)));
    worst = std::max(worst, std::abs(metrics::meteor(c, r) - oracle_meteor(c, r)));
  }
  const double b = metrics::bleu_n("the cat sat", "the cat sat down", 1);
  const double rl = metrics::rouge_l("a b c d", "a c e");
  const double mt = metrics::meteor("the cat", "the cat");
  const std::string d = "200 pairs worst abs error " + fmt("%.1e", worst) + "; hand cases BLEU-1 " + fmt("%.4f", b) +
                        ", ROUGE-L " + fmt("%.4f", rl) + ", METEOR " + fmt("%.4f", mt);
  const bool pass = worst <= 1e-9 && std::abs(b - std::exp(1.0 - 4.0 / 3.0)) <= 1e-12 && std::abs(b - 0.7165) < 5e-5 &&
                    std::abs(rl - 4.0 / 7.0) <= 1e-12 && std::abs(mt - 0.9375) <= 1e-12;
  return pass ? ok(d) : fail(d);
}

// ---------------------------------------------------------------------------
// 7. Uniform logits

Outcome uniform_logits() {
  const Mat logits = Mat::Zero(12, 256);
  std::vector<int> targets(12);
  for (int i = 0; i < 12; ++i) targets[static_cast<std::size_t>(i)] = i * 17;
  std::vector<std::uint8_t> mask(12, 1);
  const double loss = masked_lm_loss(logits, targets, mask);
  const std::string d = "loss " + fmt("%.7f", loss) + " vs ln 256 = " + fmt("%.7f", std::log(256.0));
  return std::abs(loss - std::log(256.0)) <= 1e-6 && std::abs(loss - 5.5452) < 5e-5 ? ok(d) : fail(d);
}

// ---------------------------------------------------------------------------
// 8. Datagen bookkeeping

std::string between_delimiters(const std::string& user) {
  const auto a = user.find("####");
  const auto b = user.find("####", a + 4);
  return user.substr(a + 4, b - a - 4);
}

datagen::PipelineResult scripted_run(const std::vector<CaptionRecord>& caps, std::uint64_t seed) {
  // Caption i: i % 20 in [0, 16) valid, [16, 18) bad keys, 18 unpunctuated, 19 verified negative.
  auto kind = [](const std::string& caption) { return std::stoi(caption.substr(caption.find('#') + 1)) % 20; };
  datagen::ScriptedClient client([&](const datagen::ChatPrompt& p, int) -> std::string {
    const std::string caption = between_delimiters(p.user);
    const int k = kind(caption);
    if (p.system.starts_with(datagen::kVerificationQuestion)) return k == 19 ? "No, it does not." : "Yes.";
    nlohmann::json j;
    for (int q = 1; q <= 5; ++q) {
      if (k >= 16 && k < 18 && q == 3) continue;
      j["Question " + std::to_string(q)] = "Question " + std::to_string(q) + " about " + caption + "?";
      j["Answer " + std::to_string(q)] = "It is answer " + std::to_string(q) + (k == 18 ? "" : ".");
    }
    return "Here you go:\n```json\n" + j.dump(2) + "\n```";
  });
  datagen::PipelineOptions opts;
  opts.seed = seed;
  opts.sleeper = [](std::chrono::milliseconds) {};
  return datagen::run_pipeline(caps, QAVersion::short_form, client, opts);
}

Outcome datagen_bookkeeping() {
  std::vector<CaptionRecord> caps;
  for (int i = 0; i < 100; ++i) caps.push_back({"clip" + std::to_string(i), "Caption #" + std::to_string(i) + " of a song.", "caption_writing", ""});
  const auto a = scripted_run(caps, 9);
  const auto b = scripted_run(caps, 9);
  const auto& rep = a.report;
  bool punct = true;
  for (const auto& p : a.pairs) punct = punct && ends_with_terminal_punctuation(p.answer);
  const bool same = a.pairs == b.pairs && a.report.to_json() == b.report.to_json();
  std::string d = "generated " + std::to_string(rep.generated) + ", kept " + std::to_string(rep.kept) + ", dropped";
  for (const auto& [why, n] : rep.dropped) d += " " + datagen::to_string(why) + "=" + std::to_string(n);
  const bool pass = rep.generated == 500 && rep.kept + rep.dropped_total() == rep.generated && rep.kept == 400 &&
                    rep.dropped.at(datagen::DropReason::bad_keys) == 50 &&
                    rep.dropped.at(datagen::DropReason::no_terminal_punct) == 25 &&
                    rep.dropped.at(datagen::DropReason::failed_verification) == 25 && punct && same;
  return pass ? ok(d + (same ? ", rerun identical" : "")) : fail(d + (same ? "" : ", rerun differs"));
}

// ---------------------------------------------------------------------------
// 9. Audit sampler

Outcome audit_sampler() {
  std::vector<QAPair> data(60000);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].clip_id = "c" + std::to_string(i / 5);
    data[i].question = "Question " + std::to_string(i) + "?";
    data[i].answer = "Answer " + std::to_string(i) + ".";
    data[i].version = i % 2 ? QAVersion::long_form : QAVersion::short_form;
  }
  const auto a = datagen::sample_audit(data, 0.01, 123);
  const auto b = datagen::sample_audit(data, 0.01, 123);
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].pair == b[i].pair;
  const std::string d = std::to_string(a.size()) + " rows" + (same ? ", identical on rerun" : ", rerun differs");
  return a.size() == 600 && same ? ok(d) : fail(d);
}

// ---------------------------------------------------------------------------
// 10. End-to-end CLI determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MUSILINGO_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str()) == 0;
}

Outcome cli_run(const fs::path& dir, std::string& failure) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  const std::string d = "\"" + dir.string() + "\"";
  const std::string cfg = " --config " + d + "/data/config.json --seed 5";
  const std::vector<std::string> steps = {
      "make-toy-data --out " + d + "/data --clips 8 --seed 3",
      "pretrain" + cfg + " --set trainer.steps=40 --out " + d + "/pre.ckpt",
      "finetune" + cfg + " --set trainer.steps=20 --init " + d + "/pre.ckpt --partition mixed --out " + d + "/ft.ckpt",
      "predict" + cfg + " --ckpt " + d + "/ft.ckpt --split test --partition mixed --max-new 24 --out " + d +
          "/pred.jsonl --ref-out " + d + "/ref.jsonl",
      "eval --pred " + d + "/pred.jsonl --ref " + d + "/ref.jsonl --out " + d + "/report.json",
  };
  for (const auto& s : steps)
    if (!cli(s, log)) {
      failure = "command failed: " + s.substr(0, s.find(' ')) + " (see " + log.string() + ")";
      return fail(failure);
    }
  return ok("");
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("musilingo_acceptance_" + std::to_string(::getpid()));
  std::string why;
  if (!cli_run(root / "a", why).pass || !cli_run(root / "b", why).pass) return fail(why);
  const char* artifacts[] = {"pre.ckpt", "pre.ckpt.state", "ft.ckpt", "ft.ckpt.state", "pred.jsonl", "report.json"};
  for (const char* f : artifacts) {
    const auto x = slurp(root / "a" / f), y = slurp(root / "b" / f);
    if (x.empty()) return fail(std::string(f) + " missing");
    if (x != y) return fail(std::string(f) + " differs between runs");
  }
  fs::remove_all(root);
  return ok("checkpoints, predictions and report byte-identical across two runs");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"shape law", shape_law},
      {"gradient check", gradient_check},
      {"frozen contract", frozen_contract},
      {"loss-mask isolation", mask_isolation},
      {"toy overfit", toy_overfit},
      {"metric oracles", metric_oracles},
      {"uniform-logits loss", uniform_logits},
      {"datagen bookkeeping", datagen_bookkeeping},
      {"audit sampler", audit_sampler},
      {"end-to-end determinism", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2zu %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
