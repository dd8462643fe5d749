// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// musilingo: command-line entry point for training, data generation,
// inference and evaluation.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 runtime error.

#include "musilingo/datagen/http_client.hpp"
#include "musilingo/musilingo.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace musilingo;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

// Options shared by every command that builds a RunConfig.
struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string run_dir;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (comments allowed)");
    app->add_option("--set", sets, "Override a config key, e.g. --set trainer.lr=0.001 (repeatable)");
    app->add_option("--seed", seed, "Sets trainer.seed");
    app->add_option("--run-dir", run_dir, "Directory for the config snapshot and train_log.jsonl");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set_from_string(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) cfg.trainer.seed = *seed;
    return cfg;
  }
};

struct DecodeOpts {
  bool greedy = false;
  std::optional<double> temperature;
  std::uint64_t seed = 0;
  int max_new = 64;

  void attach(CLI::App* app) {
    app->add_flag("--greedy", greedy, "Greedy decoding (the default)");
    app->add_option("--temperature", temperature, "Sample at this temperature instead of greedy decoding");
    app->add_option("--decode-seed", seed, "Sampling seed");
    app->add_option("--max-new", max_new, "Maximum generated tokens")->check(CLI::PositiveNumber);
  }

  DecodeOptions options() const {
    if (greedy && temperature) throw ConfigError("--greedy and --temperature are mutually exclusive");
    return temperature ? DecodeOptions::sample(*temperature, seed) : DecodeOptions::greedy();
  }
};

class RunDir {
 public:
  RunDir(const std::string& dir, const RunConfig& cfg) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    cfg.save(fs::path(dir) / "config.json");
    log_.open(fs::path(dir) / "train_log.jsonl", std::ios::app);
    if (!log_) throw RuntimeError("cannot write " + (fs::path(dir) / "train_log.jsonl").string());
  }

  void log(const LogRecord& r) {
    if (log_.is_open()) log_ << r.to_json().dump() << '\n' << std::flush;
  }

 private:
  std::ofstream log_;
};

TrainHooks make_hooks(RunDir& run, const std::string& out, std::uint64_t digest, int log_every,
                      std::int64_t stop_after) {
  TrainHooks h;
  h.on_log = [&run, log_every](const LogRecord& r) {
    run.log(r);
    if (r.step % log_every == 0)
      std::cerr << to_string(r.stage) << " step " << r.step << " loss " << r.loss << " ema " << r.loss_ema
                << " lr " << r.lr << '\n';
  };
  h.on_checkpoint = [out, digest](const TrainState& s) { save_checkpoint(out, s, digest); };
  h.stop_at_stage_step = stop_after;
  return h;
}

std::vector<std::string> read_texts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(j.at("text").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path);
  out << text;
}

// Loads a checkpoint for inference against the current architecture.
TrainState load_for_inference(const std::string& ckpt, const RunConfig& cfg, bool force) {
  return load_checkpoint(ckpt, cfg.architecture_digest(), force);
}

std::vector<QAPair> select_pairs(const RunConfig& cfg, const std::string& partition_name) {
  if (partition_name == "musicqa") {
    if (cfg.data.musicqa.empty()) throw ConfigError("--partition musicqa needs data.musicqa");
    return load_qa(cfg.data.musicqa);
  }
  if (cfg.data.qa.empty()) throw ConfigError("no Q&A file: pass --qa or set data.qa");
  return partition(load_qa(cfg.data.qa), parse_partition(partition_name));
}

std::vector<CaptionRecord> pretraining_captions(const RunConfig& cfg) {
  if (cfg.data.captions.empty()) throw ConfigError("no caption file: pass --captions or set data.captions");
  std::vector<CaptionRecord> out;
  for (auto& r : load_captions(cfg.data.captions))
    if (r.split.empty() || r.split == cfg.data.split) out.push_back(std::move(r));
  return out;
}

std::vector<MusicClip> clips_for(const RunConfig& cfg) {
  if (cfg.data.clips.empty()) throw ConfigError("no clip file: pass --clips or set data.clips");
  return load_clips(cfg.data.clips);
}

int run(int argc, char** argv) {
  CLI::App app{"musilingo: music-to-text adapter training, data generation and evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // pretrain ---------------------------------------------------------------
  CommonOpts pre_common;
  std::string pre_clips, pre_captions, pre_out, pre_resume;
  bool pre_force = false;
  std::int64_t pre_stop = -1;
  auto* pre = app.add_subcommand("pretrain", "Caption pre-training of the adapter");
  pre_common.attach(pre);
  pre->add_option("--clips", pre_clips, "Clip file (JSONL)");
  pre->add_option("--captions", pre_captions, "Caption file (JSONL)");
  pre->add_option("--out", pre_out, "Checkpoint to write")->required();
  pre->add_option("--resume", pre_resume, "Continue an interrupted pre-training checkpoint");
  pre->add_flag("--force", pre_force, "Load checkpoints written for a different config digest");
  pre->add_option("--stop-after", pre_stop, "Stop after this many stage steps (leaves a resumable checkpoint)");

  // finetune ---------------------------------------------------------------
  CommonOpts ft_common;
  std::string ft_clips, ft_qa, ft_init, ft_out, ft_resume, ft_partition = "mixed";
  bool ft_force = false;
  std::int64_t ft_stop = -1;
  auto* ft = app.add_subcommand("finetune", "Instruction tuning on Q&A pairs");
  ft_common.attach(ft);
  ft->add_option("--clips", ft_clips, "Clip file (JSONL)");
  ft->add_option("--qa", ft_qa, "Q&A file (JSONL)");
  ft->add_option("--init", ft_init, "Pre-trained checkpoint to start from");
  ft->add_option("--partition", ft_partition, "short | long | mixed | musicqa")
      ->check(CLI::IsMember({"short", "long", "mixed", "musicqa"}));
  ft->add_option("--out", ft_out, "Checkpoint to write")->required();
  ft->add_option("--resume", ft_resume, "Continue an interrupted fine-tuning checkpoint");
  ft->add_flag("--force", ft_force, "Load checkpoints written for a different config digest");
  ft->add_option("--stop-after", ft_stop, "Stop after this many stage steps (leaves a resumable checkpoint)");

  // predict ----------------------------------------------------------------
  CommonOpts pr_common;
  DecodeOpts pr_decode;
  std::string pr_ckpt, pr_clips, pr_qa, pr_captions, pr_out, pr_ref_out, pr_split = "test", pr_partition = "mixed";
  bool pr_force = false;
  auto* pr = app.add_subcommand("predict", "Decode answers (or captions) for a dataset split");
  pr_common.attach(pr);
  pr_decode.attach(pr);
  pr->add_option("--ckpt", pr_ckpt, "Adapter checkpoint")->required();
  pr->add_option("--clips", pr_clips, "Clip file (JSONL)");
  auto* pr_qa_opt = pr->add_option("--qa", pr_qa, "Q&A file: answer each question");
  pr->add_option("--captions", pr_captions, "Caption file: caption each clip with the pre-training layout")
      ->excludes(pr_qa_opt);
  pr->add_option("--split", pr_split, "train | test")->check(CLI::IsMember({"train", "test"}));
  pr->add_option("--partition", pr_partition, "short | long | mixed | musicqa")
      ->check(CLI::IsMember({"short", "long", "mixed", "musicqa"}));
  pr->add_option("--out", pr_out, "Predictions (JSONL with a \"text\" field)")->required();
  pr->add_option("--ref-out", pr_ref_out, "Matching references (JSONL with a \"text\" field)");
  pr->add_flag("--force", pr_force, "Load checkpoints written for a different config digest");

  // infer / caption --------------------------------------------------------
  CommonOpts inf_common;
  DecodeOpts inf_decode;
  std::string inf_ckpt, inf_clips, inf_clip, inf_question;
  bool inf_force = false;
  auto* inf = app.add_subcommand("infer", "Answer a question about one clip");
  inf_common.attach(inf);
  inf_decode.attach(inf);
  inf->add_option("--ckpt", inf_ckpt, "Adapter checkpoint")->required();
  inf->add_option("--clips", inf_clips, "Clip file (JSONL)");
  inf->add_option("--clip", inf_clip, "Clip id")->required();
  inf->add_option("--question", inf_question, "Question text")->required();
  inf->add_flag("--force", inf_force, "Load checkpoints written for a different config digest");

  CommonOpts cap_common;
  DecodeOpts cap_decode;
  std::string cap_ckpt, cap_clips, cap_clip, cap_layout = "qa";
  bool cap_force = false;
  auto* cap = app.add_subcommand("caption", "Caption one clip");
  cap_common.attach(cap);
  cap_decode.attach(cap);
  cap->add_option("--ckpt", cap_ckpt, "Adapter checkpoint")->required();
  cap->add_option("--clips", cap_clips, "Clip file (JSONL)");
  cap->add_option("--clip", cap_clip, "Clip id")->required();
  cap->add_option("--layout", cap_layout,
                  "qa: ask \"Please give a caption to the music\"; pretrain: continue after the music")
      ->check(CLI::IsMember({"qa", "pretrain"}));
  cap->add_flag("--force", cap_force, "Load checkpoints written for a different config digest");

  // eval -------------------------------------------------------------------
  std::string ev_pred, ev_ref, ev_out, ev_vectors;
  int ev_dim = 64;
  auto* ev = app.add_subcommand("eval", "Score predictions against references");
  ev->add_option("--pred", ev_pred, "Predictions (JSONL with a \"text\" field)")->required();
  ev->add_option("--ref", ev_ref, "References (JSONL with a \"text\" field), aligned by line")->required();
  ev->add_option("--out", ev_out, "Report file (JSON)");
  ev->add_option("--vectors", ev_vectors, "Word-vector file for BERT-S (default: hashed embeddings)");
  ev->add_option("--hash-dim", ev_dim, "Hashed embedding width")->check(CLI::PositiveNumber);

  // datagen ----------------------------------------------------------------
  std::string dg_captions, dg_version = "v1", dg_client = "mock", dg_out, dg_report;
  std::uint64_t dg_seed = 0;
  int dg_concurrency = 1;
  double dg_rate = 0.0;
  bool dg_no_verify = false;
  datagen::HttpClientOptions dg_http;
  auto* dg = app.add_subcommand("datagen", "Generate instruction pairs from captions with a chat model");
  dg->add_option("--captions", dg_captions, "Caption file (JSONL)")->required();
  dg->add_option("--version", dg_version, "v1 (five short pairs) | v2 (one long pair)")
      ->check(CLI::IsMember({"v1", "v2"}));
  dg->add_option("--client", dg_client, "mock | http")->check(CLI::IsMember({"mock", "http"}));
  dg->add_option("--out", dg_out, "Output Q&A file (JSONL)")->required();
  dg->add_option("--report", dg_report, "Run report (JSON); printed to stderr when omitted");
  dg->add_option("--seed", dg_seed, "Run seed");
  dg->add_option("--concurrency", dg_concurrency, "Concurrent captions")->check(CLI::PositiveNumber);
  dg->add_option("--rate", dg_rate, "Maximum requests per second (0: unlimited)");
  dg->add_flag("--no-verify", dg_no_verify, "Skip the grounding verification step");
  dg->add_option("--endpoint", dg_http.endpoint, "Chat-completions URL");
  dg->add_option("--model", dg_http.model, "Model name sent to the endpoint");
  dg->add_option("--api-key-env", dg_http.api_key_env, "Environment variable holding the API key");

  // audit ------------------------------------------------------------------
  std::string as_data, as_out;
  double as_fraction = 0.01;
  std::uint64_t as_seed = 0;
  auto* as = app.add_subcommand("audit-sample", "Draw a blank annotation sheet from a Q&A file");
  as->add_option("--data", as_data, "Q&A file (JSONL)")->required();
  as->add_option("--fraction", as_fraction, "Sampled fraction in (0, 1]");
  as->add_option("--seed", as_seed, "Sampling seed");
  as->add_option("--out", as_out, "Sheet to write (JSONL)")->required();

  std::string su_sheet, su_out;
  auto* su = app.add_subcommand("audit-summarize", "Percentages from a filled annotation sheet");
  su->add_option("--sheet", su_sheet, "Annotated sheet (JSONL)")->required();
  su->add_option("--out", su_out, "Summary file (JSON)");

  // make-toy-data ----------------------------------------------------------
  std::string td_out;
  std::size_t td_clips = 16;
  std::uint64_t td_seed = 0;
  double td_test = 0.25;
  auto* td = app.add_subcommand("make-toy-data", "Write a small synthetic corpus and a matching config");
  td->add_option("--out", td_out, "Output directory")->required();
  td->add_option("--clips", td_clips, "Number of clips")->check(CLI::PositiveNumber);
  td->add_option("--seed", td_seed, "Corpus seed");
  td->add_option("--test-fraction", td_test, "Fraction of clips in the test split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*pre) {
    RunConfig cfg = pre_common.resolve();
    if (!pre_clips.empty()) cfg.data.clips = pre_clips;
    if (!pre_captions.empty()) cfg.data.captions = pre_captions;
    cfg.validate();
    RunDir run(pre_common.run_dir, cfg);
    const auto encoder = make_encoder(cfg.encoder);
    const auto lm = make_language_model(cfg.lm);
    const auto clips = clips_for(cfg);
    const auto captions = pretraining_captions(cfg);
    FeatureStore features(*encoder, clips);
    const auto digest = cfg.architecture_digest();
    TrainState state = pre_resume.empty() ? init_train_state(cfg, encoder->state_count(), encoder->dim())
                                          : load_checkpoint(pre_resume, digest, pre_force);
    if (!pre_resume.empty() && state.stage != Stage::pretrain)
      throw ConfigError(pre_resume + " is not a pre-training checkpoint");
    state = pretrain(captions, features, *lm, cfg, std::move(state),
                     make_hooks(run, pre_out, digest, cfg.trainer.log_every, pre_stop));
    std::cerr << "wrote " << pre_out << " (step " << state.step << ", adapter " << Digest::to_hex(state.trainable_digest())
              << ")\n";
    return kOk;
  }

  if (*ft) {
    RunConfig cfg = ft_common.resolve();
    if (!ft_clips.empty()) cfg.data.clips = ft_clips;
    if (!ft_qa.empty()) cfg.data.qa = ft_qa;
    cfg.validate();
    if (ft_init.empty() == ft_resume.empty()) throw ConfigError("finetune needs exactly one of --init or --resume");
    RunDir run(ft_common.run_dir, cfg);
    const auto encoder = make_encoder(cfg.encoder);
    const auto lm = make_language_model(cfg.lm);
    const auto clips = clips_for(cfg);
    const auto pairs = select_pairs(cfg, ft_partition);
    FeatureStore features(*encoder, clips);
    const auto digest = cfg.architecture_digest();
    const bool resume = !ft_resume.empty();
    TrainState init = load_checkpoint(resume ? ft_resume : ft_init, digest, ft_force);
    ReadStats stats;
    const TrainState state = finetune(pairs, features, *lm, cfg, std::move(init), resume,
                                      make_hooks(run, ft_out, digest, cfg.trainer.log_every, ft_stop), &stats);
    std::cerr << "read " << stats.short_records << " short and " << stats.long_records << " long Q&A records\n";
    std::cerr << "wrote " << ft_out << " (step " << state.step << ", adapter " << Digest::to_hex(state.trainable_digest())
              << ")\n";
    return kOk;
  }

  if (*pr) {
    RunConfig cfg = pr_common.resolve();
    if (!pr_clips.empty()) cfg.data.clips = pr_clips;
    if (!pr_qa.empty()) cfg.data.qa = pr_qa;
    if (!pr_captions.empty()) cfg.data.captions = pr_captions;
    cfg.validate();
    const auto decode = pr_decode.options();
    const TrainState st = load_for_inference(pr_ckpt, cfg, pr_force);
    const auto encoder = make_encoder(cfg.encoder);
    const auto lm = make_language_model(cfg.lm);
    const auto clips = clips_for(cfg);
    FeatureStore features(*encoder, clips);
    const auto tmpl = PromptTemplate::from_config(cfg.prompt);
    nlohmann::ordered_json row;
    std::string preds, refs;
    auto emit = [&](const std::string& clip_id, const std::string& question, const std::string& reference) {
      const auto g = describe(features.get(clip_id), st.adapter, st.layer_weights, *lm, tmpl, question, decode,
                              pr_decode.max_new);
      // Byte-level decoding can stop inside a multi-byte character.
      constexpr auto lossy = nlohmann::ordered_json::error_handler_t::replace;
      row = {{"clip_id", clip_id}, {"question", question}, {"text", g.text}};
      preds += row.dump(-1, ' ', false, lossy) + '\n';
      row = {{"clip_id", clip_id}, {"question", question}, {"text", reference}};
      refs += row.dump(-1, ' ', false, lossy) + '\n';
    };
    std::size_t n = 0;
    if (!pr_captions.empty()) {
      for (const auto& c : select_field(load_captions(cfg.data.captions), cfg.data.caption_field)) {
        if (!c.split.empty() && c.split != pr_split) continue;
        emit(c.clip_id, "", c.caption);
        ++n;
      }
    } else {
      for (const auto& p : select_split(select_pairs(cfg, pr_partition), parse_split(pr_split))) {
        emit(p.clip_id, p.question, p.answer);
        ++n;
      }
    }
    if (n == 0) throw DataError("no records in the " + pr_split + " split");
    write_text(pr_out, preds);
    if (!pr_ref_out.empty()) write_text(pr_ref_out, refs);
    std::cerr << "wrote " << n << " predictions to " << pr_out << '\n';
    return kOk;
  }

  if (*inf || *cap) {
    const bool is_cap = static_cast<bool>(*cap);
    RunConfig cfg = (is_cap ? cap_common : inf_common).resolve();
    const std::string& clips_path = is_cap ? cap_clips : inf_clips;
    if (!clips_path.empty()) cfg.data.clips = clips_path;
    cfg.validate();
    const auto decode = (is_cap ? cap_decode : inf_decode).options();
    const int max_new = (is_cap ? cap_decode : inf_decode).max_new;
    const TrainState st = load_for_inference(is_cap ? cap_ckpt : inf_ckpt, cfg, is_cap ? cap_force : inf_force);
    const auto encoder = make_encoder(cfg.encoder);
    const auto lm = make_language_model(cfg.lm);
    const auto clips = clips_for(cfg);
    FeatureStore features(*encoder, clips);
    std::string question = inf_question;
    if (is_cap) question = cap_layout == "qa" ? std::string(kCaptionQuestion) : std::string();
    else if (is_blank(question)) throw ConfigError("--question must not be empty");
    const auto g = describe(features.get(is_cap ? cap_clip : inf_clip), st.adapter, st.layer_weights, *lm,
                            PromptTemplate::from_config(cfg.prompt), question, decode, max_new);
    std::cout << g.text << '\n';
    return kOk;
  }

  if (*ev) {
    const auto preds = read_texts(ev_pred);
    const auto refs = read_texts(ev_ref);
    std::unique_ptr<metrics::Embedder> embedder;
    if (ev_vectors.empty()) embedder = std::make_unique<metrics::HashEmbedder>(ev_dim, 0);
    else embedder = std::make_unique<metrics::VectorFileEmbedder>(ev_vectors);
    const auto report = metrics::evaluate_corpus(preds, refs, *embedder);
    if (!ev_out.empty()) write_text(ev_out, report.to_json().dump(2) + '\n');
    std::cout << report.table();
    return kOk;
  }

  if (*dg) {
    const auto captions = load_captions(dg_captions);
    const QAVersion version = dg_version == "v1" ? QAVersion::short_form : QAVersion::long_form;
    std::unique_ptr<datagen::ChatClient> client;
    if (dg_client == "mock") client = std::make_unique<datagen::MockChatClient>();
    else client = std::make_unique<datagen::HttpChatClient>(dg_http);
    datagen::PipelineOptions opts;
    opts.seed = dg_seed;
    opts.verify = !dg_no_verify;
    opts.concurrency = dg_concurrency;
    opts.max_requests_per_s = dg_rate;
    const auto result = datagen::run_pipeline(captions, version, *client, opts);
    save_dataset(result.pairs, dg_out);
    const auto report = result.report.to_json().dump(2);
    if (dg_report.empty()) std::cerr << report << '\n';
    else write_text(dg_report, report + '\n');
    std::cerr << "kept " << result.report.kept << " of " << result.report.generated << " pairs\n";
    return kOk;
  }

  if (*as) {
    const auto sheet = datagen::sample_audit(load_qa(as_data), as_fraction, as_seed);
    datagen::save_audit_sheet(sheet, as_out);
    std::cerr << "wrote " << sheet.size() << " rows to " << as_out << '\n';
    return kOk;
  }

  if (*su) {
    const auto summary = datagen::summarize_audit(datagen::load_audit_sheet(su_sheet));
    if (summary.empty()) throw DataError("sheet " + su_sheet + " has no rows");
    if (!su_out.empty()) write_text(su_out, datagen::to_json(summary).dump(2) + '\n');
    std::cout << datagen::format_audit_table(summary);
    return kOk;
  }

  if (*td) {
    const auto corpus = make_toy_corpus(td_clips, td_seed, td_test);
    const fs::path dir(td_out);
    fs::create_directories(dir);
    save_clips(corpus.clips, dir / "clips.jsonl");
    save_dataset(corpus.captions, dir / "captions.jsonl");
    save_dataset(corpus.qa, dir / "qa.jsonl");
    RunConfig cfg;
    cfg.data.clips = "clips.jsonl";
    cfg.data.captions = "captions.jsonl";
    cfg.data.qa = "qa.jsonl";
    // A recipe the toy stack can fit in a few hundred steps.
    cfg.encoder.dim = 64;
    cfg.encoder.frames = 64;
    cfg.lm.dim = 64;
    cfg.lm.heads = 4;
    cfg.trainer.lr = 0.02;
    cfg.trainer.weight_decay = 0.0;
    cfg.trainer.steps = 500;
    cfg.trainer.log_every = 50;
    cfg.save(dir / "config.json");
    std::cerr << "wrote " << corpus.clips.size() << " clips, " << corpus.captions.size() << " captions and "
              << corpus.qa.size() << " Q&A pairs to " << dir.string() << '\n';
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
