// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0

#include "musilingo/datagen/http_client.hpp"
#include "musilingo/musilingo.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

namespace fs = std::filesystem;
using namespace musilingo;
using namespace musilingo::datagen;

namespace {

std::string v1_reply(const std::string& tag = "") {
  nlohmann::json j;
  for (int i = 1; i <= 5; ++i) {
    j["Question " + std::to_string(i)] = "Question " + std::to_string(i) + tag + "?";
    j["Answer " + std::to_string(i)] = "Answer " + std::to_string(i) + tag + ".";
  }
  return j.dump();
}

std::vector<CaptionRecord> captions(std::size_t n) {
  std::vector<CaptionRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"clip" + std::to_string(i), "A calm piano piece number " + std::to_string(i) + ".",
                   "caption_writing", ""});
  return out;
}

PipelineOptions instant() {
  PipelineOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

QAPair pair(std::string q, std::string a, QAVersion v = QAVersion::short_form) {
  QAPair p;
  p.clip_id = "c";
  p.question = std::move(q);
  p.answer = std::move(a);
  p.version = v;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prompts

TEST(Prompts, ShortFormTextIsVerbatim) {
  const auto p = render_prompt("calm piano.", QAVersion::short_form);
  EXPECT_NE(p.system.find("generate five question-answer pairs"), std::string::npos);
  EXPECT_NE(p.system.find("The cation will be delimited with #### characters."), std::string::npos);
  EXPECT_NE(p.system.find("the following four keys"), std::string::npos);
  EXPECT_TRUE(p.system.ends_with("'Question 5', 'Answer 5'"));
  EXPECT_EQ(p.user, "####calm piano.####");
}

TEST(Prompts, LongFormTextIsVerbatim) {
  const auto p = render_prompt("calm piano.", QAVersion::long_form);
  EXPECT_NE(p.system.find("a minimum of 100 words and a maximum of 200 words"), std::string::npos);
  EXPECT_NE(p.system.find("- Can you provide a summary of the music?"), std::string::npos);
  EXPECT_NE(p.system.find("- What are the main features of the music?"), std::string::npos);
  EXPECT_NE(p.system.find("- Could you briefly describe the music content?"), std::string::npos);
  EXPECT_TRUE(p.system.ends_with("\"Q\" for question and \"A\" for answer."));
  EXPECT_EQ(p.user, "####calm piano.####");
}

TEST(Prompts, VerificationEmbedsPair) {
  const auto p = render_verification_prompt("calm piano.", pair("Mood?", "Calm."));
  EXPECT_TRUE(p.system.starts_with("Does this question-answer pair come from the context delimited with ####?"));
  EXPECT_EQ(p.user, "####calm piano.####\n\nQuestion: Mood?\nAnswer: Calm.");
}

TEST(Prompts, BlankCaptionIsRejected) {
  EXPECT_THROW(render_prompt("   ", QAVersion::short_form), DataError);
  EXPECT_EQ(pairs_per_caption(QAVersion::short_form), 5);
  EXPECT_EQ(pairs_per_caption(QAVersion::long_form), 1);
  EXPECT_NE(prompt_hash(QAVersion::short_form), prompt_hash(QAVersion::long_form));
}

// ---------------------------------------------------------------------------
// Parsing and filtering

TEST(ParseResponse, AcceptsShortForm) {
  const auto o = parse_response(v1_reply(), QAVersion::short_form);
  ASSERT_EQ(o.parsed.size(), 5u);
  EXPECT_EQ(o.parsed[2].question, "Question 3?");
  EXPECT_EQ(o.parsed[2].answer, "Answer 3.");
  EXPECT_TRUE(o.drop_reasons.empty());
}

TEST(ParseResponse, FindsObjectInsideProse) {
  const auto o = parse_response("Sure! Here it is:\n```json\n{\"Q\": \"What is it {really}?\", \"A\": \"A song.\"}\n```",
                                QAVersion::long_form);
  ASSERT_EQ(o.parsed.size(), 1u);
  EXPECT_EQ(o.parsed[0].question, "What is it {really}?");
}

TEST(ParseResponse, ReportsFailures) {
  EXPECT_EQ(parse_response("no json here", QAVersion::long_form).drop_reasons,
            std::set<DropReason>{DropReason::parse_error});
  EXPECT_EQ(parse_response("{\"Q\": \"x?\"", QAVersion::long_form).drop_reasons,
            std::set<DropReason>{DropReason::parse_error});
  EXPECT_EQ(parse_response("{\"Q\": \"x?\"}", QAVersion::long_form).drop_reasons,
            std::set<DropReason>{DropReason::bad_keys});
  EXPECT_EQ(parse_response("{\"Q\": \"x?\", \"A\": 3}", QAVersion::long_form).drop_reasons,
            std::set<DropReason>{DropReason::bad_keys});
  EXPECT_EQ(parse_response("{\"Q\": \"x?\", \"A\": \"y.\", \"B\": \"z.\"}", QAVersion::long_form).drop_reasons,
            std::set<DropReason>{DropReason::bad_keys});
  auto four = nlohmann::json::parse(v1_reply());
  four.erase("Answer 5");
  EXPECT_TRUE(parse_response(four.dump(), QAVersion::short_form).parsed.empty());
}

TEST(Hygiene, Rules) {
  EXPECT_FALSE(hygiene_filter(pair("Mood?", "Calm.")));
  EXPECT_FALSE(hygiene_filter(pair("Mood?", "Is it calm?")));
  EXPECT_FALSE(hygiene_filter(pair("Mood?", "Very calm!  ")));
  EXPECT_EQ(hygiene_filter(pair("Mood?", "Calm")), DropReason::no_terminal_punct);
  EXPECT_EQ(hygiene_filter(pair("", "Calm.")), DropReason::empty_field);
  EXPECT_EQ(hygiene_filter(pair("Mood?", "  ")), DropReason::empty_field);
}

TEST(Verdict, LeadingYesOrNo) {
  EXPECT_EQ(parse_verdict("Yes."), true);
  EXPECT_EQ(parse_verdict("  **yes**, it does"), true);
  EXPECT_EQ(parse_verdict("\"YES\""), true);
  EXPECT_EQ(parse_verdict("No, it does not."), false);
  EXPECT_EQ(parse_verdict("no"), false);
  EXPECT_EQ(parse_verdict("Yesterday"), std::nullopt);
  EXPECT_EQ(parse_verdict("Nothing"), std::nullopt);
  EXPECT_EQ(parse_verdict("Maybe"), std::nullopt);
  EXPECT_EQ(parse_verdict(""), std::nullopt);

  ScriptedClient maybe([](const ChatPrompt&, int) { return std::string("It might."); });
  EXPECT_EQ(verify_pair("c.", pair("q?", "a."), maybe, 0, {}, [](auto) {}), Verdict::negative);
}

TEST(WordCount, Whitespace) {
  EXPECT_EQ(word_count(""), 0u);
  EXPECT_EQ(word_count("  a  b\tc\nd "), 4u);
}

// ---------------------------------------------------------------------------
// Retries

TEST(Retry, TimeoutsExhaustAttemptsWithBackoff) {
  ScriptedClient always_fails([](const ChatPrompt&, int) -> std::string { throw ClientError("timeout"); });
  std::vector<std::int64_t> sleeps;
  const Sleeper sleeper = [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  EXPECT_THROW(complete_with_retries(always_fails, {"s", "u"}, 0, RetryPolicy{}, sleeper), ClientError);
  EXPECT_EQ(always_fails.calls(), 3u);
  EXPECT_EQ(sleeps, (std::vector<std::int64_t>{500, 1000}));
}

TEST(Retry, RecoversOnLaterAttempt) {
  ScriptedClient flaky([](const ChatPrompt&, int attempt) -> std::string {
    if (attempt < 3) throw ClientError("busy");
    return "ok";
  });
  std::vector<std::int64_t> sleeps;
  EXPECT_EQ(complete_with_retries(flaky, {"s", "u"}, 0, RetryPolicy{}, [&](auto d) { sleeps.push_back(d.count()); }),
            "ok");
  EXPECT_EQ(sleeps.size(), 2u);
  EXPECT_THROW(complete_with_retries(flaky, {"s", "u"}, 0, RetryPolicy{0, {}, 2.0}, {}), ConfigError);
}

TEST(Retry, PipelineCountsExhaustedRequestsAsRuntimeErrors) {
  ScriptedClient always_fails([](const ChatPrompt&, int) -> std::string { throw ClientError("timeout"); });
  const auto r = run_pipeline(captions(2), QAVersion::short_form, always_fails, instant());
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.report.dropped.at(DropReason::runtime_error), 10u);
  EXPECT_EQ(always_fails.calls(), 6u);
}

// ---------------------------------------------------------------------------
// Pipeline

TEST(Pipeline, MockClientKeepsEveryShortFormPair) {
  MockChatClient mock;
  const auto r = run_pipeline(captions(10), QAVersion::short_form, mock, instant());
  EXPECT_EQ(r.report.generated, 50u);
  EXPECT_EQ(r.report.kept, 50u);
  EXPECT_EQ(r.pairs.size(), 50u);
  EXPECT_EQ(r.report.dropped_total(), 0u);
  for (const auto& p : r.pairs) {
    EXPECT_EQ(p.provenance.generator_model, "mock");
    EXPECT_EQ(p.provenance.prompt_hash, prompt_hash(QAVersion::short_form));
    EXPECT_FALSE(hygiene_filter(p));
  }
}

TEST(Pipeline, LongFormRecordsWordCounts) {
  MockChatClient mock;
  const auto r = run_pipeline(captions(3), QAVersion::long_form, mock, instant());
  EXPECT_EQ(r.report.generated, 3u);
  ASSERT_EQ(r.report.answer_words.size(), r.pairs.size());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) EXPECT_EQ(r.report.answer_words[i], word_count(r.pairs[i].answer));
  EXPECT_TRUE(r.report.to_json().contains("answer_words"));
}

TEST(Pipeline, BookkeepingBalances) {
  // Caption i: 0 valid, 1 unparseable, 2 wrong keys, 3 one unpunctuated answer,
  // 4 rejected by verification, 5 repeats a question.
  ScriptedClient client([](const ChatPrompt& p, int) -> std::string {
    if (p.system.starts_with(kVerificationQuestion))
      return p.user.find("number 4.") != std::string::npos ? "No." : "Yes.";
    const auto caption = MockChatClient::extract_caption(p.user);
    const char kind = caption[caption.size() - 2];
    auto j = nlohmann::json::parse(v1_reply());
    switch (kind) {
      case '1': return "I cannot help with that";
      case '2': j.erase("Question 2"); break;
      case '3': j["Answer 4"] = "no period"; break;
      case '5': j["Question 2"] = "Question 1?"; break;
      default: break;
    }
    return j.dump();
  });
  const auto r = run_pipeline(captions(6), QAVersion::short_form, client, instant());
  const auto& d = r.report.dropped;
  EXPECT_EQ(r.report.generated, 30u);
  EXPECT_EQ(d.at(DropReason::parse_error), 5u);
  EXPECT_EQ(d.at(DropReason::bad_keys), 5u);
  EXPECT_EQ(d.at(DropReason::no_terminal_punct), 1u);
  EXPECT_EQ(d.at(DropReason::failed_verification), 5u);
  EXPECT_EQ(d.at(DropReason::duplicate), 1u);
  EXPECT_EQ(r.report.kept, 13u);
  EXPECT_EQ(r.report.kept + r.report.dropped_total(), r.report.generated);
  const auto j = r.report.to_json();
  EXPECT_EQ(j["dropped_by_reason"].size(), 7u);
  EXPECT_EQ(j["dropped_by_reason"]["empty_field"], 0);
}

TEST(Pipeline, VerificationCanBeSkipped) {
  ScriptedClient client([](const ChatPrompt& p, int) -> std::string {
    if (p.system.starts_with(kVerificationQuestion)) return "No.";
    return v1_reply();
  });
  auto opts = instant();
  opts.verify = false;
  EXPECT_EQ(run_pipeline(captions(2), QAVersion::short_form, client, opts).report.kept, 10u);
  EXPECT_EQ(client.calls(), 2u);
}

TEST(Pipeline, ConcurrencyKeepsCaptionOrder) {
  MockChatClient mock;
  const auto serial = run_pipeline(captions(24), QAVersion::short_form, mock, instant());
  auto opts = instant();
  opts.concurrency = 4;
  const auto parallel = run_pipeline(captions(24), QAVersion::short_form, mock, opts);
  EXPECT_EQ(serial.pairs, parallel.pairs);
  EXPECT_EQ(serial.report.to_json(), parallel.report.to_json());
  opts.concurrency = 0;
  EXPECT_THROW(run_pipeline(captions(1), QAVersion::short_form, mock, opts), ConfigError);
}

TEST(Pipeline, SplitIsCarriedFromCaption) {
  MockChatClient mock;
  auto caps = captions(2);
  caps[1].split = "test";
  const auto r = run_pipeline(caps, QAVersion::long_form, mock, instant());
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].split, Split::train);
  EXPECT_EQ(r.pairs[1].split, Split::test);
}

// ---------------------------------------------------------------------------
// Audit

TEST(Audit, SampleSizeIsOnePercent) {
  EXPECT_EQ(sample_indices(600, 0.01, 1).size(), 6u);
  EXPECT_EQ(sample_indices(60493, 0.01, 1).size(), 604u);
  EXPECT_EQ(sample_indices(100, 0.07, 1).size(), 7u);
  EXPECT_EQ(sample_indices(50, 0.01, 1).size(), 0u);
  EXPECT_THROW(sample_indices(10, 0.0, 1), ConfigError);
  EXPECT_THROW(sample_indices(10, 1.5, 1), ConfigError);
  EXPECT_THROW(sample_indices(0, 0.5, 1), DataError);
}

TEST(Audit, SampleIsSeededDistinctAndSorted) {
  const auto a = sample_indices(1000, 0.05, 3), b = sample_indices(1000, 0.05, 3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample_indices(1000, 0.05, 4));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_LT(a.back(), 1000u);
  EXPECT_EQ(sample_indices(7, 1.0, 9), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(Audit, JudgementParsing) {
  EXPECT_EQ(parse_judgement(" Y "), Judgement::yes);
  EXPECT_EQ(parse_judgement("unsure"), Judgement::unsure);
  EXPECT_EQ(parse_judgement("N"), Judgement::no);
  EXPECT_EQ(parse_judgement(""), std::nullopt);
  EXPECT_THROW(parse_judgement("perhaps"), DataError);
  EXPECT_EQ(parse_output_quality("Excellence"), OutputQuality::excellent);
  EXPECT_EQ(parse_output_quality("fair"), OutputQuality::pass);
  EXPECT_EQ(parse_output_quality("FAIL"), OutputQuality::fail);
  EXPECT_THROW(parse_output_quality("great"), DataError);
}

TEST(Audit, SummaryUsesAnnotatedRowsPerCriterion) {
  std::vector<AuditRow> rows;
  auto row = [&](QAVersion v, std::string c, std::string f, std::string p, std::string q) {
    rows.push_back({pair("q?", "a.", v), std::move(c), std::move(f), std::move(p), std::move(q)});
  };
  row(QAVersion::short_form, "y", "y", "n", "excellent");
  row(QAVersion::short_form, "y", "n", "u", "pass");
  row(QAVersion::short_form, "n", "", "y", "fail");
  row(QAVersion::short_form, "y", "y", "y", "");
  row(QAVersion::long_form, "y", "y", "y", "excellent");
  const auto s = summarize_audit(rows);
  const auto& sh = s.at(QAVersion::short_form);
  EXPECT_EQ(sh.rows, 4u);
  EXPECT_DOUBLE_EQ(sh.clarity.percent(), 75.0);
  EXPECT_DOUBLE_EQ(sh.feasibility.percent(), 200.0 / 3.0);
  EXPECT_DOUBLE_EQ(sh.practicality.percent(), 50.0);
  EXPECT_DOUBLE_EQ(sh.excellent.percent(), 100.0 / 3.0);
  EXPECT_DOUBLE_EQ(sh.not_failed.percent(), 200.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.at(QAVersion::long_form).clarity.percent(), 100.0);
  const auto table = format_audit_table(s);
  EXPECT_NE(table.find("MI short"), std::string::npos);
  EXPECT_NE(table.find("MI long"), std::string::npos);
}

TEST(Audit, SheetRoundTrip) {
  const fs::path path = fs::temp_directory_path() / "musilingo_audit_sheet.jsonl";
  std::vector<QAPair> data;
  for (int i = 0; i < 300; ++i) {
    auto p = pair("Question " + std::to_string(i) + "?", "Answer.");
    p.clip_id = "clip" + std::to_string(i);
    data.push_back(p);
  }
  const auto rows = sample_audit(data, 0.01, 5);
  ASSERT_EQ(rows.size(), 3u);
  save_audit_sheet(rows, path);
  const auto back = load_audit_sheet(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i].pair, rows[i].pair);
  {
    std::ofstream(path) << "{\"clip_id\": \"c\"}\n";
  }
  EXPECT_THROW(load_audit_sheet(path), DataError);
  fs::remove(path);
}

// ---------------------------------------------------------------------------
// HTTP client against a local server

class LocalServer : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      auth_ = req.get_header_value("Authorization");
      body_ = nlohmann::json::parse(req.body);
      if (fail_) {
        res.status = 503;
        return;
      }
      nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "Yes."}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    ::setenv("MUSILINGO_TEST_KEY", "sk-test-secret", 1);
  }

  void TearDown() override {
    server_.stop();
    thread_.join();
    ::unsetenv("MUSILINGO_TEST_KEY");
  }

  HttpClientOptions options() const {
    HttpClientOptions o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    o.api_key_env = "MUSILINGO_TEST_KEY";
    o.timeout_s = 5;
    return o;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::atomic<bool> fail_{false};
  std::string auth_;
  nlohmann::json body_;
};

TEST_F(LocalServer, SendsChatRequest) {
  HttpChatClient client(options());
  EXPECT_EQ(client.complete({"system text", "user text"}, 42), "Yes.");
  EXPECT_EQ(auth_, "Bearer sk-test-secret");
  EXPECT_EQ(body_["model"], "gpt-4");
  EXPECT_EQ(body_["messages"][0]["role"], "system");
  EXPECT_EQ(body_["messages"][0]["content"], "system text");
  EXPECT_EQ(body_["messages"][1]["content"], "user text");
  EXPECT_EQ(body_["seed"], 21);
}

TEST_F(LocalServer, ServerErrorsAreRetriedAndNeverLeakTheKey) {
  fail_ = true;
  HttpChatClient client(options());
  try {
    complete_with_retries(client, {"s", "u"}, 0, RetryPolicy{}, [](auto) {});
    FAIL() << "expected ClientError";
  } catch (const ClientError& e) {
    EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("sk-test-secret"), std::string::npos);
  }
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(LocalServer, MissingKeyIsConfigError) {
  auto o = options();
  o.api_key_env = "MUSILINGO_TEST_KEY_UNSET";
  try {
    HttpChatClient client(o);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("MUSILINGO_TEST_KEY_UNSET"), std::string::npos);
  }
  o.endpoint = "127.0.0.1/no-scheme";
  EXPECT_THROW(HttpChatClient{o}, ConfigError);
}

TEST_F(LocalServer, UnreachableEndpointIsClientError) {
  auto o = options();
  o.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  o.timeout_s = 1;
  HttpChatClient client(o);
  EXPECT_THROW(client.complete({"s", "u"}, 0), ClientError);
}

TEST_F(LocalServer, DrivesThePipeline) {
  std::atomic<int> requests{0};
  server_.Post("/gen", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    const auto body = nlohmann::json::parse(req.body);
    const std::string system = body["messages"][0]["content"];
    const std::string content = system.starts_with(kVerificationQuestion) ? "Yes." : v1_reply();
    res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(), "application/json");
  });
  auto o = options();
  o.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/gen";
  HttpChatClient client(o);
  const auto r = run_pipeline(captions(2), QAVersion::short_form, client, instant());
  EXPECT_EQ(r.report.kept, 10u);
  EXPECT_EQ(requests.load(), 12);
}
