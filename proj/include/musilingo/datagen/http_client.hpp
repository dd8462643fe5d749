// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// OpenAI-compatible chat-completions client. HTTPS endpoints need the
// including target to define CPPHTTPLIB_OPENSSL_SUPPORT and link OpenSSL.

#pragma once

#include "musilingo/datagen/client.hpp"

#include "httplib.h"

#include <cstdlib>
#include <string>

namespace musilingo::datagen {

struct HttpClientOptions {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";  // name of the variable, never its value
  double temperature = 1.0;
  int timeout_s = 60;
};

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientOptions opts) : opts_(std::move(opts)) {
    const auto scheme_end = opts_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + opts_.endpoint);
    const auto path_begin = opts_.endpoint.find('/', scheme_end + 3);
    base_ = opts_.endpoint.substr(0, path_begin);
    path_ = path_begin == std::string::npos ? "/" : opts_.endpoint.substr(path_begin);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (opts_.endpoint.starts_with("https://"))
      throw ConfigError("this build has no TLS support; use an http:// endpoint");
#endif
    if (!opts_.api_key_env.empty()) {
      const char* key = std::getenv(opts_.api_key_env.c_str());
      if (key == nullptr || *key == '\0')
        throw ConfigError("environment variable " + opts_.api_key_env + " is not set");
      key_ = key;
    }
  }

  std::string complete(const ChatPrompt& prompt, std::uint64_t request_seed) override {
    httplib::Client cli(base_);
    cli.set_connection_timeout(opts_.timeout_s, 0);
    cli.set_read_timeout(opts_.timeout_s, 0);
    cli.set_write_timeout(opts_.timeout_s, 0);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);

    nlohmann::json body = {
        {"model", opts_.model},
        {"temperature", opts_.temperature},
        // Most endpoints accept int64 seeds; keep it in range.
        {"seed", static_cast<std::int64_t>(request_seed >> 1)},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", prompt.system}},
                                {{"role", "user"}, {"content", prompt.user}}})},
    };
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw ClientError("request to " + base_ + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw ClientError("request to " + base_ + " returned HTTP " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ClientError("unexpected response shape from " + base_);
    }
  }

  std::string model_name() const override { return opts_.model; }

 private:
  HttpClientOptions opts_;
  std::string base_;
  std::string path_;
  std::string key_;
};

}  // namespace musilingo::datagen
