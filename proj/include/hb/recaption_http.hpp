#pragma once

// Recaption client for a local HTTP text-generation endpoint.
// POST {"prompt": <instruction>} -> {"text": <reply>}

#include <chrono>
#include <stdexcept>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hb/data_pipeline.hpp"
#include "hb/errors.hpp"

namespace hb {

class HttpRecaptionClient final : public RecaptionClient {
 public:
  /// `endpoint` like "http://127.0.0.1:8080/generate".
  explicit HttpRecaptionClient(const std::string& endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(5))
      : timeout_(timeout) {
    const std::string scheme = "http://";
    if (endpoint.rfind(scheme, 0) != 0) throw ConfigError("recaption endpoint must start with http://: " + endpoint);
    const auto slash = endpoint.find('/', scheme.size());
    host_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
  }

  std::string generate(const std::string& instruction) override {
    httplib::Client cli(host_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    const std::string body = nlohmann::json{{"prompt", instruction}}.dump();
    auto res = cli.Post(path_, body, "application/json");
    if (!res) throw std::runtime_error("request to " + host_ + path_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("recaption service returned HTTP " + std::to_string(res->status));
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string())
      throw std::runtime_error("recaption reply lacks a \"text\" string");
    return reply["text"].get<std::string>();
  }

  const std::string& host() const { return host_; }
  const std::string& path() const { return path_; }

 private:
  std::string host_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

}  // namespace hb
