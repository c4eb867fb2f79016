#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace semstab::mock {

// Deterministic scriptable stand-in for an OpenAI-compatible inference
// endpoint. With jitter off, the response is a pure function of the request
// body; jitter mode appends a per-request counter so repeated identical
// requests produce distinct outputs (the determinism audit's failure path).
struct MockScript {
  struct Mapping {
    bool is_regex = false;
    std::string matcher;
    std::string response;
    std::shared_ptr<const std::regex> compiled;  // regex matchers only
  };

  std::vector<Mapping> mappings;  // first match wins
  std::string default_response = "unscripted";
  bool jitter = false;
  int delay_ms = 0;

  static MockScript from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;

  static MockScript::Mapping exact(std::string prompt, std::string response);
  static MockScript::Mapping pattern(std::string regex_pattern, std::string response);

  std::string resolve(const std::string& prompt) const;
};

// Decode parameters as they arrived on the wire, null when absent.
struct ParamsLogEntry {
  std::string path;
  std::string model;
  std::string prompt;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> max_tokens;

  nlohmann::json to_json() const;
};

class MockServer {
 public:
  // port 0 picks a free ephemeral port. Throws an endpoint error when the
  // requested port cannot be bound.
  MockServer(MockScript script, int port);
  ~MockServer();

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::vector<ParamsLogEntry> params_log() const;
  nlohmann::json params_log_json() const;

  void stop();

 private:
  void handle_completion(bool chat, const std::string& body, std::string& out_body, int& out_status);

  MockScript script_;
  int port_ = 0;
  std::unique_ptr<httplib::Server> server_;
  std::thread serve_thread_;
  std::atomic<std::uint64_t> request_counter_{0};
  mutable std::mutex log_mutex_;
  std::vector<ParamsLogEntry> log_;
  std::atomic<bool> stopped_{false};
};

}  // namespace semstab::mock
