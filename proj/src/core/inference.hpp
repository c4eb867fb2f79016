#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace semstab::infer {

// Greedy decoding contract, enforced at the type level: temperature is 0 and
// top_p is 1 on every constructible instance, so no evaluation request can
// ever leave with sampling enabled.
class DecodeParams {
 public:
  static DecodeParams make(int max_tokens = 256, std::vector<std::string> stop_sequences = {},
                           std::optional<std::int64_t> seed = std::nullopt);

  static DecodeParams from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;

  double temperature() const { return 0.0; }
  double top_p() const { return 1.0; }
  int max_tokens() const { return max_tokens_; }
  const std::vector<std::string>& stop_sequences() const { return stop_sequences_; }
  std::optional<std::int64_t> seed() const { return seed_; }

 private:
  DecodeParams() = default;

  int max_tokens_ = 256;
  std::vector<std::string> stop_sequences_;
  std::optional<std::int64_t> seed_;
};

enum class ApiStyle { chat, completions };

struct EndpointConfig {
  std::string base_url;
  ApiStyle api = ApiStyle::chat;
  std::string model;
  std::string path;  // empty -> default for the api style
  std::string auth_env = "SEMSTAB_API_KEY";
  int timeout_ms = 30000;
  int retries = 3;       // retry budget beyond the first attempt
  int backoff_ms = 250;  // exponential base
  int max_in_flight = 4;

  static EndpointConfig from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;

  std::string request_path() const;
  // Stable identity of (base_url, api, model); part of the cache key.
  std::string fingerprint() const;
};

struct ResponseRecord {
  std::string prompt_text;
  std::string raw_output;
  std::string model_id;
  std::string endpoint_fingerprint;
  nlohmann::json decode_params;
  double latency_ms = 0.0;
  bool cached = false;

  nlohmann::json to_json() const;
  static ResponseRecord from_json(const nlohmann::json& spec);
};

// Content-addressed on-disk cache: one JSON file per entry named by the hex
// digest of the cache key, plus an append-only index. A corrupt entry
// invalidates only itself.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string cache_key(const EndpointConfig& endpoint, const DecodeParams& params,
                               std::string_view prompt);

  std::optional<ResponseRecord> lookup(const std::string& key) const;
  void store(const std::string& key, const ResponseRecord& record);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

struct AuditReport {
  int samples = 0;
  int repeats = 0;
  std::vector<std::string> mismatched_prompts;

  bool passed() const { return mismatched_prompts.empty(); }
  nlohmann::json to_json() const;
};

class Client {
 public:
  Client(EndpointConfig endpoint, std::shared_ptr<ResponseCache> cache);
  ~Client();

  const EndpointConfig& endpoint() const { return endpoint_; }

  // Greedy completion. Consults the cache first unless bypassed; transient
  // failures (connect errors, timeouts, 429, 5xx) retry with exponential
  // backoff up to the configured budget.
  ResponseRecord complete(std::string_view prompt, const DecodeParams& params, bool bypass_cache = false);

  // Generation-path request with caller-supplied sampling parameters (used
  // by the LLM paraphrase provider, where nonzero temperature is allowed).
  // Never cached and never greedy-pinned; evaluation decoding must not use
  // this entry point.
  std::string generate(std::string_view prompt, const nlohmann::json& sampling_params);

  // Completes each sample prompt `repeats` times with the cache bypassed and
  // reports prompts whose outputs differ across repeats.
  AuditReport determinism_audit(std::span<const std::string> prompts, const DecodeParams& params,
                                int repeats);

 private:
  std::string post_completion(std::string_view prompt, const nlohmann::json& wire_params,
                              double* latency_ms);

  EndpointConfig endpoint_;
  std::shared_ptr<ResponseCache> cache_;
  std::unique_ptr<class InFlightGate> gate_;
};

}  // namespace semstab::infer
