#include "core/inference.hpp"

#include <chrono>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/jsonio.hpp"

namespace semstab::infer {

namespace {

constexpr std::string_view kChatPath = "/v1/chat/completions";
constexpr std::string_view kCompletionsPath = "/v1/completions";

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

// Bounds concurrent in-flight HTTP requests across all threads of one run.
class InFlightGate {
 public:
  explicit InFlightGate(int limit) : sem_(limit > 0 ? limit : 1) {}

  class Slot {
   public:
    explicit Slot(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
    ~Slot() { sem_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    std::counting_semaphore<>& sem_;
  };

  Slot acquire() { return Slot(sem_); }

 private:
  std::counting_semaphore<> sem_;
};

DecodeParams DecodeParams::make(int max_tokens, std::vector<std::string> stop_sequences,
                                std::optional<std::int64_t> seed) {
  if (max_tokens < 1) raise_config("decode.max_tokens must be >= 1");
  DecodeParams params;
  params.max_tokens_ = max_tokens;
  params.stop_sequences_ = std::move(stop_sequences);
  params.seed_ = seed;
  return params;
}

DecodeParams DecodeParams::from_json(const nlohmann::json& spec) {
  if (!spec.is_object()) raise_config("decode: expected an object");
  if (spec.contains("temperature") && spec.at("temperature").get<double>() != 0.0) {
    raise_config("decode.temperature is fixed at 0; greedy decoding is not configurable");
  }
  if (spec.contains("top_p") && spec.at("top_p").get<double>() != 1.0) {
    raise_config("decode.top_p is fixed at 1; greedy decoding is not configurable");
  }
  std::optional<std::int64_t> seed;
  if (spec.contains("seed") && !spec.at("seed").is_null()) seed = spec.at("seed").get<std::int64_t>();
  return make(spec.value("max_tokens", 256),
              spec.value("stop", std::vector<std::string>{}), seed);
}

nlohmann::json DecodeParams::to_json() const {
  nlohmann::json out{{"temperature", 0.0}, {"top_p", 1.0}, {"max_tokens", max_tokens_}};
  if (!stop_sequences_.empty()) out["stop"] = stop_sequences_;
  if (seed_) out["seed"] = *seed_;
  return out;
}

EndpointConfig EndpointConfig::from_json(const nlohmann::json& spec) {
  EndpointConfig cfg;
  cfg.base_url = require_field(spec, "base_url", "endpoint").get<std::string>();
  const std::string api = spec.value("api", "chat");
  if (api == "chat") {
    cfg.api = ApiStyle::chat;
  } else if (api == "completions") {
    cfg.api = ApiStyle::completions;
  } else {
    raise_config("endpoint.api must be \"chat\" or \"completions\"");
  }
  cfg.model = require_field(spec, "model", "endpoint").get<std::string>();
  cfg.path = spec.value("path", "");
  cfg.auth_env = spec.value("auth_env", "SEMSTAB_API_KEY");
  cfg.timeout_ms = spec.value("timeout_ms", 30000);
  cfg.retries = spec.value("retries", 3);
  cfg.backoff_ms = spec.value("backoff_ms", 250);
  cfg.max_in_flight = spec.value("max_in_flight", 4);
  if (cfg.retries < 0) raise_config("endpoint.retries must be >= 0");
  if (cfg.max_in_flight < 1) raise_config("endpoint.max_in_flight must be >= 1");
  return cfg;
}

nlohmann::json EndpointConfig::to_json() const {
  return {{"base_url", base_url},
          {"api", api == ApiStyle::chat ? "chat" : "completions"},
          {"model", model},
          {"path", path},
          {"auth_env", auth_env},
          {"timeout_ms", timeout_ms},
          {"retries", retries},
          {"backoff_ms", backoff_ms},
          {"max_in_flight", max_in_flight}};
}

std::string EndpointConfig::request_path() const {
  if (!path.empty()) return path;
  return std::string(api == ApiStyle::chat ? kChatPath : kCompletionsPath);
}

std::string EndpointConfig::fingerprint() const {
  return sha256_hex(base_url + '\0' + request_path() + '\0' + model).substr(0, 16);
}

nlohmann::json ResponseRecord::to_json() const {
  return {{"prompt_text", prompt_text},
          {"raw_output", raw_output},
          {"model_id", model_id},
          {"endpoint_fingerprint", endpoint_fingerprint},
          {"decode_params", decode_params},
          {"latency_ms", latency_ms},
          {"cached", cached}};
}

ResponseRecord ResponseRecord::from_json(const nlohmann::json& spec) {
  ResponseRecord rec;
  rec.prompt_text = require_field(spec, "prompt_text", "response record").get<std::string>();
  rec.raw_output = require_field(spec, "raw_output", "response record").get<std::string>();
  rec.model_id = spec.value("model_id", "");
  rec.endpoint_fingerprint = spec.value("endpoint_fingerprint", "");
  if (spec.contains("decode_params")) rec.decode_params = spec.at("decode_params");
  rec.latency_ms = spec.value("latency_ms", 0.0);
  rec.cached = spec.value("cached", false);
  return rec;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::cache_key(const EndpointConfig& endpoint, const DecodeParams& params,
                                     std::string_view prompt) {
  std::string material = endpoint.fingerprint();
  material += '\0';
  material += endpoint.model;
  material += '\0';
  material += params.to_json().dump();
  material += '\0';
  material += prompt;
  return sha256_hex(material);
}

std::optional<ResponseRecord> ResponseCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto path = dir_ / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    return ResponseRecord::from_json(load_json_file(path));
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry: treat as a miss
  }
}

void ResponseCache::store(const std::string& key, const ResponseRecord& record) {
  std::unique_lock lock(mutex_);
  const auto path = dir_ / (key + ".json");
  const auto tmp = dir_ / (key + ".tmp");
  write_file(tmp, record.to_json().dump(2));
  std::filesystem::rename(tmp, path);
  std::ofstream index(dir_ / "index.jsonl", std::ios::app);
  index << nlohmann::json{{"key", key}, {"file", key + ".json"}}.dump() << '\n';
}

nlohmann::json AuditReport::to_json() const {
  return {{"samples", samples},
          {"repeats", repeats},
          {"mismatched_prompts", mismatched_prompts},
          {"passed", passed()}};
}

Client::Client(EndpointConfig endpoint, std::shared_ptr<ResponseCache> cache)
    : endpoint_(std::move(endpoint)),
      cache_(std::move(cache)),
      gate_(std::make_unique<InFlightGate>(endpoint_.max_in_flight)) {}

Client::~Client() = default;

std::string Client::post_completion(std::string_view prompt, const nlohmann::json& wire_params,
                                    double* latency_ms) {
  nlohmann::json body = wire_params;
  body["model"] = endpoint_.model;
  if (endpoint_.api == ApiStyle::chat) {
    body["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", std::string(prompt)}}});
  } else {
    body["prompt"] = std::string(prompt);
  }
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!endpoint_.auth_env.empty()) {
    if (const char* token = std::getenv(endpoint_.auth_env.c_str()); token != nullptr && *token != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  std::string last_failure = "no attempt made";
  const int attempts = 1 + endpoint_.retries;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const auto delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(endpoint_.backoff_ms) * (std::int64_t{1} << (attempt - 1)));
      std::this_thread::sleep_for(std::min(delay, std::chrono::milliseconds(5000)));
    }

    auto slot = gate_->acquire();
    httplib::Client http(endpoint_.base_url);
    http.set_connection_timeout(std::chrono::milliseconds(endpoint_.timeout_ms));
    http.set_read_timeout(std::chrono::milliseconds(endpoint_.timeout_ms));
    http.set_write_timeout(std::chrono::milliseconds(endpoint_.timeout_ms));

    const auto started = std::chrono::steady_clock::now();
    auto result = http.Post(endpoint_.request_path(), headers, payload, "application/json");
    const auto elapsed = std::chrono::duration<double, std::milli>(
        std::chrono::steady_clock::now() - started);
    if (latency_ms != nullptr) *latency_ms = elapsed.count();

    if (!result) {
      last_failure = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (retryable_status(result->status)) {
      last_failure = "HTTP status " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      raise_endpoint("endpoint returned HTTP " + std::to_string(result->status) + ": " +
                     result->body.substr(0, 200));
    }

    nlohmann::json parsed = nlohmann::json::parse(result->body, nullptr, false);
    if (parsed.is_discarded()) raise_endpoint("protocol error: response body is not JSON");
    try {
      const auto& choice = parsed.at("choices").at(0);
      if (endpoint_.api == ApiStyle::chat) {
        return choice.at("message").at("content").get<std::string>();
      }
      return choice.at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      raise_endpoint("protocol error: response JSON lacks choices[0] content");
    }
  }
  raise_endpoint("endpoint failed after " + std::to_string(attempts) + " attempts; last: " +
                 last_failure);
}

ResponseRecord Client::complete(std::string_view prompt, const DecodeParams& params, bool bypass_cache) {
  const std::string key = ResponseCache::cache_key(endpoint_, params, prompt);
  if (!bypass_cache && cache_) {
    if (auto hit = cache_->lookup(key)) {
      hit->cached = true;
      return *hit;
    }
  }

  ResponseRecord record;
  record.prompt_text = std::string(prompt);
  record.model_id = endpoint_.model;
  record.endpoint_fingerprint = endpoint_.fingerprint();
  record.decode_params = params.to_json();
  record.cached = false;
  record.raw_output = post_completion(prompt, params.to_json(), &record.latency_ms);
  if (!bypass_cache && cache_) cache_->store(key, record);
  return record;
}

std::string Client::generate(std::string_view prompt, const nlohmann::json& sampling_params) {
  return post_completion(prompt, sampling_params, nullptr);
}

AuditReport Client::determinism_audit(std::span<const std::string> prompts, const DecodeParams& params,
                                      int repeats) {
  if (prompts.empty()) raise_usage("determinism_audit: needs at least one sample prompt");
  if (repeats < 2) raise_usage("determinism_audit: repeats must be >= 2");

  AuditReport report;
  report.samples = static_cast<int>(prompts.size());
  report.repeats = repeats;
  for (const auto& prompt : prompts) {
    const std::string first = complete(prompt, params, /*bypass_cache=*/true).raw_output;
    for (int r = 1; r < repeats; ++r) {
      if (complete(prompt, params, /*bypass_cache=*/true).raw_output != first) {
        report.mismatched_prompts.push_back(prompt);
        break;
      }
    }
  }
  return report;
}

}  // namespace semstab::infer
