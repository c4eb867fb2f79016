#include "core/mockserver.hpp"

#include <chrono>

#include <httplib.h>

#include "core/errors.hpp"
#include "core/jsonio.hpp"

namespace semstab::mock {

MockScript::Mapping MockScript::exact(std::string prompt, std::string response) {
  Mapping m;
  m.is_regex = false;
  m.matcher = std::move(prompt);
  m.response = std::move(response);
  return m;
}

MockScript::Mapping MockScript::pattern(std::string regex_pattern, std::string response) {
  Mapping m;
  m.is_regex = true;
  m.matcher = std::move(regex_pattern);
  try {
    m.compiled = std::make_shared<const std::regex>(m.matcher, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    raise_config("mock script: pattern does not compile: " + std::string(e.what()));
  }
  m.response = std::move(response);
  return m;
}

MockScript MockScript::from_json(const nlohmann::json& spec) {
  MockScript script;
  if (!spec.is_object()) raise_config("mock script: expected an object");
  if (spec.contains("mappings")) {
    for (const auto& item : spec.at("mappings")) {
      const std::string response = require_field(item, "response", "mock mapping").get<std::string>();
      if (item.contains("prompt")) {
        script.mappings.push_back(exact(item.at("prompt").get<std::string>(), response));
      } else if (item.contains("pattern")) {
        script.mappings.push_back(pattern(item.at("pattern").get<std::string>(), response));
      } else {
        raise_config("mock mapping: needs \"prompt\" (exact) or \"pattern\" (regex)");
      }
    }
  }
  script.default_response = spec.value("default_response", std::string("unscripted"));
  script.jitter = spec.value("jitter", false);
  script.delay_ms = spec.value("delay_ms", 0);
  return script;
}

nlohmann::json MockScript::to_json() const {
  nlohmann::json mappings_json = nlohmann::json::array();
  for (const auto& m : mappings) {
    nlohmann::json item{{"response", m.response}};
    item[m.is_regex ? "pattern" : "prompt"] = m.matcher;
    mappings_json.push_back(std::move(item));
  }
  return {{"mappings", std::move(mappings_json)},
          {"default_response", default_response},
          {"jitter", jitter},
          {"delay_ms", delay_ms}};
}

std::string MockScript::resolve(const std::string& prompt) const {
  for (const auto& m : mappings) {
    if (m.is_regex) {
      if (std::regex_search(prompt, *m.compiled)) return m.response;
    } else if (m.matcher == prompt) {
      return m.response;
    }
  }
  return default_response;
}

nlohmann::json ParamsLogEntry::to_json() const {
  nlohmann::json out{{"path", path}, {"model", model}, {"prompt", prompt}};
  out["temperature"] = temperature ? nlohmann::json(*temperature) : nlohmann::json(nullptr);
  out["top_p"] = top_p ? nlohmann::json(*top_p) : nlohmann::json(nullptr);
  out["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  out["max_tokens"] = max_tokens ? nlohmann::json(*max_tokens) : nlohmann::json(nullptr);
  return out;
}

MockServer::MockServer(MockScript script, int port) : script_(std::move(script)) {
  server_ = std::make_unique<httplib::Server>();

  auto completion_handler = [this](bool chat) {
    return [this, chat](const httplib::Request& req, httplib::Response& res) {
      std::string body;
      int status = 200;
      handle_completion(chat, req.body, body, status);
      res.status = status;
      res.set_content(body, "application/json");
    };
  };
  server_->Post("/v1/chat/completions", completion_handler(true));
  server_->Post("/v1/completions", completion_handler(false));

  server_->Get("/admin/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}", "application/json");
  });
  server_->Get("/admin/params-log", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(params_log_json().dump(), "application/json");
  });
  server_->Post("/admin/shutdown", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"stopping\"}", "application/json");
    std::thread([this] {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      server_->stop();
    }).detach();
  });

  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
    if (port_ <= 0) raise_endpoint("mock server: failed to bind an ephemeral port");
  } else {
    if (!server_->bind_to_port("127.0.0.1", port)) {
      raise_endpoint("mock server: failed to bind port " + std::to_string(port) +
                     " (already in use?)");
    }
    port_ = port;
  }

  serve_thread_ = std::thread([this] { server_->listen_after_bind(); });
  for (int i = 0; i < 1000 && !server_->is_running(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  if (!server_->is_running()) {
    stop();
    raise_endpoint("mock server: did not start listening");
  }
}

MockServer::~MockServer() { stop(); }

void MockServer::stop() {
  if (!stopped_.exchange(true) && server_) server_->stop();
  if (serve_thread_.joinable()) serve_thread_.join();
}

std::vector<ParamsLogEntry> MockServer::params_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

nlohmann::json MockServer::params_log_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& entry : params_log()) entries.push_back(entry.to_json());
  return {{"entries", std::move(entries)}};
}

void MockServer::handle_completion(bool chat, const std::string& body, std::string& out_body,
                                   int& out_status) {
  json request = json::parse(body, nullptr, false);
  if (request.is_discarded()) {
    out_status = 400;
    out_body = R"({"error":{"message":"invalid JSON body"}})";
    return;
  }

  std::string prompt;
  if (chat) {
    if (request.contains("messages") && request.at("messages").is_array()) {
      for (const auto& message : request.at("messages")) {
        if (message.value("role", "") == "user") prompt = message.value("content", "");
      }
    }
  } else {
    prompt = request.value("prompt", "");
  }

  ParamsLogEntry entry;
  entry.path = chat ? "/v1/chat/completions" : "/v1/completions";
  entry.model = request.value("model", "");
  entry.prompt = prompt;
  if (request.contains("temperature")) entry.temperature = request.at("temperature").get<double>();
  if (request.contains("top_p")) entry.top_p = request.at("top_p").get<double>();
  if (request.contains("seed")) entry.seed = request.at("seed").get<std::int64_t>();
  if (request.contains("max_tokens")) entry.max_tokens = request.at("max_tokens").get<std::int64_t>();
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back(entry);
  }

  if (script_.delay_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(script_.delay_ms));
  }

  std::string content = script_.resolve(prompt);
  const std::uint64_t serial = request_counter_.fetch_add(1);
  if (script_.jitter) content += " #" + std::to_string(serial);

  json choice;
  if (chat) {
    choice = {{"index", 0},
              {"message", {{"role", "assistant"}, {"content", content}}},
              {"finish_reason", "stop"}};
  } else {
    choice = {{"index", 0}, {"text", content}, {"finish_reason", "stop"}};
  }
  json response{{"id", "mock-" + std::to_string(serial)},
                {"object", chat ? "chat.completion" : "text_completion"},
                {"model", entry.model},
                {"choices", json::array({std::move(choice)})}};
  out_status = 200;
  out_body = response.dump();
}

}  // namespace semstab::mock
