#include "core/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/jsonio.hpp"
#include "core/rng.hpp"

namespace semstab::protocol {

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kParaphraseFile = "paraphrases.jsonl";
constexpr const char* kResultsFile = "results.jsonl";
constexpr const char* kCacheDir = "cache";
constexpr const char* kReportMd = "report.md";
constexpr const char* kReportJson = "report.json";

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& path) {
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

// JSONL reader that tolerates a torn final line from a killed writer;
// malformed lines are simply skipped and their prompts recomputed.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded()) continue;
    fn(parsed);
  }
}

}  // namespace

std::vector<DatasetRow> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise_config("dataset not found: " + path.string());
  std::vector<DatasetRow> rows;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded()) {
      raise_config("dataset " + path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
    }
    DatasetRow row;
    row.id = require_field(parsed, "id", "dataset row").get<std::string>();
    row.prompt = require_field(parsed, "prompt", "dataset row").get<std::string>();
    if (parsed.contains("gold") && !parsed.at("gold").is_null()) {
      row.gold_raw = parsed.at("gold").get<std::string>();
    }
    if (parsed.contains("variants") && !parsed.at("variants").is_null()) {
      row.variants = parsed.at("variants").get<std::vector<std::string>>();
    }
    if (!ids.insert(row.id).second) {
      raise_config("dataset " + path.string() + ": duplicate id \"" + row.id + "\"");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) raise_config("dataset " + path.string() + " is empty");
  return rows;
}

RunConfig RunConfig::from_json(const nlohmann::json& spec, const std::filesystem::path& base_dir) {
  if (!spec.is_object()) raise_config("run config: expected an object");
  RunConfig cfg;
  cfg.run_id = spec.value("run_id", "");
  cfg.system = spec.value("system", "unspecified-system");
  cfg.domain = spec.value("domain", "unspecified-domain");
  cfg.label = spec.value("label", "");
  if (spec.contains("sparsity_pct") && !spec.at("sparsity_pct").is_null()) {
    cfg.sparsity_pct = spec.at("sparsity_pct").get<double>();
  }
  cfg.dataset_path = resolve(base_dir, require_field(spec, "dataset", "run config").get<std::string>());
  cfg.n = require_field(spec, "n", "run config").get<std::int64_t>();
  cfg.k = require_field(spec, "k", "run config").get<std::int64_t>();
  cfg.sampling_seed = spec.value("sampling_seed", std::uint64_t{0});
  cfg.strict_determinism = spec.value("strict_determinism", false);
  const std::string policy = spec.value("failure_policy", "skip_prompt");
  if (policy == "abort_run") {
    cfg.failure_policy = FailurePolicy::abort_run;
  } else if (policy == "skip_prompt") {
    cfg.failure_policy = FailurePolicy::skip_prompt;
  } else {
    raise_config("run config: failure_policy must be \"abort_run\" or \"skip_prompt\"");
  }
  if (spec.contains("audit")) {
    cfg.audit_samples = spec.at("audit").value("samples", 3);
    cfg.audit_repeats = spec.at("audit").value("repeats", 2);
  }
  cfg.extractor = canon::ExtractorSpec::from_json(require_field(spec, "extractor", "run config"));
  cfg.paraphrase = para::ProviderConfig::from_json(require_field(spec, "paraphrase", "run config"));
  if (!cfg.paraphrase.lexicon_path.empty()) {
    cfg.paraphrase.lexicon_path = resolve(base_dir, cfg.paraphrase.lexicon_path).string();
  }
  cfg.endpoint = infer::EndpointConfig::from_json(require_field(spec, "endpoint", "run config"));
  if (spec.contains("decode")) cfg.decode = infer::DecodeParams::from_json(spec.at("decode"));

  if (cfg.n < 1) raise_config("run config: n must be >= 1");
  if (cfg.k < 2) raise_config("run config: k must be >= 2");
  if (cfg.audit_repeats < 2) raise_config("run config: audit.repeats must be >= 2");
  if (cfg.strict_determinism && cfg.audit_samples < 1) {
    raise_config("run config: strict_determinism requires audit.samples >= 1");
  }
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json out{
      {"run_id", run_id},
      {"system", system},
      {"domain", domain},
      {"label", label},
      {"dataset", dataset_path.string()},
      {"n", n},
      {"k", k},
      {"sampling_seed", sampling_seed},
      {"strict_determinism", strict_determinism},
      {"failure_policy", failure_policy == FailurePolicy::abort_run ? "abort_run" : "skip_prompt"},
      {"audit", {{"samples", audit_samples}, {"repeats", audit_repeats}}},
      {"extractor", extractor.to_json()},
      {"paraphrase", paraphrase.to_json()},
      {"endpoint", endpoint.to_json()},
      {"decode", decode.to_json()},
  };
  if (sparsity_pct) out["sparsity_pct"] = *sparsity_pct;
  return out;
}

std::string RunConfig::config_hash() const { return sha256_hex(to_json().dump()); }

std::string RunConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  return "run-" + config_hash().substr(0, 12);
}

nlohmann::json PromptResult::to_json() const {
  nlohmann::json out{
      {"prompt_id", prompt_id},
      {"prompt", prompt},
      {"status", status == PromptStatus::complete ? "complete" : "failed"},
      {"variants", variants},
      {"raw_outputs", raw_outputs},
  };
  if (!answers.empty()) {
    std::vector<std::string> texts;
    texts.reserve(answers.size());
    for (const auto& a : answers) texts.push_back(a.text);
    out["answers"] = std::move(texts);
    out["extractor_id"] = answers.front().extractor_id;
  }
  if (pc) {
    out["pc"] = {{"mode_count", pc->mode_count},
                 {"k", pc->k},
                 {"value", pc->value()},
                 {"mode_answer", pc->mode_answer.text},
                 {"tie", pc->tie}};
  }
  if (gold) out["gold"] = gold->text;
  if (!error.empty()) out["error"] = error;
  return out;
}

PromptResult PromptResult::from_json(const nlohmann::json& spec) {
  PromptResult result;
  result.prompt_id = require_field(spec, "prompt_id", "result").get<std::string>();
  result.prompt = spec.value("prompt", "");
  result.status =
      spec.value("status", "failed") == "complete" ? PromptStatus::complete : PromptStatus::failed;
  result.variants = spec.value("variants", std::vector<std::string>{});
  result.raw_outputs = spec.value("raw_outputs", std::vector<std::string>{});
  const std::string extractor_id = spec.value("extractor_id", "");
  if (spec.contains("answers")) {
    for (const auto& text : spec.at("answers")) {
      result.answers.push_back({text.get<std::string>(), extractor_id});
    }
  }
  if (spec.contains("pc")) {
    const auto& pc_json = spec.at("pc");
    metrics::PCValue pc;
    pc.mode_count = require_field(pc_json, "mode_count", "result.pc").get<std::int64_t>();
    pc.k = require_field(pc_json, "k", "result.pc").get<std::int64_t>();
    pc.mode_answer = {require_field(pc_json, "mode_answer", "result.pc").get<std::string>(),
                      extractor_id};
    pc.tie = pc_json.value("tie", false);
    result.pc = std::move(pc);
  }
  if (spec.contains("gold") && !spec.at("gold").is_null()) {
    result.gold = canon::CanonicalAnswer{spec.at("gold").get<std::string>(), extractor_id};
  }
  result.error = spec.value("error", "");
  return result;
}

std::vector<std::size_t> select_prompts(std::size_t dataset_size, std::int64_t n,
                                        std::uint64_t sampling_seed) {
  if (dataset_size == 0) raise_usage("select_prompts: empty dataset");
  if (n < 1) raise_usage("select_prompts: n must be >= 1");

  std::vector<std::size_t> indices(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) indices[i] = i;
  if (static_cast<std::size_t>(n) >= dataset_size) return indices;  // full set, file order

  // Partial Fisher-Yates with portable draws, then back to file order.
  Rng rng(sampling_seed);
  const auto take = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(dataset_size - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(take);
  std::sort(indices.begin(), indices.end());
  return indices;
}

RunSession::RunSession(RunConfig config, std::filesystem::path run_dir)
    : config_(std::move(config)), dir_(std::move(run_dir)) {
  if (dir_.empty()) raise_config("run directory path is empty");
  std::filesystem::create_directories(dir_);

  // A run directory belongs to exactly one config.
  const auto manifest_path = dir_ / kManifestFile;
  if (std::filesystem::exists(manifest_path)) {
    const json manifest = load_json_file(manifest_path);
    const std::string existing = manifest.value("config_hash", "");
    if (!existing.empty() && existing != config_.config_hash()) {
      raise_config("run directory " + dir_.string() +
                   " was created with a different config (hash mismatch); use a fresh directory");
    }
  }

  cache_ = std::make_shared<infer::ResponseCache>(dir_ / kCacheDir);
  client_ = std::make_shared<infer::Client>(config_.endpoint, cache_);
}

std::map<std::string, PromptResult> RunSession::load_results() const {
  std::map<std::string, PromptResult> results;
  for_each_jsonl(dir_ / kResultsFile, [&](const json& line) {
    try {
      PromptResult result = PromptResult::from_json(line);
      results[result.prompt_id] = std::move(result);
    } catch (const Error&) {
      // skip damaged line; the prompt is simply recomputed
    }
  });
  return results;
}

std::map<std::string, para::ParaphraseSet> RunSession::load_paraphrase_store() const {
  std::map<std::string, para::ParaphraseSet> store;
  for_each_jsonl(dir_ / kParaphraseFile, [&](const json& line) {
    try {
      store[require_field(line, "id", "paraphrase line").get<std::string>()] =
          para::ParaphraseSet::from_json(line);
    } catch (const Error&) {
    }
  });
  return store;
}

std::unique_ptr<para::Provider> RunSession::make_provider(const std::vector<DatasetRow>& dataset) {
  switch (config_.paraphrase.kind) {
    case para::ProviderKind::template_rules:
      return para::make_template_provider(config_.paraphrase);
    case para::ProviderKind::file: {
      std::map<std::string, std::vector<std::string>> authored;
      for (const auto& row : dataset) {
        if (row.variants) authored[row.prompt] = *row.variants;
      }
      return para::make_file_provider(config_.paraphrase, std::move(authored));
    }
    case para::ProviderKind::llm: {
      auto client = client_;
      if (config_.paraphrase.endpoint) {
        client = std::make_shared<infer::Client>(*config_.paraphrase.endpoint, nullptr);
      }
      return para::make_llm_provider(config_.paraphrase, std::move(client));
    }
  }
  raise_config("unknown paraphrase provider");
}

infer::AuditReport RunSession::audit_only() {
  const auto dataset = load_dataset(config_.dataset_path);
  const auto selected = select_prompts(dataset.size(), config_.n, config_.sampling_seed);
  const int samples = std::min<int>(config_.audit_samples > 0 ? config_.audit_samples : 1,
                                    static_cast<int>(selected.size()));
  std::vector<std::string> prompts;
  prompts.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) prompts.push_back(dataset[selected[static_cast<std::size_t>(i)]].prompt);
  return client_->determinism_audit(prompts, config_.decode, config_.audit_repeats);
}

RunOutcome RunSession::execute() {
  const auto dataset = load_dataset(config_.dataset_path);
  const auto selected = select_prompts(dataset.size(), config_.n, config_.sampling_seed);

  auto results = load_results();
  auto store = load_paraphrase_store();
  const auto manifest_path = dir_ / kManifestFile;

  // The manifest freezes once the first result is checkpointed; before that
  // it may be (re)written, deterministically, on every invocation.
  const bool manifest_mutable = results.empty();
  json manifest;
  if (std::filesystem::exists(manifest_path)) manifest = load_json_file(manifest_path);

  // Freeze paraphrases for every selected prompt before any decoding.
  auto provider = make_provider(dataset);
  std::map<std::string, std::string> freeze_failures;
  json warnings_json = json::object();
  {
    std::ofstream para_out(dir_ / kParaphraseFile, std::ios::app);
    for (const std::size_t idx : selected) {
      const auto& row = dataset[idx];
      if (results.count(row.id) != 0) continue;  // already decoded
      auto it = store.find(row.id);
      if (it == store.end()) {
        try {
          para::ParaphraseSet set = provider->generate(row.prompt, static_cast<int>(config_.k));
          json line = set.to_json();
          line["id"] = row.id;
          para_out << line.dump() << '\n';
          para_out.flush();
          it = store.emplace(row.id, std::move(set)).first;
        } catch (const Error& e) {
          if (e.code() == Errc::config || e.code() == Errc::usage) throw;
          if (config_.failure_policy == FailurePolicy::abort_run) {
            raise(Errc::aborted, "run aborted: paraphrase generation failed for prompt \"" + row.id +
                                     "\": " + e.what());
          }
          freeze_failures[row.id] = e.what();
          continue;
        }
      }
      const auto warnings = para::validate_paraphrase_set(it->second);
      if (!warnings.empty() && manifest_mutable) {
        json list = json::array();
        for (const auto& w : warnings) list.push_back(w.to_json());
        warnings_json[row.id] = std::move(list);
      }
    }
  }

  // Determinism audit: run once, reuse on resume.
  json audit_json;
  if (manifest.contains("audit") && !manifest.at("audit").is_null()) {
    audit_json = manifest.at("audit");
  } else if (config_.audit_samples > 0) {
    const int samples = std::min<int>(config_.audit_samples, static_cast<int>(selected.size()));
    std::vector<std::string> prompts;
    for (int i = 0; i < samples; ++i) {
      prompts.push_back(dataset[selected[static_cast<std::size_t>(i)]].prompt);
    }
    audit_json = client_->determinism_audit(prompts, config_.decode, config_.audit_repeats).to_json();
  }
  if (config_.strict_determinism && !audit_json.is_null() && !audit_json.value("passed", true)) {
    raise_endpoint("determinism audit failed: endpoint returned differing outputs for " +
                   std::to_string(audit_json.at("mismatched_prompts").size()) +
                   " of " + std::to_string(audit_json.value("samples", 0)) + " sample prompts");
  }

  if (manifest_mutable) {
    std::vector<std::string> selected_ids;
    selected_ids.reserve(selected.size());
    for (const std::size_t idx : selected) selected_ids.push_back(dataset[idx].id);
    manifest = json{
        {"schema_version", std::string(reporting::kSchemaVersion)},
        {"run_id", config_.effective_run_id()},
        {"system", config_.system},
        {"domain", config_.domain},
        {"label", config_.label.empty() ? config_.effective_run_id() : config_.label},
        {"config", config_.to_json()},
        {"config_hash", config_.config_hash()},
        {"provider_id", config_.paraphrase.provider_id()},
        {"endpoint_fingerprint", config_.endpoint.fingerprint()},
        {"dataset", {{"size", dataset.size()}, {"selected_ids", selected_ids}}},
        {"paraphrase_warnings", warnings_json},
        {"audit", audit_json},
    };
    if (config_.sparsity_pct) manifest["sparsity_pct"] = *config_.sparsity_pct;
    write_file(manifest_path, manifest.dump(2) + "\n");
  }

  // Decode + extract + score, prompts fanned out across workers, checkpoint
  // after each prompt.
  std::mutex results_mutex;
  std::ofstream results_out(dir_ / kResultsFile, std::ios::app);
  if (!results_out) raise_io("cannot open " + (dir_ / kResultsFile).string());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort_flag{false};
  std::string abort_reason;

  auto process_one = [&](const DatasetRow& row) {
    PromptResult result;
    result.prompt_id = row.id;
    result.prompt = row.prompt;

    auto failure = freeze_failures.find(row.id);
    if (failure != freeze_failures.end()) {
      result.status = PromptStatus::failed;
      result.error = failure->second;
    } else {
      const auto& set = store.at(row.id);
      result.variants = set.variants;
      try {
        for (const auto& variant : set.variants) {
          result.raw_outputs.push_back(client_->complete(variant, config_.decode).raw_output);
        }
        for (const auto& raw : result.raw_outputs) {
          result.answers.push_back(canon::extract_answer(raw, config_.extractor));
        }
        result.pc = metrics::compute_pc(result.answers);
        if (row.gold_raw) result.gold = canon::extract_answer(*row.gold_raw, config_.extractor);
        result.status = PromptStatus::complete;
      } catch (const Error& e) {
        result.status = PromptStatus::failed;
        result.error = e.what();
        result.raw_outputs.clear();
        result.answers.clear();
        result.pc.reset();
      }
    }

    {
      std::lock_guard lock(results_mutex);
      results_out << result.to_json().dump() << '\n';
      results_out.flush();
      if (result.status == PromptStatus::failed &&
          config_.failure_policy == FailurePolicy::abort_run && !abort_flag.exchange(true)) {
        abort_reason = "run aborted at prompt \"" + row.id + "\": " + result.error;
      }
      results[row.id] = std::move(result);
    }
  };

  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(config_.endpoint.max_in_flight),
                               selected.size()));
  auto worker_loop = [&] {
    while (!abort_flag.load()) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= selected.size()) break;
      const auto& row = dataset[selected[slot]];
      {
        std::lock_guard lock(results_mutex);
        if (results.count(row.id) != 0) continue;  // resumed from checkpoint
      }
      process_one(row);
    }
  };
  if (workers == 1) {
    worker_loop();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker_loop);
    for (auto& t : pool) t.join();
  }

  if (abort_flag.load()) raise(Errc::aborted, abort_reason);

  // Summarize over Complete prompts, in selection order.
  RunOutcome outcome;
  outcome.manifest = manifest;
  std::vector<metrics::PCValue> pc_values;
  std::vector<metrics::GradedResult> graded;
  for (const std::size_t idx : selected) {
    const auto& row = dataset[idx];
    auto it = results.find(row.id);
    if (it == results.end()) {
      raise(Errc::internal, "missing result for prompt \"" + row.id + "\"");
    }
    const PromptResult& result = it->second;
    if (result.status == PromptStatus::complete) {
      pc_values.push_back(*result.pc);
      graded.push_back({*result.pc, result.gold});
      for (const auto& answer : result.answers) {
        if (answer.is_no_answer()) ++outcome.no_answer_responses;
      }
    } else {
      ++outcome.failed_prompts;
    }
    outcome.results.push_back(result);
  }
  if (pc_values.empty()) {
    raise_endpoint("no prompt completed successfully (" + std::to_string(outcome.failed_prompts) +
                   " failed); SS is undefined");
  }
  outcome.summary = metrics::summarize(pc_values);
  outcome.pairing = metrics::pair_accuracy(graded);

  reporting::ReportInputs inputs;
  inputs.summary = outcome.summary;
  inputs.pairing = outcome.pairing;
  inputs.system = config_.system;
  inputs.domain = config_.domain;
  inputs.manifest = manifest;
  inputs.failed_prompts = outcome.failed_prompts;
  inputs.no_answer_responses = outcome.no_answer_responses;
  outcome.report = reporting::emit_compliance_report(inputs);
  write_file(dir_ / kReportMd, outcome.report.markdown);
  write_file(dir_ / kReportJson, outcome.report.json.dump(2) + "\n");
  return outcome;
}

}  // namespace semstab::protocol
