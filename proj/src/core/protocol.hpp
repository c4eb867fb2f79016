#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/canon.hpp"
#include "core/inference.hpp"
#include "core/metrics.hpp"
#include "core/paraphrase.hpp"
#include "core/reporting.hpp"

namespace semstab::protocol {

struct DatasetRow {
  std::string id;
  std::string prompt;
  std::optional<std::string> gold_raw;
  std::optional<std::vector<std::string>> variants;  // pre-authored (file provider)
};

// JSON Lines, one object per prompt: {"id", "prompt", "gold"?, "variants"?}.
std::vector<DatasetRow> load_dataset(const std::filesystem::path& path);

enum class FailurePolicy { abort_run, skip_prompt };

struct RunConfig {
  std::string run_id;  // empty -> derived from the config hash
  std::string system = "unspecified-system";
  std::string domain = "unspecified-domain";
  std::string label;                  // sweep label; defaults to run_id
  std::optional<double> sparsity_pct; // recorded for sweeps over run directories
  std::filesystem::path dataset_path;
  std::int64_t n = 0;
  std::int64_t k = 10;
  std::uint64_t sampling_seed = 0;
  bool strict_determinism = false;
  FailurePolicy failure_policy = FailurePolicy::skip_prompt;
  int audit_samples = 3;
  int audit_repeats = 2;
  canon::ExtractorSpec extractor = canon::ExtractorSpec::full_text();
  para::ProviderConfig paraphrase;
  infer::EndpointConfig endpoint;
  infer::DecodeParams decode = infer::DecodeParams::make();

  // base_dir resolves relative paths (dataset, lexicon).
  static RunConfig from_json(const nlohmann::json& spec, const std::filesystem::path& base_dir);
  nlohmann::json to_json() const;
  std::string config_hash() const;
  std::string effective_run_id() const;
};

enum class PromptStatus { complete, failed };

struct PromptResult {
  std::string prompt_id;
  std::string prompt;
  PromptStatus status = PromptStatus::failed;
  std::vector<std::string> variants;
  std::vector<std::string> raw_outputs;
  std::vector<canon::CanonicalAnswer> answers;
  std::optional<metrics::PCValue> pc;
  std::optional<canon::CanonicalAnswer> gold;
  std::string error;

  nlohmann::json to_json() const;
  static PromptResult from_json(const nlohmann::json& spec);
};

// Uniform sample without replacement, deterministic under the seed; returns
// dataset indices in file order. n >= dataset size selects everything.
std::vector<std::size_t> select_prompts(std::size_t dataset_size, std::int64_t n,
                                        std::uint64_t sampling_seed);

struct RunOutcome {
  std::vector<PromptResult> results;  // selection order
  metrics::StabilitySummary summary;  // over Complete prompts only
  metrics::AccuracyPairing pairing;
  std::int64_t failed_prompts = 0;
  std::int64_t no_answer_responses = 0;
  nlohmann::json manifest;
  reporting::ReportDocument report;
};

// One run directory: manifest.json, paraphrases.jsonl, results.jsonl,
// cache/, report.md, report.json. Construction validates the config against
// any manifest already present; execute() resumes from the checkpoint and is
// idempotent.
class RunSession {
 public:
  RunSession(RunConfig config, std::filesystem::path run_dir);

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }

  // Determinism audit over the first audit_samples selected prompts without
  // executing the protocol.
  infer::AuditReport audit_only();

  RunOutcome execute();

 private:
  std::map<std::string, PromptResult> load_results() const;
  std::map<std::string, para::ParaphraseSet> load_paraphrase_store() const;
  std::unique_ptr<para::Provider> make_provider(const std::vector<DatasetRow>& dataset);

  RunConfig config_;
  std::filesystem::path dir_;
  std::shared_ptr<infer::ResponseCache> cache_;
  std::shared_ptr<infer::Client> client_;
};

}  // namespace semstab::protocol
