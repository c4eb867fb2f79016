#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/inference.hpp"

namespace semstab::para {

struct ParaphraseSet {
  std::string source_prompt;
  std::vector<std::string> variants;  // exactly k, pairwise distinct as raw strings
  std::string provider_id;
  bool include_original = false;  // when set, variants[0] == source_prompt

  void validate() const;
  nlohmann::json to_json() const;
  static ParaphraseSet from_json(const nlohmann::json& spec);
};

enum class ProviderKind { template_rules, file, llm };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::template_rules;
  bool include_original = false;
  std::uint64_t seed = 0;
  std::string lexicon_path;  // template: optional synonym TSV on top of the builtin pairs

  // llm provider: generation is allowed nonzero temperature (it is not
  // evaluation decoding); everything here is recorded in the run manifest.
  std::string instruction;
  double temperature = 0.7;
  int max_tokens = 128;
  int attempt_budget = 0;  // total requests per prompt; 0 -> 4*k
  std::optional<infer::EndpointConfig> endpoint;  // absent -> the run endpoint

  static ProviderConfig from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;
  std::string provider_id() const;
};

class Provider {
 public:
  virtual ~Provider() = default;
  // Returns exactly k pairwise-distinct variants or raises an error that
  // names the prompt.
  virtual ParaphraseSet generate(const std::string& prompt, int k) = 0;
};

// Deterministic rule-based rewrites: question<->imperative mood transforms,
// whole-word synonym substitution from a fixed lexicon, clause reordering,
// and generic question wrappers. Bit-reproducible under a fixed seed.
std::unique_ptr<Provider> make_template_provider(const ProviderConfig& config);

// Pre-authored variants keyed by source prompt (from the dataset file).
std::unique_ptr<Provider> make_file_provider(const ProviderConfig& config,
                                             std::map<std::string, std::vector<std::string>> authored);

// Paraphrase-generation endpoint with a fixed instruction; dedupes and
// re-requests until k distinct variants or the attempt budget is exhausted.
std::unique_ptr<Provider> make_llm_provider(const ProviderConfig& config,
                                            std::shared_ptr<infer::Client> client);

struct Warning {
  std::string code;  // "trivial_paraphrase" | "length_ratio" | "no_shared_content_token"
  std::int64_t variant_index = 0;
  std::string detail;

  nlohmann::json to_json() const;
};

// Heuristic guards on the semantic-equivalence premise. Warnings never block
// a run; they are attached to the run manifest.
std::vector<Warning> validate_paraphrase_set(const ParaphraseSet& set);

}  // namespace semstab::para
