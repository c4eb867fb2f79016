#include "core/paraphrase.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "core/canon.hpp"
#include "core/errors.hpp"
#include "core/jsonio.hpp"
#include "core/rng.hpp"

namespace semstab::para {

namespace {

bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\n' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\n' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower_first(std::string s) {
  if (!s.empty() && s[0] >= 'A' && s[0] <= 'Z') s[0] = static_cast<char>(s[0] - 'A' + 'a');
  return s;
}

std::size_t codepoint_count(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

// Whole-word, case-insensitive substitution; keeps a leading capital.
std::string substitute_word(std::string_view text, std::string_view word, std::string_view synonym) {
  const std::string lower_text = lower_ascii(text);
  const std::string lower_word = lower_ascii(word);
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool boundary_left = i == 0 || !is_ascii_alnum(text[i - 1]);
    if (boundary_left && lower_text.compare(i, lower_word.size(), lower_word) == 0) {
      const std::size_t after = i + lower_word.size();
      if (after >= text.size() || !is_ascii_alnum(text[after])) {
        std::string replacement(synonym);
        if (!replacement.empty() && text[i] >= 'A' && text[i] <= 'Z' && replacement[0] >= 'a' &&
            replacement[0] <= 'z') {
          replacement[0] = static_cast<char>(replacement[0] - 'a' + 'A');
        }
        out += replacement;
        i = after;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

struct LexiconPair {
  std::string word;
  std::string synonym;
};

const std::vector<LexiconPair>& builtin_lexicon() {
  static const std::vector<LexiconPair> pairs = {
      {"largest", "biggest"},   {"smallest", "tiniest"},  {"fastest", "quickest"},
      {"big", "large"},         {"small", "little"},      {"important", "significant"},
      {"hard", "difficult"},    {"easy", "simple"},       {"begin", "start"},
      {"end", "finish"},        {"buy", "purchase"},      {"often", "frequently"},
  };
  return pairs;
}

std::vector<LexiconPair> load_lexicon(const std::string& path) {
  std::vector<LexiconPair> pairs = builtin_lexicon();
  if (path.empty()) return pairs;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      raise_config("lexicon " + path + ":" + std::to_string(line_no) + ": expected word<TAB>synonym");
    }
    pairs.push_back({trim(line.substr(0, tab)), trim(line.substr(tab + 1))});
  }
  return pairs;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the", "a",    "an",   "is",   "are",  "was",  "were", "what", "which", "who",  "whom",
      "when", "where", "why", "how",  "do",   "does", "did",  "can",  "could", "will", "would",
      "should", "of", "to",  "in",   "on",   "at",   "for",  "with", "about", "as",   "by",
      "from", "that", "this", "it",  "its",  "be",   "you",  "i",    "we",    "they", "and",
      "or",   "not",  "no",   "if",  "then", "than", "so",   "there", "here", "me",   "my",
  };
  return words;
}

std::vector<std::string> content_tokens(std::string_view text) {
  const std::string canon_text = canon::canonicalize(text);
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 3 && stopwords().count(current) == 0) tokens.push_back(current);
    current.clear();
  };
  for (char c : canon_text) {
    if (is_ascii_alnum(c)) {
      current.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

}  // namespace

void ParaphraseSet::validate() const {
  if (variants.empty()) raise_usage("paraphrase set: no variants");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (variants[i] == variants[j]) {
        raise_usage("paraphrase set: duplicate variant \"" + variants[i] + "\"");
      }
    }
  }
  if (include_original && variants.front() != source_prompt) {
    raise_usage("paraphrase set: include_original set but variants[0] != source prompt");
  }
}

nlohmann::json ParaphraseSet::to_json() const {
  return {{"prompt", source_prompt},
          {"variants", variants},
          {"provider_id", provider_id},
          {"include_original", include_original}};
}

ParaphraseSet ParaphraseSet::from_json(const nlohmann::json& spec) {
  ParaphraseSet set;
  set.source_prompt = require_field(spec, "prompt", "paraphrase set").get<std::string>();
  set.variants = require_field(spec, "variants", "paraphrase set").get<std::vector<std::string>>();
  set.provider_id = spec.value("provider_id", "");
  set.include_original = spec.value("include_original", false);
  set.validate();
  return set;
}

ProviderConfig ProviderConfig::from_json(const nlohmann::json& spec) {
  ProviderConfig cfg;
  const std::string kind = require_field(spec, "provider", "paraphrase").get<std::string>();
  if (kind == "template") {
    cfg.kind = ProviderKind::template_rules;
  } else if (kind == "file") {
    cfg.kind = ProviderKind::file;
  } else if (kind == "llm") {
    cfg.kind = ProviderKind::llm;
  } else {
    raise_config("paraphrase.provider must be \"template\", \"file\" or \"llm\"");
  }
  cfg.include_original = spec.value("include_original", false);
  cfg.seed = spec.value("seed", std::uint64_t{0});
  cfg.lexicon_path = spec.value("lexicon_path", "");
  cfg.instruction = spec.value(
      "instruction",
      std::string("Rewrite the question so it asks exactly the same thing with different wording. "
                  "Reply with only the rewrite."));
  cfg.temperature = spec.value("temperature", 0.7);
  cfg.max_tokens = spec.value("max_tokens", 128);
  cfg.attempt_budget = spec.value("attempt_budget", 0);
  if (spec.contains("endpoint")) cfg.endpoint = infer::EndpointConfig::from_json(spec.at("endpoint"));
  return cfg;
}

nlohmann::json ProviderConfig::to_json() const {
  const char* kind_name = kind == ProviderKind::template_rules ? "template"
                          : kind == ProviderKind::file         ? "file"
                                                               : "llm";
  nlohmann::json out{{"provider", kind_name},
                     {"include_original", include_original},
                     {"seed", seed}};
  if (!lexicon_path.empty()) out["lexicon_path"] = lexicon_path;
  if (kind == ProviderKind::llm) {
    out["instruction"] = instruction;
    out["temperature"] = temperature;
    out["max_tokens"] = max_tokens;
    out["attempt_budget"] = attempt_budget;
    if (endpoint) out["endpoint"] = endpoint->to_json();
  }
  return out;
}

std::string ProviderConfig::provider_id() const {
  switch (kind) {
    case ProviderKind::template_rules:
      return "template:seed=" + std::to_string(seed) +
             (lexicon_path.empty() ? "" : ",lexicon=" + lexicon_path);
    case ProviderKind::file:
      return "file";
    case ProviderKind::llm: {
      std::ostringstream id;
      id << "llm:";
      if (endpoint) id << "model=" << endpoint->model << ",";
      id << "temperature=" << temperature << ",seed=" << seed;
      return id.str();
    }
  }
  return "unknown";
}

namespace {

class TemplateProvider final : public Provider {
 public:
  explicit TemplateProvider(const ProviderConfig& config)
      : config_(config), lexicon_(load_lexicon(config.lexicon_path)) {}

  ParaphraseSet generate(const std::string& prompt, int k) override {
    if (k < 2) raise_usage("paraphrase: k must be >= 2");
    std::vector<std::string> pool = build_pool(prompt);

    ParaphraseSet set;
    set.source_prompt = prompt;
    set.provider_id = config_.provider_id();
    set.include_original = config_.include_original;

    std::set<std::string> seen;
    if (config_.include_original) {
      set.variants.push_back(prompt);
      seen.insert(prompt);
    }

    // Deterministic selection: seeded shuffle of the rule-enumerated pool.
    Rng rng(config_.seed);
    rng.shuffle(pool);
    for (const auto& candidate : pool) {
      if (static_cast<int>(set.variants.size()) >= k) break;
      if (candidate.empty() || seen.count(candidate) != 0) continue;
      if (!config_.include_original && candidate == prompt) continue;
      set.variants.push_back(candidate);
      seen.insert(candidate);
    }
    if (static_cast<int>(set.variants.size()) < k) {
      raise_config("template provider cannot produce " + std::to_string(k) +
                   " distinct variants for prompt \"" + prompt + "\" (pool of " +
                   std::to_string(pool.size()) + ")");
    }
    set.validate();
    return set;
  }

 private:
  std::vector<std::string> build_pool(const std::string& prompt) const {
    std::vector<std::string> pool;
    const bool question = !prompt.empty() && prompt.back() == '?';
    const std::string stem = trim(question ? prompt.substr(0, prompt.size() - 1) : prompt);

    // Wh-question mood transforms and clause reordering.
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 6> wh_forms = {{
        {"what is ", "what"},
        {"what are ", "what"},
        {"which is ", "which"},
        {"who is ", "who"},
        {"where is ", "where"},
        {"when is ", "when"},
    }};
    if (question) {
      const std::string lower = lower_ascii(stem);
      for (const auto& [prefix, wh] : wh_forms) {
        if (lower.size() <= prefix.size() || lower.compare(0, prefix.size(), prefix) != 0) continue;
        const std::string subject = trim(stem.substr(prefix.size()));
        const std::string verb(prefix.substr(wh.size() + 1, prefix.size() - wh.size() - 2));
        const std::string clause = std::string(wh) + " " + subject + " " + verb;
        pool.push_back("Tell me " + clause + ".");
        pool.push_back("State " + clause + ".");
        pool.push_back("Identify " + subject + ".");
        pool.push_back("Do you know " + clause + "?");
        pool.push_back("Can you tell me " + clause + "?");
        pool.push_back("I want to know " + clause + ".");
        pool.push_back(subject + " " + verb + " " + std::string(wh) + "?");
        break;
      }
    } else {
      // Imperative/declarative to question mood.
      std::string body = stem;
      if (!body.empty() && body.back() == '.') body.pop_back();
      pool.push_back("Could you " + lower_first(body) + "?");
      pool.push_back("Would you " + lower_first(body) + "?");
      pool.push_back("What do you get if you " + lower_first(body) + "?");
    }

    // Generic wrappers keep the source clause intact.
    pool.push_back("Answer this: " + prompt);
    pool.push_back("Respond to the following: " + prompt);
    pool.push_back("Question: " + prompt);
    pool.push_back("Here is the question: " + prompt);
    pool.push_back("Please answer: " + prompt);
    pool.push_back("Give your answer to this question: " + prompt);
    pool.push_back("Provide the answer: " + prompt);
    pool.push_back("Consider the following and answer it: " + prompt);

    // Synonym substitution on the source and on everything generated so far.
    const std::size_t base_count = pool.size();
    for (const auto& pair : lexicon_) {
      const std::string substituted = substitute_word(prompt, pair.word, pair.synonym);
      if (substituted == prompt) continue;
      pool.push_back(substituted);
      for (std::size_t i = 0; i < base_count && pool.size() < 96; ++i) {
        const std::string combined = substitute_word(pool[i], pair.word, pair.synonym);
        if (combined != pool[i]) pool.push_back(combined);
      }
    }
    return pool;
  }

  ProviderConfig config_;
  std::vector<LexiconPair> lexicon_;
};

class FileProvider final : public Provider {
 public:
  FileProvider(const ProviderConfig& config, std::map<std::string, std::vector<std::string>> authored)
      : config_(config), authored_(std::move(authored)) {}

  ParaphraseSet generate(const std::string& prompt, int k) override {
    auto it = authored_.find(prompt);
    if (it == authored_.end()) {
      raise_config("file provider: dataset has no authored variants for prompt \"" + prompt + "\"");
    }
    if (static_cast<int>(it->second.size()) != k) {
      raise_config("file provider: prompt \"" + prompt + "\" has " +
                   std::to_string(it->second.size()) + " variants, run requires k=" +
                   std::to_string(k));
    }
    ParaphraseSet set;
    set.source_prompt = prompt;
    set.variants = it->second;
    set.provider_id = config_.provider_id();
    set.include_original = config_.include_original;
    set.validate();
    return set;
  }

 private:
  ProviderConfig config_;
  std::map<std::string, std::vector<std::string>> authored_;
};

class LlmProvider final : public Provider {
 public:
  LlmProvider(const ProviderConfig& config, std::shared_ptr<infer::Client> client)
      : config_(config), client_(std::move(client)) {}

  ParaphraseSet generate(const std::string& prompt, int k) override {
    if (k < 2) raise_usage("paraphrase: k must be >= 2");
    ParaphraseSet set;
    set.source_prompt = prompt;
    set.provider_id = config_.provider_id();
    set.include_original = config_.include_original;

    std::set<std::string> seen;
    if (config_.include_original) {
      set.variants.push_back(prompt);
      seen.insert(prompt);
    }

    const int budget = config_.attempt_budget > 0 ? config_.attempt_budget : 4 * k;
    for (int attempt = 0; attempt < budget && static_cast<int>(set.variants.size()) < k; ++attempt) {
      const std::string request = config_.instruction + "\n\nInput: " + prompt + "\nRewrite " +
                                  std::to_string(attempt + 1) + ":";
      nlohmann::json params{{"temperature", config_.temperature},
                            {"top_p", 1.0},
                            {"max_tokens", config_.max_tokens},
                            {"seed", static_cast<std::int64_t>(config_.seed) + attempt}};
      const std::string candidate = trim(client_->generate(request, params));
      if (candidate.empty() || seen.count(candidate) != 0) continue;
      set.variants.push_back(candidate);
      seen.insert(candidate);
    }
    if (static_cast<int>(set.variants.size()) < k) {
      raise_endpoint("llm paraphrase provider exhausted its attempt budget (" +
                     std::to_string(budget) + ") before producing " + std::to_string(k) +
                     " distinct variants for prompt \"" + prompt + "\"");
    }
    set.validate();
    return set;
  }

 private:
  ProviderConfig config_;
  std::shared_ptr<infer::Client> client_;
};

}  // namespace

std::unique_ptr<Provider> make_template_provider(const ProviderConfig& config) {
  return std::make_unique<TemplateProvider>(config);
}

std::unique_ptr<Provider> make_file_provider(const ProviderConfig& config,
                                             std::map<std::string, std::vector<std::string>> authored) {
  return std::make_unique<FileProvider>(config, std::move(authored));
}

std::unique_ptr<Provider> make_llm_provider(const ProviderConfig& config,
                                            std::shared_ptr<infer::Client> client) {
  return std::make_unique<LlmProvider>(config, std::move(client));
}

nlohmann::json Warning::to_json() const {
  return {{"code", code}, {"variant_index", variant_index}, {"detail", detail}};
}

std::vector<Warning> validate_paraphrase_set(const ParaphraseSet& set) {
  std::vector<Warning> warnings;
  const std::string source_canon = canon::canonicalize(set.source_prompt);
  const double source_len = static_cast<double>(codepoint_count(set.source_prompt));
  const auto source_tokens = content_tokens(set.source_prompt);

  for (std::size_t i = 0; i < set.variants.size(); ++i) {
    if (set.include_original && i == 0) continue;  // the original is intentionally identical
    const auto& variant = set.variants[i];

    if (canon::canonicalize(variant) == source_canon) {
      warnings.push_back({"trivial_paraphrase", static_cast<std::int64_t>(i),
                          "variant equals the source after canonicalization"});
    }

    const double len = static_cast<double>(codepoint_count(variant));
    if (source_len > 0 && (len < 0.3 * source_len || len > 3.0 * source_len)) {
      warnings.push_back({"length_ratio", static_cast<std::int64_t>(i),
                          "variant length " + std::to_string(static_cast<long long>(len)) +
                              " outside 30%-300% of source length " +
                              std::to_string(static_cast<long long>(source_len))});
    }

    if (!source_tokens.empty()) {
      const auto variant_tokens = content_tokens(variant);
      bool shared = false;
      for (const auto& token : variant_tokens) {
        if (std::find(source_tokens.begin(), source_tokens.end(), token) != source_tokens.end()) {
          shared = true;
          break;
        }
      }
      if (!shared) {
        warnings.push_back({"no_shared_content_token", static_cast<std::int64_t>(i),
                            "variant shares no content token with the source"});
      }
    }
  }
  return warnings;
}

}  // namespace semstab::para
