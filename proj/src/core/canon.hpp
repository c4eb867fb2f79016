#pragma once

#include <memory>
#include <regex>
#include <string>
#include <string_view>

#include <json.hpp>

namespace semstab::canon {

// Answers must compare equal after harmless surface variation. The full
// pipeline: NFC normalization, Unicode case fold, whitespace runs collapsed
// to single spaces, trim, and any trailing run of sentence punctuation
// (. ! ?) removed. Idempotent.
std::string canonicalize(std::string_view raw);

// Emitted when extraction finds nothing. Participates in mode counting as an
// ordinary answer; reports surface how often it occurred.
inline constexpr std::string_view kNoAnswerSentinel = "⟨no-answer⟩";

enum class ExtractorKind { full_text, numeric_final, mc_letter, regex_capture };

std::string_view extractor_kind_name(ExtractorKind kind);
ExtractorKind extractor_kind_from_name(std::string_view name);

class ExtractorSpec {
 public:
  static ExtractorSpec full_text();
  static ExtractorSpec numeric_final();
  static ExtractorSpec mc_letter();
  // Compiles the pattern now; a bad pattern is a config error here, never at
  // extraction time. Pattern must contain at least one capture group.
  static ExtractorSpec regex_capture(std::string pattern);

  static ExtractorSpec from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;

  ExtractorKind kind() const { return kind_; }
  const std::string& pattern() const { return pattern_; }
  const std::regex* compiled() const { return compiled_.get(); }

  // Identifier of the extraction rule; part of answer equality.
  std::string id() const;

 private:
  ExtractorSpec(ExtractorKind kind, std::string pattern, std::shared_ptr<const std::regex> compiled)
      : kind_(kind), pattern_(std::move(pattern)), compiled_(std::move(compiled)) {}

  ExtractorKind kind_;
  std::string pattern_;
  std::shared_ptr<const std::regex> compiled_;
};

struct CanonicalAnswer {
  std::string text;
  std::string extractor_id;

  bool operator==(const CanonicalAnswer&) const = default;
  // Code-point order on text (UTF-8 byte order coincides), id as tiebreaker.
  bool operator<(const CanonicalAnswer& other) const {
    if (text != other.text) return text < other.text;
    return extractor_id < other.extractor_id;
  }

  bool is_no_answer() const { return text == kNoAnswerSentinel; }
};

// Deterministic and total: failures yield the sentinel, never an exception.
CanonicalAnswer extract_answer(std::string_view raw, const ExtractorSpec& spec);

}  // namespace semstab::canon
