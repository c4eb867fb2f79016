#include "core/canon.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "core/errors.hpp"
#include "core/jsonio.hpp"

namespace semstab::canon {

namespace {

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(buf, static_cast<std::size_t>(len));
}

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_alnum(char c) {
  return is_ascii_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

std::string canonicalize(std::string_view raw) {
  if (raw.empty()) return {};

  icu::UnicodeString text =
      icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  text.foldCase(U_FOLD_CASE_DEFAULT);

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  icu::UnicodeString composed;
  if (U_SUCCESS(status)) {
    composed = nfc->normalize(text, status);
    if (U_FAILURE(status)) composed = text;
  } else {
    composed = text;
  }

  std::string utf8;
  composed.toUTF8String(utf8);

  // Collapse whitespace runs to single spaces and trim the left edge.
  std::string out;
  out.reserve(utf8.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(utf8.data());
  const int32_t len = static_cast<int32_t>(utf8.size());
  bool pending_space = false;
  for (int32_t i = 0; i < len;) {
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    if (c < 0) continue;  // invalid sequence byte, drop
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    append_utf8(out, c);
  }

  // Strip the trailing run of sentence punctuation and any space it exposes.
  // These are ASCII bytes, so byte-wise popping is UTF-8 safe.
  while (!out.empty()) {
    const char back = out.back();
    if (back == '.' || back == '!' || back == '?' || back == ' ') {
      out.pop_back();
    } else {
      break;
    }
  }
  return out;
}

std::string_view extractor_kind_name(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::full_text: return "full_text";
    case ExtractorKind::numeric_final: return "numeric_final";
    case ExtractorKind::mc_letter: return "mc_letter";
    case ExtractorKind::regex_capture: return "regex_capture";
  }
  return "full_text";
}

ExtractorKind extractor_kind_from_name(std::string_view name) {
  if (name == "full_text") return ExtractorKind::full_text;
  if (name == "numeric_final") return ExtractorKind::numeric_final;
  if (name == "mc_letter") return ExtractorKind::mc_letter;
  if (name == "regex_capture") return ExtractorKind::regex_capture;
  raise_config("unknown extractor kind \"" + std::string(name) + "\"");
}

ExtractorSpec ExtractorSpec::full_text() { return {ExtractorKind::full_text, "", nullptr}; }
ExtractorSpec ExtractorSpec::numeric_final() { return {ExtractorKind::numeric_final, "", nullptr}; }
ExtractorSpec ExtractorSpec::mc_letter() { return {ExtractorKind::mc_letter, "", nullptr}; }

ExtractorSpec ExtractorSpec::regex_capture(std::string pattern) {
  std::shared_ptr<const std::regex> compiled;
  try {
    compiled = std::make_shared<const std::regex>(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    raise_config("extractor pattern does not compile: " + std::string(e.what()));
  }
  if (compiled->mark_count() < 1) {
    raise_config("extractor pattern needs at least one capture group: " + pattern);
  }
  return {ExtractorKind::regex_capture, std::move(pattern), std::move(compiled)};
}

ExtractorSpec ExtractorSpec::from_json(const nlohmann::json& spec) {
  if (!spec.is_object()) raise_config("extractor: expected an object");
  const auto& kind_field = require_field(spec, "kind", "extractor");
  if (!kind_field.is_string()) raise_config("extractor.kind: expected a string");
  const ExtractorKind kind = extractor_kind_from_name(kind_field.get<std::string>());
  if (kind == ExtractorKind::regex_capture) {
    const auto& pattern = require_field(spec, "pattern", "extractor");
    if (!pattern.is_string()) raise_config("extractor.pattern: expected a string");
    return regex_capture(pattern.get<std::string>());
  }
  if (spec.contains("pattern")) {
    raise_config("extractor.pattern is only valid with kind \"regex_capture\"");
  }
  switch (kind) {
    case ExtractorKind::full_text: return full_text();
    case ExtractorKind::numeric_final: return numeric_final();
    case ExtractorKind::mc_letter: return mc_letter();
    default: return full_text();
  }
}

nlohmann::json ExtractorSpec::to_json() const {
  nlohmann::json out{{"kind", std::string(extractor_kind_name(kind_))}};
  if (kind_ == ExtractorKind::regex_capture) out["pattern"] = pattern_;
  return out;
}

std::string ExtractorSpec::id() const {
  if (kind_ == ExtractorKind::regex_capture) return "regex:" + pattern_;
  return std::string(extractor_kind_name(kind_));
}

namespace {

// Last numeric literal in the text: optional sign, digits with optional
// comma-separated thousands groups, optional fractional part. Commas are
// stripped so "1,234" and "1234" extract equal.
std::string extract_numeric_final(std::string_view text) {
  std::string last;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_ascii_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    bool negative = false;
    if (start > 0 && (text[start - 1] == '-' || text[start - 1] == '+')) {
      const bool sign_attached = start < 2 || !is_ascii_alnum(text[start - 2]);
      if (sign_attached) negative = text[start - 1] == '-';
    }
    std::string digits;
    while (i < n && is_ascii_digit(text[i])) digits.push_back(text[i++]);
    // Thousands groups: a comma followed by exactly three digits.
    auto thousands_group_at = [&](std::size_t pos) {
      if (pos + 3 >= n) return false;  // need pos+1..pos+3 in range
      if (text[pos] != ',') return false;
      if (!is_ascii_digit(text[pos + 1]) || !is_ascii_digit(text[pos + 2]) || !is_ascii_digit(text[pos + 3]))
        return false;
      return pos + 4 >= n || !is_ascii_digit(text[pos + 4]);
    };
    while (i < n && thousands_group_at(i)) {
      digits.append(text.substr(i + 1, 3));
      i += 4;
    }
    if (i < n && text[i] == '.' && i + 1 < n && is_ascii_digit(text[i + 1])) {
      digits.push_back('.');
      ++i;
      while (i < n && is_ascii_digit(text[i])) digits.push_back(text[i++]);
    }
    last = negative ? "-" + digits : digits;
  }
  return last;
}

// Last letter A-E (either case) bounded by non-alphanumerics.
std::string extract_mc_letter(std::string_view text) {
  std::string last;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const char lower = static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    if (lower < 'a' || lower > 'e') continue;
    const bool left_ok = i == 0 || !is_ascii_alnum(text[i - 1]);
    const bool right_ok = i + 1 >= text.size() || !is_ascii_alnum(text[i + 1]);
    if (left_ok && right_ok) last.assign(1, lower);
  }
  return last;
}

std::string extract_regex(std::string_view text, const std::regex& pattern) {
  std::string subject(text);
  std::string captured;
  bool found = false;
  auto begin = std::sregex_iterator(subject.begin(), subject.end(), pattern);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    if (it->size() > 1 && (*it)[1].matched) {
      captured = (*it)[1].str();
      found = true;
    }
  }
  return found ? captured : std::string{};
}

}  // namespace

CanonicalAnswer extract_answer(std::string_view raw, const ExtractorSpec& spec) {
  const std::string id = spec.id();
  std::string extracted;
  switch (spec.kind()) {
    case ExtractorKind::full_text:
      return {canonicalize(raw), id};
    case ExtractorKind::numeric_final:
      extracted = extract_numeric_final(raw);
      break;
    case ExtractorKind::mc_letter:
      extracted = extract_mc_letter(raw);
      break;
    case ExtractorKind::regex_capture:
      extracted = extract_regex(raw, *spec.compiled());
      break;
  }
  if (extracted.empty()) return {std::string(kNoAnswerSentinel), id};
  return {canonicalize(extracted), id};
}

}  // namespace semstab::canon
