#include "core/reporting.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "core/errors.hpp"
#include "core/jsonio.hpp"

namespace semstab::reporting {

std::string format_double(double value) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) return "0";
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    raise_config(std::string(what) + ": not a number: \"" + std::string(text) + "\"");
  }
  return value;
}

namespace {

std::string format_fixed(double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, value);
  return buf;
}

// Fraction rendered as a percentage, up to two decimals, trailing zeros
// trimmed: 0.64 -> "64%", 0.3333 -> "33.33%".
std::string format_pct(double frac) {
  std::string s = format_fixed(frac * 100.0, 2);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s + "%";
}

std::string format_signed(double value, int precision) {
  return (value >= 0 ? "+" : "") + format_fixed(value, precision);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

metrics::RiskLevel risk_from_name(std::string_view name) {
  for (auto level : {metrics::RiskLevel::insufficient, metrics::RiskLevel::limited,
                     metrics::RiskLevel::substantial, metrics::RiskLevel::high}) {
    if (metrics::risk_name(level) == name) return level;
  }
  raise_config("unknown risk level \"" + std::string(name) + "\"");
}

nlohmann::json pairing_to_json(const metrics::AccuracyPairing& p) {
  nlohmann::json out{
      {"available", p.accuracy.has_value()},
      {"stable_wrong_count", p.stable_wrong_count},
      {"stable_wrong_threshold", p.stable_wrong_threshold},
      {"graded_count", p.graded_count},
  };
  if (p.accuracy.has_value()) out["accuracy"] = *p.accuracy;
  return out;
}

metrics::AccuracyPairing pairing_from_json(const nlohmann::json& spec) {
  metrics::AccuracyPairing p;
  if (spec.contains("accuracy")) p.accuracy = spec.at("accuracy").get<double>();
  p.stable_wrong_count = spec.value("stable_wrong_count", std::int64_t{0});
  p.stable_wrong_threshold = spec.value("stable_wrong_threshold", 0.5);
  p.graded_count = spec.value("graded_count", std::int64_t{0});
  return p;
}

struct AlignmentRow {
  const char* framework;
  const char* provision;
  const char* contribution;
};

constexpr AlignmentRow kRegulatoryAlignment[] = {
    {"EU AI Act", "Article 15(1) - Robustness", "Quantifies robustness to input perturbation"},
    {"EU AI Act", "Article 15(3) - Technical solutions", "Measurable mitigation for consistency failures"},
    {"NIST AI RMF", "MEASURE 2.5 - Valid and Reliable", "Reliability metric for output consistency"},
    {"NIST AI RMF", "MEASURE 2.6 - Robustness", "Perturbation testing methodology"},
    {"ISO/IEC 42001", "6.1.4 - AI risk assessment", "Reproducible risk quantification"},
};

constexpr const char* kCaveat =
    "Semantic Stability measures robustness (output consistency), not accuracy (output "
    "correctness). SS must be paired with domain-specific accuracy validation. An AI system "
    "can achieve high SS by consistently producing incorrect outputs. Do not optimize SS in "
    "isolation.";

struct RiskBandRow {
  const char* range;
  metrics::RiskLevel level;
};

constexpr RiskBandRow kRiskBands[] = {
    {"[0.0, 0.3)", metrics::RiskLevel::insufficient},
    {"[0.3, 0.6)", metrics::RiskLevel::limited},
    {"[0.6, 0.9)", metrics::RiskLevel::substantial},
    {"[0.9, 1.0]", metrics::RiskLevel::high},
};

}  // namespace

nlohmann::json sweep_points_to_json(const std::vector<SweepPoint>& points) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json item{{"label", p.label}, {"sparsity_pct", p.sparsity_pct}, {"ss", p.ss}};
    if (p.delta_vs_dense) item["delta_vs_dense"] = *p.delta_vs_dense;
    if (p.ppl) item["ppl"] = *p.ppl;
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<SweepPoint> sweep_points_from_json(const nlohmann::json& points) {
  if (!points.is_array()) raise_config("sweep points: expected a JSON array");
  std::vector<SweepPoint> out;
  for (const auto& item : points) {
    SweepPoint p;
    p.label = require_field(item, "label", "sweep point").get<std::string>();
    p.sparsity_pct = require_field(item, "sparsity_pct", "sweep point").get<double>();
    p.ss = require_field(item, "ss", "sweep point").get<double>();
    if (item.contains("delta_vs_dense") && !item.at("delta_vs_dense").is_null()) {
      p.delta_vs_dense = item.at("delta_vs_dense").get<double>();
    }
    if (item.contains("ppl") && !item.at("ppl").is_null()) p.ppl = item.at("ppl").get<double>();
    out.push_back(std::move(p));
  }
  return out;
}

void RegimeBands::validate() const {
  if (!(variance_dominated_max_pct > 0.0 && variance_dominated_max_pct < sweet_spot_max_pct &&
        sweet_spot_max_pct < 100.0)) {
    raise_usage("regime bands must satisfy 0 < variance_max < sweet_max < 100");
  }
}

RegimeBands RegimeBands::from_json(const nlohmann::json& spec) {
  RegimeBands bands;
  if (!spec.is_object()) raise_config("bands: expected an object");
  bands.variance_dominated_max_pct = spec.value("variance_dominated_max_pct", 25.0);
  bands.sweet_spot_max_pct = spec.value("sweet_spot_max_pct", 40.0);
  bands.validate();
  return bands;
}

nlohmann::json RegimeBands::to_json() const {
  return {{"variance_dominated_max_pct", variance_dominated_max_pct},
          {"sweet_spot_max_pct", sweet_spot_max_pct}};
}

std::string_view regime_name(Regime regime) {
  switch (regime) {
    case Regime::variance_dominated: return "variance-dominated";
    case Regime::sweet_spot: return "sweet-spot";
    case Regime::bias_dominated: return "bias-dominated";
  }
  return "variance-dominated";
}

Regime classify_regime(double sparsity_pct, const RegimeBands& bands) {
  bands.validate();
  if (sparsity_pct < bands.variance_dominated_max_pct) return Regime::variance_dominated;
  if (sparsity_pct < bands.sweet_spot_max_pct) return Regime::sweet_spot;
  return Regime::bias_dominated;
}

SweepTable emit_sweep(std::vector<SweepPoint> points, const RegimeBands& bands) {
  if (points.empty()) raise_usage("emit_sweep: at least one point required");
  bands.validate();
  for (const auto& p : points) {
    if (!(p.sparsity_pct >= 0.0 && p.sparsity_pct <= 100.0)) {
      raise_usage("emit_sweep: sparsity_pct out of [0,100] for \"" + p.label + "\"");
    }
    if (!(p.ss >= 0.0 && p.ss <= 1.0)) {
      raise_usage("emit_sweep: ss out of [0,1] for \"" + p.label + "\"");
    }
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) { return a.sparsity_pct < b.sparsity_pct; });
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].sparsity_pct == points[i - 1].sparsity_pct) {
      raise_usage("emit_sweep: duplicate sparsity " + format_double(points[i].sparsity_pct));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (points[j].label == points[i].label) {
        raise_usage("emit_sweep: duplicate label \"" + points[i].label + "\"");
      }
    }
  }

  // Delta against the dense (sparsity 0) stage when one is present.
  if (points.front().sparsity_pct == 0.0) {
    const double dense_ss = points.front().ss;
    points.front().delta_vs_dense.reset();
    for (std::size_t i = 1; i < points.size(); ++i) {
      points[i].delta_vs_dense = points[i].ss - dense_ss;
    }
  }

  SweepTable table;
  table.bands = bands;
  table.peak_index = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    // Strict > keeps ties on the lower-sparsity point.
    if (points[i].ss > points[table.peak_index].ss) table.peak_index = i;
  }
  table.regimes.reserve(points.size());
  for (const auto& p : points) table.regimes.push_back(classify_regime(p.sparsity_pct, bands));
  table.points = std::move(points);
  return table;
}

std::string SweepTable::markdown() const {
  std::ostringstream out;
  out << "# Stability Sweep\n\n";
  out << "schema_version: " << kSchemaVersion << "\n\n";
  out << "| Stage | Sparsity | SS | Delta vs dense | PPL | Regime | Peak |\n";
  out << "| --- | --- | --- | --- | --- | --- | --- |\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out << "| " << p.label << " | " << format_fixed(p.sparsity_pct, 1) << "% | " << format_fixed(p.ss, 3)
        << " | ";
    if (p.delta_vs_dense) {
      out << format_signed(*p.delta_vs_dense, 3) << " (" << format_signed(*p.delta_vs_dense * 100.0, 1)
          << " pts)";
    } else {
      out << "-";
    }
    out << " | " << (p.ppl ? format_fixed(*p.ppl, 2) : std::string("-")) << " | "
        << regime_name(regimes[i]) << " | " << (i == peak_index ? "peak" : "") << " |\n";
  }
  out << "\nBands (configuration, illustrative): variance-dominated below "
      << format_double(bands.variance_dominated_max_pct) << "%, sweet-spot in ["
      << format_double(bands.variance_dominated_max_pct) << "%, "
      << format_double(bands.sweet_spot_max_pct) << "%), bias-dominated at or above "
      << format_double(bands.sweet_spot_max_pct) << "%.\n";
  out << "Peak stability: " << points[peak_index].label << " at "
      << format_fixed(points[peak_index].sparsity_pct, 1) << "% sparsity (SS "
      << format_fixed(points[peak_index].ss, 3) << ").\n";
  return out.str();
}

std::string SweepTable::csv() const {
  std::ostringstream out;
  out << "label,sparsity_pct,ss,delta_vs_dense,ppl,regime,is_peak\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out << csv_escape(p.label) << ',' << format_double(p.sparsity_pct) << ',' << format_double(p.ss)
        << ',' << (p.delta_vs_dense ? format_double(*p.delta_vs_dense) : std::string())
        << ',' << (p.ppl ? format_double(*p.ppl) : std::string()) << ',' << regime_name(regimes[i])
        << ',' << (i == peak_index ? "true" : "false") << '\n';
  }
  return out.str();
}

nlohmann::json SweepTable::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    nlohmann::json item{{"label", p.label},
                        {"sparsity_pct", p.sparsity_pct},
                        {"ss", p.ss},
                        {"regime", std::string(regime_name(regimes[i]))},
                        {"is_peak", i == peak_index}};
    if (p.delta_vs_dense) item["delta_vs_dense"] = *p.delta_vs_dense;
    if (p.ppl) item["ppl"] = *p.ppl;
    items.push_back(std::move(item));
  }
  return {{"schema_version", std::string(kSchemaVersion)},
          {"bands", bands.to_json()},
          {"peak_label", points[peak_index].label},
          {"points", std::move(items)}};
}

std::vector<SweepPoint> parse_sweep_csv(std::string_view csv_text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : csv_text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  if (lines.empty()) raise_config("sweep CSV: empty input");

  const auto header = split_csv_line(lines.front());
  auto column = [&](std::string_view name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int col_label = column("label");
  const int col_sparsity = column("sparsity_pct");
  const int col_ss = column("ss");
  const int col_delta = column("delta_vs_dense");
  const int col_ppl = column("ppl");
  if (col_label < 0 || col_sparsity < 0 || col_ss < 0) {
    raise_config("sweep CSV: header must contain label, sparsity_pct and ss columns");
  }

  std::vector<SweepPoint> points;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto fields = split_csv_line(lines[row]);
    auto field = [&](int idx) -> std::string_view {
      return idx >= 0 && idx < static_cast<int>(fields.size()) ? std::string_view(fields[idx])
                                                               : std::string_view{};
    };
    SweepPoint p;
    p.label = std::string(field(col_label));
    p.sparsity_pct = parse_double(field(col_sparsity), "sweep CSV sparsity_pct");
    p.ss = parse_double(field(col_ss), "sweep CSV ss");
    if (!field(col_delta).empty()) p.delta_vs_dense = parse_double(field(col_delta), "sweep CSV delta");
    if (!field(col_ppl).empty()) p.ppl = parse_double(field(col_ppl), "sweep CSV ppl");
    points.push_back(std::move(p));
  }
  if (points.empty()) raise_config("sweep CSV: no data rows");
  return points;
}

ReportInputs ReportInputs::from_json(const nlohmann::json& spec) {
  ReportInputs inputs;
  const auto& row = require_field(spec, "template_row", "report");
  inputs.system = require_field(row, "system", "report.template_row").get<std::string>();
  inputs.domain = require_field(row, "domain", "report.template_row").get<std::string>();
  inputs.summary.n = require_field(row, "n", "report.template_row").get<std::int64_t>();
  inputs.summary.k = require_field(row, "k", "report.template_row").get<std::int64_t>();
  inputs.summary.ss = require_field(row, "ss", "report.template_row").get<double>();
  inputs.summary.frac_pc_below_half =
      require_field(row, "frac_pc_below_half", "report.template_row").get<double>();
  inputs.summary.frac_pc_at_least_08 =
      require_field(row, "frac_pc_at_least_08", "report.template_row").get<double>();
  inputs.summary.risk_level =
      risk_from_name(require_field(require_field(spec, "risk", "report"), "level", "report.risk")
                         .get<std::string>());
  if (spec.contains("accuracy_pairing")) inputs.pairing = pairing_from_json(spec.at("accuracy_pairing"));
  if (spec.contains("counts")) {
    inputs.failed_prompts = spec.at("counts").value("failed_prompts", std::int64_t{0});
    inputs.no_answer_responses = spec.at("counts").value("no_answer_responses", std::int64_t{0});
  }
  if (spec.contains("manifest")) inputs.manifest = spec.at("manifest");
  return inputs;
}

nlohmann::json ReportInputs::to_json() const {
  return emit_compliance_report(*this).json;
}

std::string template_row_line(const ReportInputs& inputs) {
  std::ostringstream out;
  out << "system=" << inputs.system << " domain=" << inputs.domain << " N=" << inputs.summary.n
      << " k=" << inputs.summary.k << " SS=" << format_fixed(inputs.summary.ss, 3)
      << " %PC<0.5=" << format_pct(inputs.summary.frac_pc_below_half)
      << " %PC>=0.8=" << format_pct(inputs.summary.frac_pc_at_least_08)
      << " risk=" << metrics::risk_name(inputs.summary.risk_level);
  return out.str();
}

ReportDocument emit_compliance_report(const ReportInputs& inputs) {
  const auto& s = inputs.summary;

  nlohmann::json alignment = nlohmann::json::array();
  for (const auto& row : kRegulatoryAlignment) {
    alignment.push_back({{"framework", row.framework},
                         {"provision", row.provision},
                         {"contribution", row.contribution}});
  }

  nlohmann::json doc{
      {"schema_version", std::string(kSchemaVersion)},
      {"report_type", "semantic-stability-compliance"},
      {"template_row",
       {{"system", inputs.system},
        {"domain", inputs.domain},
        {"n", s.n},
        {"k", s.k},
        {"ss", s.ss},
        {"frac_pc_below_half", s.frac_pc_below_half},
        {"frac_pc_at_least_08", s.frac_pc_at_least_08}}},
      {"risk",
       {{"level", std::string(metrics::risk_name(s.risk_level))},
        {"recommendation", std::string(metrics::risk_recommendation(s.risk_level))},
        {"boundary_convention",
         "half-open bands [0,0.3) [0.3,0.6) [0.6,0.9); SS >= 0.9 classifies as High"}}},
      {"caveat", kCaveat},
      {"accuracy_pairing", pairing_to_json(inputs.pairing)},
      {"counts",
       {{"failed_prompts", inputs.failed_prompts}, {"no_answer_responses", inputs.no_answer_responses}}},
      {"regulatory_alignment", std::move(alignment)},
      {"manifest", inputs.manifest},
  };

  std::ostringstream md;
  md << "# Semantic Stability Compliance Report\n\n";
  md << "schema_version: " << kSchemaVersion << "\n\n";
  md << "## Reporting Template\n\n";
  md << "| AI System | Evaluation Domain | N | k | SS | %PC<0.5 | %PC>=0.8 |\n";
  md << "| --- | --- | --- | --- | --- | --- | --- |\n";
  md << "| " << inputs.system << " | " << inputs.domain << " | " << s.n << " | " << s.k << " | "
     << format_fixed(s.ss, 3) << " | " << format_pct(s.frac_pc_below_half) << " | "
     << format_pct(s.frac_pc_at_least_08) << " |\n\n";

  md << "## Risk Classification\n\n";
  md << "Robustness level: **" << metrics::risk_name(s.risk_level) << "**. "
     << metrics::risk_recommendation(s.risk_level) << ".\n\n";
  md << "| SS range | Robustness level | Risk management recommendation |\n";
  md << "| --- | --- | --- |\n";
  for (const auto& band : kRiskBands) {
    md << "| " << band.range << " | " << metrics::risk_name(band.level) << " | "
       << metrics::risk_recommendation(band.level) << " |\n";
  }
  md << "\nBand boundaries are half-open: an SS exactly on a boundary takes the higher band, "
        "and SS = 0.9 classifies as High.\n\n";
  md << "> " << kCaveat << "\n\n";

  md << "## Accuracy Pairing\n\n";
  if (inputs.pairing.accuracy.has_value()) {
    md << "- accuracy over " << inputs.pairing.graded_count
       << " gold-labeled prompts: " << format_fixed(*inputs.pairing.accuracy, 3) << "\n";
    md << "- stable-but-wrong prompts (PC >= " << format_double(inputs.pairing.stable_wrong_threshold)
       << " with mode answer != gold): " << inputs.pairing.stable_wrong_count << "\n\n";
  } else {
    md << "No gold answers were supplied; accuracy is unavailable for this run. Pair this SS "
          "result with a domain-specific accuracy evaluation before any deployment decision.\n\n";
  }

  md << "## Run Health\n\n";
  md << "- failed prompts (excluded from SS): " << inputs.failed_prompts << "\n";
  md << "- no-answer extraction sentinels among responses: " << inputs.no_answer_responses << "\n\n";

  md << "## Regulatory Alignment\n\n";
  md << "| Framework | Provision | Contribution |\n";
  md << "| --- | --- | --- |\n";
  for (const auto& row : kRegulatoryAlignment) {
    md << "| " << row.framework << " | " << row.provision << " | " << row.contribution << " |\n";
  }
  md << "\n## Run Manifest\n\n";
  md << "```json\n" << inputs.manifest.dump(2) << "\n```\n";

  return {md.str(), std::move(doc)};
}

}  // namespace semstab::reporting
