#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "core/metrics.hpp"

namespace semstab::reporting {

inline constexpr std::string_view kSchemaVersion = "1";

struct SweepPoint {
  std::string label;
  double sparsity_pct = 0.0;            // [0, 100]
  double ss = 0.0;                      // [0, 1]
  std::optional<double> delta_vs_dense; // absolute SS points vs the sparsity-0 stage
  std::optional<double> ppl;
};

nlohmann::json sweep_points_to_json(const std::vector<SweepPoint>& points);
std::vector<SweepPoint> sweep_points_from_json(const nlohmann::json& points);

// Band edges are configuration with figure-derived defaults; they are
// illustrative, not ground truth.
struct RegimeBands {
  double variance_dominated_max_pct = 25.0;
  double sweet_spot_max_pct = 40.0;

  void validate() const;
  static RegimeBands from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;
};

enum class Regime { variance_dominated, sweet_spot, bias_dominated };

std::string_view regime_name(Regime regime);

// Half-open bands: [0, variance_max) / [variance_max, sweet_max) / [sweet_max, 100].
Regime classify_regime(double sparsity_pct, const RegimeBands& bands);

struct SweepTable {
  std::vector<SweepPoint> points;  // sorted by sparsity ascending, deltas filled
  std::vector<Regime> regimes;     // parallel to points
  std::size_t peak_index = 0;      // argmax ss, ties toward lower sparsity
  RegimeBands bands;

  std::string markdown() const;
  std::string csv() const;
  nlohmann::json to_json() const;
};

// Validates, sorts, computes deltas against the sparsity-0 point when one
// exists, labels regimes, and marks the peak.
SweepTable emit_sweep(std::vector<SweepPoint> points, const RegimeBands& bands = {});

// Re-parses an emitted sweep CSV (and accepts minimal input CSVs that carry
// at least label, sparsity_pct and ss columns).
std::vector<SweepPoint> parse_sweep_csv(std::string_view csv_text);

struct ReportInputs {
  metrics::StabilitySummary summary;
  metrics::AccuracyPairing pairing;
  std::string system;
  std::string domain;
  nlohmann::json manifest;               // embedded verbatim
  std::int64_t failed_prompts = 0;       // excluded from SS
  std::int64_t no_answer_responses = 0;  // extraction-sentinel responses

  static ReportInputs from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;
};

struct ReportDocument {
  std::string markdown;
  nlohmann::json json;
};

// Pure function of its inputs: identical inputs produce byte-identical
// Markdown and JSON.
ReportDocument emit_compliance_report(const ReportInputs& inputs);

// One-line reporting-template row, as printed by the CLI after a run.
std::string template_row_line(const ReportInputs& inputs);

// Shortest representation that round-trips to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view what);

}  // namespace semstab::reporting
