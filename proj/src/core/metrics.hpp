#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "core/canon.hpp"

namespace semstab::metrics {

enum class RiskLevel { insufficient = 0, limited = 1, substantial = 2, high = 3 };

std::string_view risk_name(RiskLevel level);
std::string_view risk_recommendation(RiskLevel level);

// Paraphrase consistency for one prompt, kept as the exact rational
// mode_count/k so the 0.5 and 0.8 histogram boundaries never hit float
// equality hazards.
struct PCValue {
  std::int64_t mode_count = 0;
  std::int64_t k = 0;
  canon::CanonicalAnswer mode_answer;
  bool tie = false;

  double value() const { return static_cast<double>(mode_count) / static_cast<double>(k); }
  bool below_half() const { return 2 * mode_count < k; }      // PC < 0.5, strict
  bool at_least_08() const { return 5 * mode_count >= 4 * k; }  // PC >= 0.8, inclusive
};

// Mode agreement over k answers (k >= 2, already canonicalized). On ties the
// reported mode answer is the code-point-smallest canonical form and
// tie=true; the PC value itself is tie-independent.
PCValue compute_pc(std::span<const canon::CanonicalAnswer> answers);

// Dataset mean of PC values. All values must share the same k; means over
// heterogeneous k are rejected.
double compute_ss(std::span<const PCValue> pc_values);

struct HistogramStats {
  double frac_below_half = 0.0;
  double frac_at_least_08 = 0.0;
};

HistogramStats histogram_stats(std::span<const PCValue> pc_values);

// Half-open bands: [0,0.3) insufficient, [0.3,0.6) limited, [0.6,0.9)
// substantial, [0.9,1] high.
RiskLevel classify_risk(double ss);

struct StabilitySummary {
  double ss = 0.0;
  std::int64_t n = 0;
  std::int64_t k = 0;
  double frac_pc_below_half = 0.0;
  double frac_pc_at_least_08 = 0.0;
  RiskLevel risk_level = RiskLevel::insufficient;
};

StabilitySummary summarize(std::span<const PCValue> pc_values);

struct AccuracyPairing {
  std::optional<double> accuracy;          // absent when no gold answers were supplied
  std::int64_t stable_wrong_count = 0;     // PC >= threshold and mode != gold
  double stable_wrong_threshold = 0.5;
  std::int64_t graded_count = 0;           // prompts that had a gold answer
};

// Minimal view of a prompt outcome for accuracy pairing.
struct GradedResult {
  PCValue pc;
  std::optional<canon::CanonicalAnswer> gold;
};

AccuracyPairing pair_accuracy(std::span<const GradedResult> results, double stable_threshold = 0.5);

}  // namespace semstab::metrics
