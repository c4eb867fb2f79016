#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/reporting.hpp"

namespace semstab::synthlab {

// Exact enumeration is capped so the oracle stays sub-second at desk scale.
inline constexpr std::int64_t kEnumerationBound = 10'000'000;

// Parametric answer distribution. Each paraphrase independently draws one of
// `pathway_count` pathways and then an answer from that pathway's
// distribution. Generated pathways mix the base distribution with a uniform
// kernel: pathway j uses lambda_j = min(1, spread * c_j) with seeded
// c_j ~ U[0,1), so shrinking spread concentrates every pathway back onto the
// base distribution's mode.
class SyntheticModel {
 public:
  struct GenerativeSpec {
    std::vector<double> base_probs;
    double spread = 0.0;
    std::int64_t pathway_count = 1;
    std::uint64_t seed = 0;
    std::size_t bias_target_index = 0;  // where bias increments move truth mass
  };

  static SyntheticModel generate(std::vector<std::string> answers, std::size_t truth_index,
                                 GenerativeSpec spec);
  static SyntheticModel explicit_probs(std::vector<std::string> answers, std::size_t truth_index,
                                       std::vector<std::vector<double>> pathway_probs);

  static SyntheticModel from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;

  const std::vector<std::string>& answers() const { return answers_; }
  std::size_t truth_index() const { return truth_index_; }
  const std::vector<std::vector<double>>& pathway_probs() const { return pathway_probs_; }
  const GenerativeSpec* generative() const { return generative_ ? &*generative_ : nullptr; }

  // Probability on non-truth answers, averaged over pathways.
  double bias_mass() const;
  double spread() const { return generative_ ? generative_->spread : 0.0; }

  // Marginal answer distribution (mean over pathways).
  std::vector<double> mixture() const;

  void validate() const;

 private:
  std::vector<std::string> answers_;
  std::size_t truth_index_ = 0;
  std::vector<std::vector<double>> pathway_probs_;
  std::optional<GenerativeSpec> generative_;
};

struct ScheduleStage {
  std::string label;
  double sparsity_pct = 0.0;
  double spread_multiplier = 1.0;  // (0, 1]
  double bias_increment = 0.0;     // >= 0, mass moved off the truth answer
};

struct CompressionSchedule {
  std::vector<ScheduleStage> stages;

  void validate() const;  // sparsity strictly increasing, multiplier/increment ranges
  static CompressionSchedule from_json(const nlohmann::json& spec);
  nlohmann::json to_json() const;
};

// Exact E[PC@k]: enumerates every k-tuple of answers weighted by its product
// probability and scores each tuple with metrics::compute_pc. Rejects inputs
// with |answer_space|^k above kEnumerationBound.
double expected_pc_exact(const SyntheticModel& model, int k);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

// Seeded Monte Carlo companion to the exact oracle.
McEstimate expected_pc_mc(const SyntheticModel& model, int k, std::int64_t trials, std::uint64_t seed);

// Categorical analogue of the squared-bias / variance split: bias is the
// pathway-averaged modal disagreement with truth (ties resolved toward
// truth), variance is the collision complement 1 - sum_a mixture[a]^2, i.e.
// the probability that two independent draws disagree.
struct ErrorDecomposition {
  double bias_sq = 0.0;
  double variance = 0.0;
  double total = 0.0;
};

ErrorDecomposition decompose_error(const SyntheticModel& model);

struct StudentCheck {
  bool holds = false;  // bias^2_student + var_student < var_teacher, strict
  ErrorDecomposition student;
  ErrorDecomposition teacher;
};

StudentCheck check_student_condition(const SyntheticModel& student, const SyntheticModel& teacher);

// Applies each stage's spread multiplier and bias increment to the base
// model, computes E[PC@k] exactly per stage, and returns points consumable
// by reporting::emit_sweep. Requires a generatively specified base model.
std::vector<reporting::SweepPoint> simulate_phase_curve(const SyntheticModel& base,
                                                        const CompressionSchedule& schedule, int k);

}  // namespace semstab::synthlab
