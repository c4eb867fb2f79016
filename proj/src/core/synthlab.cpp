#include "core/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "core/errors.hpp"
#include "core/jsonio.hpp"
#include "core/metrics.hpp"
#include "core/rng.hpp"

namespace semstab::synthlab {

namespace {

constexpr double kRowSumTolerance = 1e-12;
constexpr double kBiasMassTolerance = 1e-9;
constexpr const char* kSyntheticExtractorId = "synthetic";

void normalize_row(std::vector<double>& row) {
  double sum = 0.0;
  for (double v : row) sum += v;
  if (sum <= 0.0) raise_config("synthetic model: probability row sums to zero");
  for (double& v : row) v /= sum;
}

// Neumaier compensated accumulator; fixed summation order keeps results
// bit-identical across runs.
struct CompensatedSum {
  double sum = 0.0;
  double compensation = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      compensation += (sum - t) + x;
    } else {
      compensation += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + compensation; }
};

}  // namespace

SyntheticModel SyntheticModel::generate(std::vector<std::string> answers, std::size_t truth_index,
                                        GenerativeSpec spec) {
  SyntheticModel model;
  model.answers_ = std::move(answers);
  model.truth_index_ = truth_index;
  const std::size_t a = model.answers_.size();
  if (a == 0) raise_config("synthetic model: empty answer space");
  if (spec.base_probs.size() != a) {
    raise_config("synthetic model: base_probs length must match answer space");
  }
  if (spec.spread < 0.0) raise_config("synthetic model: spread must be >= 0");
  if (spec.pathway_count < 1) raise_config("synthetic model: pathway_count must be >= 1");
  if (spec.bias_target_index >= a) raise_config("synthetic model: bias target out of range");

  std::vector<double> base = spec.base_probs;
  normalize_row(base);

  Rng rng(spec.seed);
  const double uniform = 1.0 / static_cast<double>(a);
  model.pathway_probs_.reserve(static_cast<std::size_t>(spec.pathway_count));
  for (std::int64_t j = 0; j < spec.pathway_count; ++j) {
    const double lambda = std::min(1.0, spec.spread * rng.uniform01());
    std::vector<double> row(a);
    for (std::size_t idx = 0; idx < a; ++idx) {
      row[idx] = (1.0 - lambda) * base[idx] + lambda * uniform;
    }
    normalize_row(row);
    model.pathway_probs_.push_back(std::move(row));
  }
  spec.base_probs = std::move(base);
  model.generative_ = std::move(spec);
  model.validate();
  return model;
}

SyntheticModel SyntheticModel::explicit_probs(std::vector<std::string> answers, std::size_t truth_index,
                                              std::vector<std::vector<double>> pathway_probs) {
  SyntheticModel model;
  model.answers_ = std::move(answers);
  model.truth_index_ = truth_index;
  model.pathway_probs_ = std::move(pathway_probs);
  model.validate();
  return model;
}

SyntheticModel SyntheticModel::from_json(const nlohmann::json& spec) {
  if (!spec.is_object()) raise_config("synthetic model: expected an object");
  std::vector<std::string> answers =
      require_field(spec, "answers", "synthetic model").get<std::vector<std::string>>();
  if (answers.empty()) raise_config("synthetic model: empty answer space");
  for (std::size_t i = 0; i < answers.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (answers[i] == answers[j]) raise_config("synthetic model: duplicate answer \"" + answers[i] + "\"");
    }
  }

  std::size_t truth_index = 0;
  if (spec.contains("truth")) {
    const std::string truth = spec.at("truth").get<std::string>();
    auto it = std::find(answers.begin(), answers.end(), truth);
    if (it == answers.end()) raise_config("synthetic model: truth \"" + truth + "\" not in answer space");
    truth_index = static_cast<std::size_t>(it - answers.begin());
  } else if (spec.contains("truth_index")) {
    truth_index = spec.at("truth_index").get<std::size_t>();
    if (truth_index >= answers.size()) raise_config("synthetic model: truth_index out of range");
  } else {
    raise_config("synthetic model: missing \"truth\" (or \"truth_index\")");
  }

  SyntheticModel model;
  if (spec.contains("pathway_probs")) {
    model = explicit_probs(std::move(answers), truth_index,
                           spec.at("pathway_probs").get<std::vector<std::vector<double>>>());
  } else {
    GenerativeSpec gen;
    gen.base_probs = require_field(spec, "base_probs", "synthetic model").get<std::vector<double>>();
    gen.spread = spec.value("spread", 0.0);
    gen.pathway_count = spec.value("pathways", std::int64_t{1});
    gen.seed = spec.value("seed", std::uint64_t{0});
    if (spec.contains("bias_target")) {
      const std::string target = spec.at("bias_target").get<std::string>();
      auto it = std::find(answers.begin(), answers.end(), target);
      if (it == answers.end()) {
        raise_config("synthetic model: bias_target \"" + target + "\" not in answer space");
      }
      gen.bias_target_index = static_cast<std::size_t>(it - answers.begin());
    } else {
      gen.bias_target_index = truth_index == 0 && answers.size() > 1 ? 1 : 0;
    }
    if (gen.bias_target_index == truth_index && answers.size() > 1) {
      raise_config("synthetic model: bias_target must differ from truth");
    }
    model = generate(std::move(answers), truth_index, std::move(gen));
  }

  if (spec.contains("bias_mass")) {
    const double declared = spec.at("bias_mass").get<double>();
    if (std::abs(declared - model.bias_mass()) > kBiasMassTolerance) {
      raise_config("synthetic model: declared bias_mass " + reporting::format_double(declared) +
                   " disagrees with probs-derived value " +
                   reporting::format_double(model.bias_mass()));
    }
  }
  return model;
}

nlohmann::json SyntheticModel::to_json() const {
  nlohmann::json out{{"answers", answers_}, {"truth", answers_[truth_index_]}};
  if (generative_) {
    out["base_probs"] = generative_->base_probs;
    out["spread"] = generative_->spread;
    out["pathways"] = generative_->pathway_count;
    out["seed"] = generative_->seed;
    out["bias_target"] = answers_[generative_->bias_target_index];
  } else {
    out["pathway_probs"] = pathway_probs_;
  }
  out["bias_mass"] = bias_mass();
  return out;
}

double SyntheticModel::bias_mass() const {
  double truth_mass = 0.0;
  for (const auto& row : pathway_probs_) truth_mass += row[truth_index_];
  return 1.0 - truth_mass / static_cast<double>(pathway_probs_.size());
}

std::vector<double> SyntheticModel::mixture() const {
  std::vector<double> mix(answers_.size(), 0.0);
  for (const auto& row : pathway_probs_) {
    for (std::size_t a = 0; a < mix.size(); ++a) mix[a] += row[a];
  }
  const double j = static_cast<double>(pathway_probs_.size());
  for (double& v : mix) v /= j;
  return mix;
}

void SyntheticModel::validate() const {
  if (answers_.empty()) raise_config("synthetic model: empty answer space");
  if (truth_index_ >= answers_.size()) raise_config("synthetic model: truth_index out of range");
  if (pathway_probs_.empty()) raise_config("synthetic model: needs at least one pathway");
  for (const auto& row : pathway_probs_) {
    if (row.size() != answers_.size()) {
      raise_config("synthetic model: pathway row length must match answer space");
    }
    double sum = 0.0;
    for (double v : row) {
      if (v < 0.0) raise_config("synthetic model: negative probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      raise_config("synthetic model: pathway probabilities sum to " + reporting::format_double(sum));
    }
  }
}

void CompressionSchedule::validate() const {
  if (stages.empty()) raise_config("schedule: needs at least one stage");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& stage = stages[i];
    if (!(stage.sparsity_pct >= 0.0 && stage.sparsity_pct <= 100.0)) {
      raise_config("schedule: sparsity_pct out of [0,100]");
    }
    if (!(stage.spread_multiplier > 0.0 && stage.spread_multiplier <= 1.0)) {
      raise_config("schedule: spread_multiplier must lie in (0,1]");
    }
    if (stage.bias_increment < 0.0) raise_config("schedule: bias_increment must be >= 0");
    if (i > 0 && stages[i].sparsity_pct <= stages[i - 1].sparsity_pct) {
      raise_config("schedule: sparsity must be strictly increasing");
    }
  }
}

CompressionSchedule CompressionSchedule::from_json(const nlohmann::json& spec) {
  CompressionSchedule schedule;
  const auto& stages = require_field(spec, "stages", "schedule");
  if (!stages.is_array()) raise_config("schedule.stages: expected an array");
  std::size_t index = 0;
  for (const auto& item : stages) {
    ScheduleStage stage;
    stage.label = item.value("label", "S" + std::to_string(index));
    stage.sparsity_pct = require_field(item, "sparsity_pct", "schedule stage").get<double>();
    stage.spread_multiplier = item.value("spread_multiplier", 1.0);
    stage.bias_increment = item.value("bias_increment", 0.0);
    schedule.stages.push_back(std::move(stage));
    ++index;
  }
  schedule.validate();
  return schedule;
}

nlohmann::json CompressionSchedule::to_json() const {
  nlohmann::json stages_json = nlohmann::json::array();
  for (const auto& stage : stages) {
    stages_json.push_back({{"label", stage.label},
                           {"sparsity_pct", stage.sparsity_pct},
                           {"spread_multiplier", stage.spread_multiplier},
                           {"bias_increment", stage.bias_increment}});
  }
  return {{"stages", std::move(stages_json)}};
}

namespace {

// Walks every k-tuple depth-first with running product weights, scoring each
// tuple's mode count through metrics::compute_pc. A small memo keyed on the
// tuple's sorted digits (multiplicities determine PC; compute_pc is
// permutation-invariant) keeps the string-level scoring off the hot path.
class ExactEnumerator {
 public:
  ExactEnumerator(const std::vector<double>& mixture, const std::vector<canon::CanonicalAnswer>& alphabet,
                  int k)
      : mixture_(mixture),
        alphabet_(alphabet),
        k_(k),
        digits_(static_cast<std::size_t>(k), 0),
        tuple_(static_cast<std::size_t>(k), alphabet.front()) {
    use_digit_key_ = alphabet.size() <= 32 && static_cast<std::size_t>(k) * 5 <= 60;
    use_count_key_ = !use_digit_key_ && alphabet.size() <= 12;
  }

  double run() {
    walk(0, 1.0);
    return acc_.value() / static_cast<double>(k_);
  }

 private:
  void walk(int depth, double weight) {
    if (depth == k_) {
      acc_.add(weight * static_cast<double>(mode_count()));
      return;
    }
    for (std::size_t a = 0; a < mixture_.size(); ++a) {
      if (mixture_[a] == 0.0) continue;  // zero-weight subtree contributes exactly nothing
      digits_[static_cast<std::size_t>(depth)] = a;
      walk(depth + 1, weight * mixture_[a]);
    }
  }

  std::int64_t mode_count() {
    std::uint64_t key = 0;
    bool memoized = false;
    if (use_digit_key_) {
      std::array<std::size_t, 16> sorted{};
      std::copy(digits_.begin(), digits_.end(), sorted.begin());
      std::sort(sorted.begin(), sorted.begin() + k_);
      for (int i = 0; i < k_; ++i) key = (key << 5) | sorted[static_cast<std::size_t>(i)];
      memoized = true;
    } else if (use_count_key_) {
      std::array<std::uint64_t, 12> counts{};
      for (std::size_t d : digits_) ++counts[d];
      for (std::size_t a = 0; a < alphabet_.size(); ++a) key = (key << 5) | counts[a];
      memoized = true;
    }
    if (memoized) {
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    for (int i = 0; i < k_; ++i) {
      tuple_[static_cast<std::size_t>(i)] = alphabet_[digits_[static_cast<std::size_t>(i)]];
    }
    const std::int64_t mode = metrics::compute_pc(tuple_).mode_count;
    if (memoized) memo_.emplace(key, mode);
    return mode;
  }

  const std::vector<double>& mixture_;
  const std::vector<canon::CanonicalAnswer>& alphabet_;
  int k_;
  std::vector<std::size_t> digits_;
  std::vector<canon::CanonicalAnswer> tuple_;
  bool use_digit_key_ = false;
  bool use_count_key_ = false;
  std::unordered_map<std::uint64_t, std::int64_t> memo_;
  CompensatedSum acc_;
};

std::vector<canon::CanonicalAnswer> make_alphabet(const SyntheticModel& model) {
  std::vector<canon::CanonicalAnswer> alphabet;
  alphabet.reserve(model.answers().size());
  for (const auto& id : model.answers()) alphabet.push_back({id, kSyntheticExtractorId});
  return alphabet;
}

}  // namespace

double expected_pc_exact(const SyntheticModel& model, int k) {
  if (k < 2) raise_usage("expected_pc_exact: k must be >= 2");
  const std::size_t a = model.answers().size();
  std::int64_t combos = 1;
  for (int i = 0; i < k; ++i) {
    combos *= static_cast<std::int64_t>(a);
    if (combos > kEnumerationBound) {
      raise_usage("expected_pc_exact: |answer_space|^k exceeds " + std::to_string(kEnumerationBound) +
                  "; use expected_pc_mc instead");
    }
  }
  const auto alphabet = make_alphabet(model);
  const auto mixture = model.mixture();
  ExactEnumerator enumerator(mixture, alphabet, k);
  return enumerator.run();
}

McEstimate expected_pc_mc(const SyntheticModel& model, int k, std::int64_t trials, std::uint64_t seed) {
  if (k < 2) raise_usage("expected_pc_mc: k must be >= 2");
  if (trials < 1) raise_usage("expected_pc_mc: trials must be >= 1");

  const auto alphabet = make_alphabet(model);
  const auto& pathways = model.pathway_probs();
  Rng rng(seed);

  std::vector<canon::CanonicalAnswer> tuple(static_cast<std::size_t>(k), alphabet.front());
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    for (int i = 0; i < k; ++i) {
      const auto& row = pathways[rng.uniform_below(pathways.size())];
      const double u = rng.uniform01();
      double cumulative = 0.0;
      std::size_t pick = row.size() - 1;
      for (std::size_t idx = 0; idx < row.size(); ++idx) {
        cumulative += row[idx];
        if (u < cumulative) {
          pick = idx;
          break;
        }
      }
      tuple[static_cast<std::size_t>(i)] = alphabet[pick];
    }
    const auto pc = metrics::compute_pc(tuple);
    const double x = pc.value();
    const double delta = x - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (x - mean);
  }

  McEstimate out;
  out.estimate = mean;
  if (trials > 1) {
    const double sample_var = m2 / static_cast<double>(trials - 1);
    out.standard_error = std::sqrt(sample_var / static_cast<double>(trials));
  }
  return out;
}

ErrorDecomposition decompose_error(const SyntheticModel& model) {
  const auto& pathways = model.pathway_probs();
  const std::size_t truth = model.truth_index();

  double disagree = 0.0;
  for (const auto& row : pathways) {
    const double max_prob = *std::max_element(row.begin(), row.end());
    // Ties resolve toward truth: a pathway whose truth mass reaches the max
    // counts as agreeing.
    if (row[truth] != max_prob) disagree += 1.0;
  }
  const double bias = disagree / static_cast<double>(pathways.size());

  double collision = 0.0;
  for (double v : model.mixture()) collision += v * v;

  ErrorDecomposition out;
  out.bias_sq = bias * bias;
  out.variance = 1.0 - collision;
  out.total = out.bias_sq + out.variance;
  return out;
}

StudentCheck check_student_condition(const SyntheticModel& student, const SyntheticModel& teacher) {
  if (student.answers() != teacher.answers() || student.truth_index() != teacher.truth_index()) {
    raise_usage("check_student_condition: student and teacher must share the same answer space");
  }
  StudentCheck check;
  check.student = decompose_error(student);
  check.teacher = decompose_error(teacher);
  check.holds = check.student.bias_sq + check.student.variance < check.teacher.variance;
  return check;
}

std::vector<reporting::SweepPoint> simulate_phase_curve(const SyntheticModel& base,
                                                        const CompressionSchedule& schedule, int k) {
  schedule.validate();
  const auto* gen = base.generative();
  if (gen == nullptr) {
    raise_usage("simulate_phase_curve: base model must be generatively specified "
                "(base_probs/spread/pathways/seed), not explicit pathway_probs");
  }

  std::vector<reporting::SweepPoint> points;
  points.reserve(schedule.stages.size());
  for (const auto& stage : schedule.stages) {
    SyntheticModel::GenerativeSpec spec = *gen;
    if (stage.bias_increment > spec.base_probs[base.truth_index()] + 1e-15) {
      raise_usage("simulate_phase_curve: stage \"" + stage.label +
                  "\" bias_increment exceeds available truth mass");
    }
    spec.base_probs[base.truth_index()] -= stage.bias_increment;
    spec.base_probs[spec.bias_target_index] += stage.bias_increment;
    spec.spread = gen->spread * stage.spread_multiplier;

    const SyntheticModel stage_model =
        SyntheticModel::generate(base.answers(), base.truth_index(), std::move(spec));
    reporting::SweepPoint point;
    point.label = stage.label;
    point.sparsity_pct = stage.sparsity_pct;
    point.ss = expected_pc_exact(stage_model, k);
    points.push_back(std::move(point));
  }
  return points;
}

}  // namespace semstab::synthlab
