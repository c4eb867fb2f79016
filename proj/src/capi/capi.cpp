#include "semstab/semstab.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "core/canon.hpp"
#include "core/errors.hpp"
#include "core/inference.hpp"
#include "core/jsonio.hpp"
#include "core/metrics.hpp"
#include "core/mockserver.hpp"
#include "core/paraphrase.hpp"
#include "core/protocol.hpp"
#include "core/reporting.hpp"
#include "core/synthlab.hpp"

namespace {

using namespace semstab;

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

semstab_rc rc_from(Errc code) {
  switch (code) {
    case Errc::usage: return SEMSTAB_E_USAGE;
    case Errc::config: return SEMSTAB_E_CONFIG;
    case Errc::endpoint: return SEMSTAB_E_ENDPOINT;
    case Errc::aborted: return SEMSTAB_E_ABORTED;
    case Errc::io: return SEMSTAB_E_IO;
    case Errc::internal: return SEMSTAB_E_INTERNAL;
  }
  return SEMSTAB_E_INTERNAL;
}

template <typename Fn>
semstab_rc guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SEMSTAB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return rc_from(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SEMSTAB_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SEMSTAB_E_INTERNAL;
  }
}

void require_arg(const void* p, const char* what) {
  if (p == nullptr) raise_usage(std::string(what) + " must not be NULL");
}

}  // namespace

struct semstab_run {
  protocol::RunSession session;
  std::string dir_string;
  std::unique_ptr<protocol::RunOutcome> outcome;
};

struct semstab_model {
  synthlab::SyntheticModel model;
};

struct semstab_mock {
  std::unique_ptr<mock::MockServer> server;
};

extern "C" {

const char* semstab_version(void) { return "1.0.0"; }

const char* semstab_schema_version(void) {
  static const std::string v(reporting::kSchemaVersion);
  return v.c_str();
}

const char* semstab_last_error(void) { return g_last_error.c_str(); }

void semstab_free(char* s) { std::free(s); }

/* ---- metrics ------------------------------------------------------- */

semstab_rc semstab_compute_pc(const char* const* answers, int64_t k, semstab_pc* out,
                              char** mode_answer_out) {
  return guarded([&] {
    require_arg(answers, "answers");
    require_arg(out, "out");
    if (k < 0) raise_usage("k must be non-negative");
    std::vector<canon::CanonicalAnswer> list;
    list.reserve(static_cast<std::size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
      require_arg(answers[i], "answers[i]");
      list.push_back({answers[i], ""});
    }
    const auto pc = metrics::compute_pc(list);
    out->value = pc.value();
    out->mode_count = pc.mode_count;
    out->k = pc.k;
    out->tie = pc.tie ? 1 : 0;
    if (mode_answer_out != nullptr) *mode_answer_out = dup_string(pc.mode_answer.text);
  });
}

semstab_rc semstab_summarize(const int64_t* mode_counts, int64_t n, int64_t k, semstab_summary* out) {
  return guarded([&] {
    require_arg(mode_counts, "mode_counts");
    require_arg(out, "out");
    if (n < 1) raise_usage("n must be >= 1");
    std::vector<metrics::PCValue> values;
    values.reserve(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      if (mode_counts[i] < 1 || mode_counts[i] > k) {
        raise_usage("mode_counts[" + std::to_string(i) + "] out of [1, k]");
      }
      metrics::PCValue pc;
      pc.mode_count = mode_counts[i];
      pc.k = k;
      values.push_back(std::move(pc));
    }
    const auto summary = metrics::summarize(values);
    out->ss = summary.ss;
    out->n = summary.n;
    out->k = summary.k;
    out->frac_pc_below_half = summary.frac_pc_below_half;
    out->frac_pc_at_least_08 = summary.frac_pc_at_least_08;
    out->risk_level = static_cast<int>(summary.risk_level);
  });
}

semstab_rc semstab_classify_risk(double ss, int* out_level) {
  return guarded([&] {
    require_arg(out_level, "out_level");
    *out_level = static_cast<int>(metrics::classify_risk(ss));
  });
}

const char* semstab_risk_name(int level) {
  switch (level) {
    case SEMSTAB_RISK_INSUFFICIENT: return "Insufficient";
    case SEMSTAB_RISK_LIMITED: return "Limited";
    case SEMSTAB_RISK_SUBSTANTIAL: return "Substantial";
    case SEMSTAB_RISK_HIGH: return "High";
    default: return "";
  }
}

/* ---- canonicalization ---------------------------------------------- */

semstab_rc semstab_canonicalize(const char* raw, char** out) {
  return guarded([&] {
    require_arg(raw, "raw");
    require_arg(out, "out");
    *out = dup_string(canon::canonicalize(raw));
  });
}

semstab_rc semstab_extract_answer(const char* raw, const char* extractor_json, char** out) {
  return guarded([&] {
    require_arg(raw, "raw");
    require_arg(extractor_json, "extractor_json");
    require_arg(out, "out");
    const auto spec = canon::ExtractorSpec::from_json(parse_json(extractor_json, "extractor"));
    *out = dup_string(canon::extract_answer(raw, spec).text);
  });
}

/* ---- protocol runs -------------------------------------------------- */

namespace {

semstab_run* open_run(const json& config_json, const std::filesystem::path& base_dir,
                      const char* run_dir) {
  auto config = protocol::RunConfig::from_json(config_json, base_dir);
  std::filesystem::path dir;
  if (run_dir != nullptr && *run_dir != '\0') {
    dir = run_dir;
  } else {
    dir = std::filesystem::path("runs") / config.effective_run_id();
  }
  auto* handle = new semstab_run{protocol::RunSession(std::move(config), dir), dir.string(), nullptr};
  return handle;
}

}  // namespace

semstab_rc semstab_run_open(const char* config_path, const char* run_dir, semstab_run** out) {
  return guarded([&] {
    require_arg(config_path, "config_path");
    require_arg(out, "out");
    const std::filesystem::path path(config_path);
    *out = open_run(load_json_file(path), path.parent_path(), run_dir);
  });
}

semstab_rc semstab_run_open_json(const char* config_json, const char* base_dir, const char* run_dir,
                                 semstab_run** out) {
  return guarded([&] {
    require_arg(config_json, "config_json");
    require_arg(out, "out");
    const std::filesystem::path base = base_dir != nullptr ? base_dir : "";
    *out = open_run(parse_json(config_json, "config"), base, run_dir);
  });
}

semstab_rc semstab_run_execute(semstab_run* run) {
  return guarded([&] {
    require_arg(run, "run");
    run->outcome = std::make_unique<protocol::RunOutcome>(run->session.execute());
  });
}

semstab_rc semstab_run_audit(semstab_run* run, char** report_json) {
  return guarded([&] {
    require_arg(run, "run");
    require_arg(report_json, "report_json");
    *report_json = dup_string(run->session.audit_only().to_json().dump(2));
  });
}

namespace {

reporting::ReportInputs outcome_inputs(const semstab_run& run) {
  const auto& outcome = *run.outcome;
  reporting::ReportInputs inputs;
  inputs.summary = outcome.summary;
  inputs.pairing = outcome.pairing;
  inputs.system = run.session.config().system;
  inputs.domain = run.session.config().domain;
  inputs.manifest = outcome.manifest;
  inputs.failed_prompts = outcome.failed_prompts;
  inputs.no_answer_responses = outcome.no_answer_responses;
  return inputs;
}

}  // namespace

semstab_rc semstab_run_summary_json(semstab_run* run, char** out_json) {
  return guarded([&] {
    require_arg(run, "run");
    require_arg(out_json, "out_json");
    if (!run->outcome) raise_usage("run has not been executed");
    const auto& outcome = *run->outcome;
    const auto inputs = outcome_inputs(*run);
    json doc = outcome.report.json;  // summary fields live in the report shape
    json out{{"schema_version", std::string(reporting::kSchemaVersion)},
             {"template_row", doc.at("template_row")},
             {"risk", doc.at("risk")},
             {"accuracy_pairing", doc.at("accuracy_pairing")},
             {"failed_prompts", outcome.failed_prompts},
             {"no_answer_responses", outcome.no_answer_responses},
             {"row", reporting::template_row_line(inputs)},
             {"run_dir", run->dir_string}};
    *out_json = dup_string(out.dump(2));
  });
}

semstab_rc semstab_run_report(semstab_run* run, char** markdown_out, char** json_out) {
  return guarded([&] {
    require_arg(run, "run");
    if (!run->outcome) raise_usage("run has not been executed");
    if (markdown_out != nullptr) *markdown_out = dup_string(run->outcome->report.markdown);
    if (json_out != nullptr) *json_out = dup_string(run->outcome->report.json.dump(2));
  });
}

const char* semstab_run_dir(const semstab_run* run) {
  return run != nullptr ? run->dir_string.c_str() : "";
}

void semstab_run_close(semstab_run* run) { delete run; }

/* ---- reporting ------------------------------------------------------ */

semstab_rc semstab_sweep_emit(const char* points_json, const char* bands_json, char** table_md_out,
                              char** csv_out, char** json_out) {
  return guarded([&] {
    require_arg(points_json, "points_json");
    auto points = reporting::sweep_points_from_json(parse_json(points_json, "sweep points"));
    reporting::RegimeBands bands;
    if (bands_json != nullptr && *bands_json != '\0') {
      bands = reporting::RegimeBands::from_json(parse_json(bands_json, "bands"));
    }
    const auto table = reporting::emit_sweep(std::move(points), bands);
    if (table_md_out != nullptr) *table_md_out = dup_string(table.markdown());
    if (csv_out != nullptr) *csv_out = dup_string(table.csv());
    if (json_out != nullptr) *json_out = dup_string(table.to_json().dump(2));
  });
}

semstab_rc semstab_sweep_parse_csv(const char* csv_text, char** points_json_out) {
  return guarded([&] {
    require_arg(csv_text, "csv_text");
    require_arg(points_json_out, "points_json_out");
    const auto points = reporting::parse_sweep_csv(csv_text);
    *points_json_out = dup_string(reporting::sweep_points_to_json(points).dump(2));
  });
}

semstab_rc semstab_report_emit(const char* inputs_json, char** markdown_out, char** json_out) {
  return guarded([&] {
    require_arg(inputs_json, "inputs_json");
    const auto inputs = reporting::ReportInputs::from_json(parse_json(inputs_json, "report inputs"));
    const auto doc = reporting::emit_compliance_report(inputs);
    if (markdown_out != nullptr) *markdown_out = dup_string(doc.markdown);
    if (json_out != nullptr) *json_out = dup_string(doc.json.dump(2));
  });
}

/* ---- synthetic laboratory ------------------------------------------- */

semstab_rc semstab_model_open_json(const char* model_json, semstab_model** out) {
  return guarded([&] {
    require_arg(model_json, "model_json");
    require_arg(out, "out");
    *out = new semstab_model{synthlab::SyntheticModel::from_json(parse_json(model_json, "model"))};
  });
}

semstab_rc semstab_model_open(const char* path, semstab_model** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new semstab_model{synthlab::SyntheticModel::from_json(load_json_file(path))};
  });
}

semstab_rc semstab_model_expected_pc(semstab_model* model, int k, double* out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(out, "out");
    *out = synthlab::expected_pc_exact(model->model, k);
  });
}

semstab_rc semstab_model_expected_pc_mc(semstab_model* model, int k, int64_t trials, uint64_t seed,
                                        double* estimate_out, double* standard_error_out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(estimate_out, "estimate_out");
    const auto estimate = synthlab::expected_pc_mc(model->model, k, trials, seed);
    *estimate_out = estimate.estimate;
    if (standard_error_out != nullptr) *standard_error_out = estimate.standard_error;
  });
}

semstab_rc semstab_model_decompose(semstab_model* model, double* bias_sq_out, double* variance_out,
                                   double* total_out) {
  return guarded([&] {
    require_arg(model, "model");
    const auto decomposition = synthlab::decompose_error(model->model);
    if (bias_sq_out != nullptr) *bias_sq_out = decomposition.bias_sq;
    if (variance_out != nullptr) *variance_out = decomposition.variance;
    if (total_out != nullptr) *total_out = decomposition.total;
  });
}

semstab_rc semstab_student_condition(semstab_model* student, semstab_model* teacher, int* holds_out,
                                     double* terms_out) {
  return guarded([&] {
    require_arg(student, "student");
    require_arg(teacher, "teacher");
    require_arg(holds_out, "holds_out");
    const auto check = synthlab::check_student_condition(student->model, teacher->model);
    *holds_out = check.holds ? 1 : 0;
    if (terms_out != nullptr) {
      terms_out[0] = check.student.bias_sq;
      terms_out[1] = check.student.variance;
      terms_out[2] = check.teacher.variance;
    }
  });
}

semstab_rc semstab_simulate_phase_curve(semstab_model* base, const char* schedule_json, int k,
                                        char** points_json_out) {
  return guarded([&] {
    require_arg(base, "base");
    require_arg(schedule_json, "schedule_json");
    require_arg(points_json_out, "points_json_out");
    const auto schedule =
        synthlab::CompressionSchedule::from_json(parse_json(schedule_json, "schedule"));
    const auto points = synthlab::simulate_phase_curve(base->model, schedule, k);
    *points_json_out = dup_string(reporting::sweep_points_to_json(points).dump(2));
  });
}

void semstab_model_close(semstab_model* model) { delete model; }

/* ---- mock inference server ------------------------------------------ */

semstab_rc semstab_mock_start(const char* script_json, int port, semstab_mock** out) {
  return guarded([&] {
    require_arg(script_json, "script_json");
    require_arg(out, "out");
    auto script = mock::MockScript::from_json(parse_json(script_json, "mock script"));
    *out = new semstab_mock{std::make_unique<mock::MockServer>(std::move(script), port)};
  });
}

int semstab_mock_port(const semstab_mock* mock_handle) {
  return mock_handle != nullptr && mock_handle->server ? mock_handle->server->port() : 0;
}

semstab_rc semstab_mock_params_log(semstab_mock* mock_handle, char** json_out) {
  return guarded([&] {
    require_arg(mock_handle, "mock");
    require_arg(json_out, "json_out");
    *json_out = dup_string(mock_handle->server->params_log_json().dump(2));
  });
}

semstab_rc semstab_mock_stop(semstab_mock* mock_handle) {
  return guarded([&] {
    require_arg(mock_handle, "mock");
    mock_handle->server->stop();
    delete mock_handle;
  });
}

/* ---- paraphrase ------------------------------------------------------ */

namespace {

std::unique_ptr<para::Provider> standalone_provider(const para::ProviderConfig& config) {
  switch (config.kind) {
    case para::ProviderKind::template_rules:
      return para::make_template_provider(config);
    case para::ProviderKind::llm: {
      if (!config.endpoint) {
        raise_config("llm paraphrase provider needs an \"endpoint\" section when used standalone");
      }
      return para::make_llm_provider(config,
                                     std::make_shared<infer::Client>(*config.endpoint, nullptr));
    }
    case para::ProviderKind::file:
      raise_config("file paraphrase provider needs a dataset; use semstab_paraphrase_dataset");
  }
  raise_config("unknown paraphrase provider");
}

}  // namespace

semstab_rc semstab_paraphrase_generate(const char* provider_json, const char* prompt, int k,
                                       char** set_json_out) {
  return guarded([&] {
    require_arg(provider_json, "provider_json");
    require_arg(prompt, "prompt");
    require_arg(set_json_out, "set_json_out");
    const auto config = para::ProviderConfig::from_json(parse_json(provider_json, "paraphrase"));
    auto provider = standalone_provider(config);
    *set_json_out = dup_string(provider->generate(prompt, k).to_json().dump(2));
  });
}

semstab_rc semstab_paraphrase_validate(const char* set_json, char** warnings_json_out) {
  return guarded([&] {
    require_arg(set_json, "set_json");
    require_arg(warnings_json_out, "warnings_json_out");
    const auto set = para::ParaphraseSet::from_json(parse_json(set_json, "paraphrase set"));
    json warnings = json::array();
    for (const auto& warning : para::validate_paraphrase_set(set)) {
      warnings.push_back(warning.to_json());
    }
    *warnings_json_out = dup_string(warnings.dump(2));
  });
}

semstab_rc semstab_paraphrase_dataset(const char* provider_json, const char* dataset_path, int k,
                                      char** jsonl_out) {
  return guarded([&] {
    require_arg(provider_json, "provider_json");
    require_arg(dataset_path, "dataset_path");
    require_arg(jsonl_out, "jsonl_out");
    const auto config = para::ProviderConfig::from_json(parse_json(provider_json, "paraphrase"));
    const auto dataset = protocol::load_dataset(dataset_path);

    std::unique_ptr<para::Provider> provider;
    if (config.kind == para::ProviderKind::file) {
      std::map<std::string, std::vector<std::string>> authored;
      for (const auto& row : dataset) {
        if (row.variants) authored[row.prompt] = *row.variants;
      }
      provider = para::make_file_provider(config, std::move(authored));
    } else {
      provider = standalone_provider(config);
    }

    std::string out;
    for (const auto& row : dataset) {
      auto set = provider->generate(row.prompt, k);
      json line = set.to_json();
      line["id"] = row.id;
      json warnings = json::array();
      for (const auto& warning : para::validate_paraphrase_set(set)) {
        warnings.push_back(warning.to_json());
      }
      if (!warnings.empty()) line["warnings"] = std::move(warnings);
      out += line.dump();
      out += '\n';
    }
    *jsonl_out = dup_string(out);
  });
}

} /* extern "C" */
