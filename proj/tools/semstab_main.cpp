// Command-line front end for the semstab shared library. All evaluation
// functionality flows through the C API in semstab/semstab.h; this file only
// parses arguments, shuffles JSON, and formats output.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semstab/semstab.h"

namespace {

using nlohmann::json;

int exit_code_for(semstab_rc rc) {
  switch (rc) {
    case SEMSTAB_OK: return 0;
    case SEMSTAB_E_USAGE: return 2;
    case SEMSTAB_E_CONFIG: return 2;
    case SEMSTAB_E_ENDPOINT: return 3;
    case SEMSTAB_E_ABORTED: return 4;
    case SEMSTAB_E_IO: return 2;
    case SEMSTAB_E_INTERNAL: return 1;
  }
  return 1;
}

[[noreturn]] void fail(semstab_rc rc) {
  std::cerr << "error: " << semstab_last_error() << "\n";
  std::exit(exit_code_for(rc));
}

void check(semstab_rc rc) {
  if (rc != SEMSTAB_OK) fail(rc);
}

// Takes ownership of a C-API string.
std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  semstab_free(s);
  return out;
}

std::string read_file_or_fail(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(2);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_or_fail(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    std::exit(2);
  }
  out << content;
}

json parse_json_or_fail(const std::string& text, const std::string& what) {
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) {
    std::cerr << "error: " << what << ": invalid JSON\n";
    std::exit(2);
  }
  return parsed;
}

struct RunFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::int64_t> n;
  std::optional<std::int64_t> k;
  std::optional<std::int64_t> seed;
  std::optional<bool> strict;
  bool as_json = false;
};

// Config file first, flags override.
json load_run_config(const RunFlags& flags) {
  json config = parse_json_or_fail(read_file_or_fail(flags.config_path), flags.config_path);
  if (flags.n) config["n"] = *flags.n;
  if (flags.k) config["k"] = *flags.k;
  if (flags.seed) config["sampling_seed"] = *flags.seed;
  if (flags.strict) config["strict_determinism"] = *flags.strict;
  return config;
}

semstab_run* open_run_or_fail(const RunFlags& flags) {
  const json config = load_run_config(flags);
  const std::string base_dir = std::filesystem::path(flags.config_path).parent_path().string();
  semstab_run* run = nullptr;
  check(semstab_run_open_json(config.dump().c_str(), base_dir.c_str(),
                              flags.out_dir.empty() ? nullptr : flags.out_dir.c_str(), &run));
  return run;
}

int cmd_run(const RunFlags& flags) {
  semstab_run* run = open_run_or_fail(flags);
  const semstab_rc rc = semstab_run_execute(run);
  if (rc != SEMSTAB_OK) {
    std::cerr << "error: " << semstab_last_error() << "\n";
    semstab_run_close(run);
    return exit_code_for(rc);
  }
  char* summary = nullptr;
  check(semstab_run_summary_json(run, &summary));
  const json doc = parse_json_or_fail(take(summary), "run summary");
  if (flags.as_json) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << doc.at("row").get<std::string>() << "\n";
    std::cerr << "run directory: " << semstab_run_dir(run) << "\n";
  }
  semstab_run_close(run);
  return 0;
}

int cmd_audit(const RunFlags& flags) {
  semstab_run* run = open_run_or_fail(flags);
  char* report = nullptr;
  const semstab_rc rc = semstab_run_audit(run, &report);
  if (rc != SEMSTAB_OK) {
    std::cerr << "error: " << semstab_last_error() << "\n";
    semstab_run_close(run);
    return exit_code_for(rc);
  }
  const json doc = parse_json_or_fail(take(report), "audit report");
  if (flags.as_json) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << "determinism audit: " << (doc.at("passed").get<bool>() ? "PASS" : "FAIL") << " ("
              << doc.at("samples").get<int>() << " prompts x " << doc.at("repeats").get<int>()
              << " repeats, " << doc.at("mismatched_prompts").size() << " mismatched)\n";
  }
  semstab_run_close(run);
  return doc.at("passed").get<bool>() ? 0 : 3;
}

int cmd_report(const std::string& run_dir, bool as_json) {
  const auto path = std::filesystem::path(run_dir) / (as_json ? "report.json" : "report.md");
  if (!std::filesystem::exists(path)) {
    std::cerr << "error: " << path.string() << " not found; execute the run first\n";
    return 2;
  }
  std::cout << read_file_or_fail(path.string());
  return 0;
}

int cmd_sweep(const std::vector<std::string>& inputs, double variance_max, double sweet_max,
              const std::string& csv_out, bool as_json) {
  json points = json::array();
  if (inputs.size() == 1 && inputs.front().size() > 4 &&
      inputs.front().substr(inputs.front().size() - 4) == ".csv") {
    char* parsed = nullptr;
    check(semstab_sweep_parse_csv(read_file_or_fail(inputs.front()).c_str(), &parsed));
    points = parse_json_or_fail(take(parsed), "sweep points");
  } else {
    for (const auto& dir : inputs) {
      const json manifest =
          parse_json_or_fail(read_file_or_fail((std::filesystem::path(dir) / "manifest.json").string()),
                             dir + "/manifest.json");
      const json report =
          parse_json_or_fail(read_file_or_fail((std::filesystem::path(dir) / "report.json").string()),
                             dir + "/report.json");
      if (!manifest.contains("sparsity_pct")) {
        std::cerr << "error: " << dir << ": manifest has no sparsity_pct; set it in the run config\n";
        return 2;
      }
      points.push_back({{"label", manifest.value("label", dir)},
                        {"sparsity_pct", manifest.at("sparsity_pct").get<double>()},
                        {"ss", report.at("template_row").at("ss").get<double>()}});
    }
  }

  const json bands{{"variance_dominated_max_pct", variance_max}, {"sweet_spot_max_pct", sweet_max}};
  char* md = nullptr;
  char* csv = nullptr;
  char* table_json = nullptr;
  check(semstab_sweep_emit(points.dump().c_str(), bands.dump().c_str(), &md, &csv, &table_json));
  const std::string markdown = take(md);
  const std::string csv_text = take(csv);
  const std::string table = take(table_json);
  if (!csv_out.empty()) write_file_or_fail(csv_out, csv_text);
  if (as_json) {
    std::cout << table << "\n";
  } else {
    std::cout << markdown;
    if (!csv_out.empty()) std::cerr << "sweep CSV written to " << csv_out << "\n";
  }
  return 0;
}

struct SimulateFlags {
  std::string model_path;
  std::string schedule_path;
  std::string student_path;
  std::string teacher_path;
  int k = 10;
  std::int64_t mc_trials = 0;
  std::uint64_t mc_seed = 0;
  bool expected_pc = false;
  std::string csv_out;
  bool as_json = false;
};

int cmd_simulate(const SimulateFlags& flags) {
  if (!flags.student_path.empty() || !flags.teacher_path.empty()) {
    if (flags.student_path.empty() || flags.teacher_path.empty()) {
      std::cerr << "error: --student and --teacher must be given together\n";
      return 2;
    }
    semstab_model* student = nullptr;
    semstab_model* teacher = nullptr;
    check(semstab_model_open(flags.student_path.c_str(), &student));
    check(semstab_model_open(flags.teacher_path.c_str(), &teacher));
    int holds = 0;
    double terms[3] = {0, 0, 0};
    const semstab_rc rc = semstab_student_condition(student, teacher, &holds, terms);
    semstab_model_close(student);
    semstab_model_close(teacher);
    if (rc != SEMSTAB_OK) fail(rc);
    if (flags.as_json) {
      std::cout << json{{"holds", holds != 0},
                        {"student_bias_sq", terms[0]},
                        {"student_variance", terms[1]},
                        {"teacher_variance", terms[2]}}
                       .dump(2)
                << "\n";
    } else {
      std::cout << "student condition (bias^2_s + var_s < var_t): " << (holds ? "holds" : "fails")
                << "\n  student bias^2 = " << terms[0] << "\n  student variance = " << terms[1]
                << "\n  teacher variance = " << terms[2] << "\n";
    }
    return 0;
  }

  if (flags.model_path.empty()) {
    std::cerr << "error: --model is required\n";
    return 2;
  }
  semstab_model* model = nullptr;
  check(semstab_model_open(flags.model_path.c_str(), &model));

  if (flags.expected_pc) {
    int rc_code = 0;
    if (flags.mc_trials > 0) {
      double estimate = 0;
      double se = 0;
      const semstab_rc rc =
          semstab_model_expected_pc_mc(model, flags.k, flags.mc_trials, flags.mc_seed, &estimate, &se);
      if (rc != SEMSTAB_OK) {
        semstab_model_close(model);
        fail(rc);
      }
      if (flags.as_json) {
        std::cout << json{{"estimate", estimate}, {"standard_error", se}}.dump(2) << "\n";
      } else {
        std::cout << "E[PC@" << flags.k << "] ~= " << estimate << " (se " << se << ", "
                  << flags.mc_trials << " trials, seed " << flags.mc_seed << ")\n";
      }
    } else {
      double exact = 0;
      const semstab_rc rc = semstab_model_expected_pc(model, flags.k, &exact);
      if (rc != SEMSTAB_OK) {
        semstab_model_close(model);
        fail(rc);
      }
      if (flags.as_json) {
        std::cout << json{{"exact", exact}}.dump(2) << "\n";
      } else {
        std::cout << "E[PC@" << flags.k << "] = " << exact << "\n";
      }
    }
    semstab_model_close(model);
    return rc_code;
  }

  if (flags.schedule_path.empty()) {
    std::cerr << "error: --schedule is required (or use --expected-pc / --student/--teacher)\n";
    semstab_model_close(model);
    return 2;
  }
  char* points = nullptr;
  const semstab_rc rc = semstab_simulate_phase_curve(
      model, read_file_or_fail(flags.schedule_path).c_str(), flags.k, &points);
  semstab_model_close(model);
  if (rc != SEMSTAB_OK) fail(rc);
  const std::string points_text = take(points);

  char* md = nullptr;
  char* csv = nullptr;
  char* table_json = nullptr;
  check(semstab_sweep_emit(points_text.c_str(), nullptr, &md, &csv, &table_json));
  const std::string markdown = take(md);
  const std::string csv_text = take(csv);
  const std::string table = take(table_json);
  if (!flags.csv_out.empty()) write_file_or_fail(flags.csv_out, csv_text);
  if (flags.as_json) {
    std::cout << table << "\n";
  } else {
    std::cout << markdown;
  }
  return 0;
}

int cmd_paraphrase(const std::string& config_path, const std::string& out_path, bool as_json) {
  const json config = parse_json_or_fail(read_file_or_fail(config_path), config_path);
  if (!config.contains("paraphrase") || !config.contains("dataset") || !config.contains("k")) {
    std::cerr << "error: config needs paraphrase, dataset and k\n";
    return 2;
  }
  const auto base = std::filesystem::path(config_path).parent_path();
  json provider = config.at("paraphrase");
  if (provider.contains("lexicon_path")) {
    provider["lexicon_path"] = (base / provider.at("lexicon_path").get<std::string>()).string();
  }
  const std::string dataset = (base / config.at("dataset").get<std::string>()).string();
  char* jsonl = nullptr;
  check(semstab_paraphrase_dataset(provider.dump().c_str(), dataset.c_str(),
                                   static_cast<int>(config.at("k").get<std::int64_t>()), &jsonl));
  const std::string text = take(jsonl);
  if (!out_path.empty()) {
    write_file_or_fail(out_path, text);
    if (!as_json) std::cerr << "paraphrases written to " << out_path << "\n";
  } else {
    std::cout << text;
  }
  return 0;
}

volatile std::sig_atomic_t g_stop_requested = 0;

int cmd_mock_serve(const std::string& script_path, int port) {
  const std::string script = script_path.empty() ? "{}" : read_file_or_fail(script_path);
  semstab_mock* mock = nullptr;
  check(semstab_mock_start(script.c_str(), port, &mock));
  std::cout << "mock inference server listening on http://127.0.0.1:" << semstab_mock_port(mock)
            << " (Ctrl-C to stop)\n";
  std::signal(SIGINT, [](int) { g_stop_requested = 1; });
  std::signal(SIGTERM, [](int) { g_stop_requested = 1; });
  while (g_stop_requested == 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  check(semstab_mock_stop(mock));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semstab - semantic stability (PC@k / SS) evaluation harness"};
  app.require_subcommand(1);
  const std::string version_line =
      std::string(semstab_version()) + " (schema_version " + semstab_schema_version() + ")";
  app.set_version_flag("--version", version_line);

  RunFlags run_flags;
  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config,-c", run_flags.config_path, "run config JSON")->required();
    cmd->add_option("--out,-o", run_flags.out_dir, "run directory (default runs/<run_id>)");
    cmd->add_option("--n", run_flags.n, "override prompt count N");
    cmd->add_option("--k", run_flags.k, "override paraphrase count k");
    cmd->add_option("--seed", run_flags.seed, "override sampling seed");
    cmd->add_flag("--strict,!--no-strict", run_flags.strict, "override strict_determinism");
    cmd->add_flag("--json", run_flags.as_json, "machine-parseable stdout");
    cmd->set_version_flag("--version", version_line);
  };

  auto* run_cmd = app.add_subcommand("run", "execute the paraphrase/decode/compute protocol");
  add_run_flags(run_cmd);

  auto* audit_cmd = app.add_subcommand("audit", "determinism audit against the configured endpoint");
  add_run_flags(audit_cmd);

  std::string report_dir;
  bool report_json = false;
  auto* report_cmd = app.add_subcommand("report", "print the compliance report of a finished run");
  report_cmd->add_option("run_dir", report_dir, "run directory")->required();
  report_cmd->add_flag("--json", report_json, "print the JSON report variant");
  report_cmd->set_version_flag("--version", version_line);

  std::vector<std::string> sweep_inputs;
  double bands_variance_max = 25.0;
  double bands_sweet_max = 40.0;
  std::string sweep_csv_out;
  bool sweep_json = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "stability-vs-sparsity sweep table and plot data");
  sweep_cmd->add_option("inputs", sweep_inputs, "points CSV file or run directories")->required();
  sweep_cmd->add_option("--variance-max", bands_variance_max, "variance-dominated band edge (%)");
  sweep_cmd->add_option("--sweet-max", bands_sweet_max, "sweet-spot band edge (%)");
  sweep_cmd->add_option("--csv-out", sweep_csv_out, "write plot-data CSV here");
  sweep_cmd->add_flag("--json", sweep_json, "machine-parseable stdout");
  sweep_cmd->set_version_flag("--version", version_line);

  SimulateFlags sim_flags;
  auto* sim_cmd = app.add_subcommand("simulate", "synthetic bias-variance laboratory");
  sim_cmd->add_option("--model,-m", sim_flags.model_path, "synthetic model spec JSON");
  sim_cmd->add_option("--schedule,-s", sim_flags.schedule_path, "compression schedule JSON");
  sim_cmd->add_option("--k", sim_flags.k, "paraphrase count k (default 10)");
  sim_cmd->add_flag("--expected-pc", sim_flags.expected_pc, "print E[PC@k] for the model");
  sim_cmd->add_option("--mc-trials", sim_flags.mc_trials, "Monte Carlo trials (0 = exact)");
  sim_cmd->add_option("--mc-seed", sim_flags.mc_seed, "Monte Carlo seed");
  sim_cmd->add_option("--student", sim_flags.student_path, "student model spec (condition check)");
  sim_cmd->add_option("--teacher", sim_flags.teacher_path, "teacher model spec (condition check)");
  sim_cmd->add_option("--csv-out", sim_flags.csv_out, "write phase-curve CSV here");
  sim_cmd->add_flag("--json", sim_flags.as_json, "machine-parseable stdout");
  sim_cmd->set_version_flag("--version", version_line);

  std::string para_config;
  std::string para_out;
  bool para_json = false;
  auto* para_cmd = app.add_subcommand("paraphrase", "freeze paraphrase sets for a dataset");
  para_cmd->add_option("--config,-c", para_config, "run config JSON")->required();
  para_cmd->add_option("--out,-o", para_out, "output paraphrases.jsonl (default stdout)");
  para_cmd->add_flag("--json", para_json, "machine-parseable stdout");
  para_cmd->set_version_flag("--version", version_line);

  std::string mock_script;
  int mock_port = 8091;
  auto* mock_cmd = app.add_subcommand("mock-serve", "scriptable deterministic inference endpoint");
  mock_cmd->add_option("--script", mock_script, "mock script JSON");
  mock_cmd->add_option("--port,-p", mock_port, "port (default 8091, 0 = ephemeral)");
  mock_cmd->set_version_flag("--version", version_line);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run_cmd->parsed()) return cmd_run(run_flags);
  if (audit_cmd->parsed()) return cmd_audit(run_flags);
  if (report_cmd->parsed()) return cmd_report(report_dir, report_json);
  if (sweep_cmd->parsed()) {
    return cmd_sweep(sweep_inputs, bands_variance_max, bands_sweet_max, sweep_csv_out, sweep_json);
  }
  if (sim_cmd->parsed()) return cmd_simulate(sim_flags);
  if (para_cmd->parsed()) return cmd_paraphrase(para_config, para_out, para_json);
  if (mock_cmd->parsed()) return cmd_mock_serve(mock_script, mock_port);
  return 2;
}
