// Command-line front end. Talks to the library only through the C API.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cqr/cqr.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_of(cqr_status status) {
  switch (status) {
    case CQR_INVALID_ARGUMENT:
    case CQR_CONFIG:
    case CQR_SCHEMA:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

void check(cqr_status status) {
  if (status != CQR_OK)
    throw Failure{exit_code_of(status), std::string(cqr_status_name(status)) + ": " + cqr_last_error()};
}

struct StringDeleter {
  void operator()(char* s) const { cqr_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct DatasetDeleter {
  void operator()(cqr_dataset* d) const { cqr_dataset_free(d); }
};
struct FitDeleter {
  void operator()(cqr_fit_result* r) const { cqr_fit_result_free(r); }
};
struct ScenarioDeleter {
  void operator()(cqr_scenario* s) const { cqr_scenario_free(s); }
};
struct ReportDeleter {
  void operator()(cqr_sim_report* r) const { cqr_sim_report_free(r); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitRuntime, "io: cannot write '" + path + "'"};
  out << content;
  if (!out) throw Failure{kExitRuntime, "io: failed writing '" + path + "'"};
}

int env_threads() {
  if (const char* v = std::getenv("CQR_THREADS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  return 1;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == sep) {
      out.push_back(item);
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  out.push_back(item);
  return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string response = "y";
  std::string cluster = "cluster";
  std::vector<std::string> fixed;
  std::vector<std::string> random{"(Intercept)"};
  std::vector<double> taus{0.5};
  std::string estimator = "adj";
  std::string scheme = "rw";
  std::int64_t B = 100;
  double alpha = 0.05;
  std::uint64_t seed = 20240607;
  int threads = 0;
  int nK = 15;
  std::string blp = "linear";
  std::vector<std::string> contrasts;
  std::string out;
  std::string json;
  std::string config;
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Flat `key = value` file; keys are long flag names. Flags given on the
// command line win over the file.
void apply_config(CLI::App& cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kExitConfig, "config: cannot open config file '" + path + "'"};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Failure{kExitConfig, "config: " + path + " line " + std::to_string(line_no) +
                                     ": expected 'key = value'"};
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    CLI::Option* opt = key == "config" ? nullptr : cmd.get_option_no_throw("--" + key);
    if (!opt) throw Failure{kExitConfig, "config: unknown key '" + key + "' in " + path};
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw Failure{kExitConfig, "config: key '" + key + "': " + e.what()};
    }
  }
}

void run_fit(const FitArgs& a) {
  if (a.data.empty()) throw Failure{kExitConfig, "config: --data is required"};
  if (a.threads < 0) throw Failure{kExitConfig, "config: threads must be at least 1"};
  const auto fixed = c_strings(a.fixed);
  const auto random = c_strings(a.random);
  cqr_dataset* raw_data = nullptr;
  check(cqr_dataset_load_csv(a.data.c_str(), a.response.c_str(), a.cluster.c_str(), fixed.data(),
                             fixed.size(), random.data(), random.size(), &raw_data));
  std::unique_ptr<cqr_dataset, DatasetDeleter> data(raw_data);

  std::vector<std::string> refs, targets;
  for (const std::string& spec : a.contrasts) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size())
      throw Failure{kExitConfig, "config: contrast '" + spec + "' must look like REF:T1,T2"};
    for (const std::string& t : split(spec.substr(colon + 1), ',')) {
      if (t.empty()) throw Failure{kExitConfig, "config: empty term in contrast '" + spec + "'"};
      refs.push_back(spec.substr(0, colon));
      targets.push_back(t);
    }
  }
  const auto ref_c = c_strings(refs);
  const auto target_c = c_strings(targets);

  cqr_fit_options options;
  cqr_fit_options_init(&options);
  options.taus = a.taus.data();
  options.n_taus = a.taus.size();
  options.estimator = a.estimator.c_str();
  options.scheme = a.scheme.c_str();
  options.B = a.B;
  options.alpha = a.alpha;
  options.seed = a.seed;
  options.threads = a.threads > 0 ? a.threads : env_threads();
  options.nK = a.nK;
  options.blp = a.blp.c_str();
  options.contrast_reference = ref_c.data();
  options.contrast_target = target_c.data();
  options.n_contrasts = refs.size();

  cqr_fit_result* raw_result = nullptr;
  check(cqr_fit(data.get(), &options, &raw_result));
  std::unique_ptr<cqr_fit_result, FitDeleter> result(raw_result);

  char* csv = nullptr;
  check(cqr_fit_result_to_csv(result.get(), &csv));
  OwnedString csv_owned(csv);
  if (a.out.empty()) std::cout << csv;
  else write_file(a.out, csv);

  if (!a.json.empty()) {
    char* json = nullptr;
    check(cqr_fit_result_to_json(result.get(), &json));
    OwnedString json_owned(json);
    if (a.json == "-") std::cout << json << "\n";
    else write_file(a.json, std::string(json) + "\n");
  }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string out;
  int threads = 0;
  std::string seed;
  std::vector<std::string> overrides;
  bool progress = false;
};

void print_progress(std::int64_t done, std::int64_t total, void*) {
  std::fprintf(stderr, "\rreplication %lld/%lld", static_cast<long long>(done),
               static_cast<long long>(total));
  if (done == total) std::fprintf(stderr, "\n");
}

void run_simulate(const SimulateArgs& a) {
  if (a.threads < 0) throw Failure{kExitConfig, "config: threads must be at least 1"};
  cqr_scenario* raw = nullptr;
  check(cqr_scenario_load(a.scenario.c_str(), &raw));
  std::unique_ptr<cqr_scenario, ScenarioDeleter> scenario(raw);
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw Failure{kExitConfig, "config: override '" + kv + "' must look like key=value"};
    check(cqr_scenario_set(scenario.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!a.seed.empty()) check(cqr_scenario_set(scenario.get(), "seed", a.seed.c_str()));

  cqr_sim_report* raw_report = nullptr;
  check(cqr_simulate(scenario.get(), a.threads > 0 ? a.threads : env_threads(),
                     a.progress ? print_progress : nullptr, nullptr, &raw_report));
  std::unique_ptr<cqr_sim_report, ReportDeleter> report(raw_report);

  char* text = nullptr;
  check(cqr_sim_report_render(report.get(), CQR_RENDER_TEXT, &text));
  OwnedString text_owned(text);
  std::cout << text;
  if (!a.out.empty()) {
    char* csv = nullptr;
    check(cqr_sim_report_render(report.get(), CQR_RENDER_CSV, &csv));
    OwnedString csv_owned(csv);
    write_file(a.out + ".csv", csv);
    write_file(a.out + ".txt", text);
  }
  std::fprintf(stderr, "wall time: %.1f s\n", cqr_sim_report_wall_seconds(report.get()));
}

void print_error(const std::string& message) {
  std::string line = message;
  for (char& c : line)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "error: %s\n", line.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile regression for clustered data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cqr_version()));

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit an estimator at one or more quantile levels");
  fit_cmd->add_option("--config", fit.config, "Flat key = value file; flags override its keys");
  fit_cmd->add_option("--data", fit.data, "Long-format CSV file");
  fit_cmd->add_option("--response", fit.response, "Response column")->capture_default_str();
  fit_cmd->add_option("--cluster", fit.cluster, "Cluster id column")->capture_default_str();
  fit_cmd->add_option("--fixed", fit.fixed, "Fixed covariates (comma-separated)")->delimiter(',');
  fit_cmd->add_option("--random", fit.random, "Random-effect terms; (Intercept) for the intercept")
      ->delimiter(',')
      ->capture_default_str();
  fit_cmd->add_option("--tau", fit.taus, "Quantile levels (comma-separated)")
      ->delimiter(',')
      ->capture_default_str();
  fit_cmd->add_option("--estimator", fit.estimator,
                      "marg, canay, l1pen, l2pen, lqmm, jk, twostep or adj")
      ->capture_default_str();
  fit_cmd->add_option("--scheme", fit.scheme, "Bootstrap scheme: rw, rrr, rc or cw")
      ->capture_default_str();
  fit_cmd->add_option("--B", fit.B, "Bootstrap replications")->capture_default_str();
  fit_cmd->add_option("--alpha", fit.alpha, "Interval level is 1 - alpha")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (default: CQR_THREADS or 1)");
  fit_cmd->add_option("--nK", fit.nK, "Quadrature nodes per dimension")->capture_default_str();
  fit_cmd->add_option("--blp", fit.blp, "linear or posterior_mean")->capture_default_str();
  fit_cmd->add_option("--contrast", fit.contrasts, "REF:T1,T2 yields T1 - REF and T2 - REF")
      ->take_all();
  fit_cmd->add_option("--out", fit.out, "CSV output path (default: stdout)");
  fit_cmd->add_option("--json", fit.json, "Also write JSON to this path ('-' for stdout)");

  SimulateArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo scenario");
  sim_cmd->add_option("--scenario", sim.scenario, "Scenario file")->required();
  sim_cmd->add_option("--out", sim.out, "Output prefix; writes PREFIX.csv and PREFIX.txt");
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (default: CQR_THREADS or 1)");
  sim_cmd->add_option("--seed", sim.seed, "Overrides the scenario seed");
  sim_cmd->add_option("--set", sim.overrides, "Scenario override key=value (repeatable)");
  sim_cmd->add_flag("--progress", sim.progress, "Report progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(std::string("config: ") + e.what());
    return kExitConfig;
  }

  try {
    if (*fit_cmd) {
      if (!fit.config.empty()) apply_config(*fit_cmd, fit.config);
      run_fit(fit);
    }
    else run_simulate(sim);
  } catch (const Failure& f) {
    print_error(f.message);
    return f.exit_code;
  } catch (const std::exception& e) {
    print_error(std::string("internal: ") + e.what());
    return kExitRuntime;
  }
  return 0;
}
