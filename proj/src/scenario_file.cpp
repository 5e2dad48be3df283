#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cqr/error.hpp"
#include "cqr/simulation.hpp"

namespace cqr {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::config, "invalid value '" + value + "' for scenario key '" + key + "'");
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v))
    bad_value(key, value);
  return v;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& value) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value);
  return v;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void set_scenario_value(ScenarioSpec& spec, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), value = trim(raw_value);
  try {
    if (key == "N") spec.N = to_int<Index>(key, value);
    else if (key == "n_i") spec.n_i = to_int<Index>(key, value);
    else if (key == "tau") spec.tau = to_double(key, value);
    else if (key == "beta0") spec.beta0 = to_double(key, value);
    else if (key == "beta1") spec.beta1 = to_double(key, value);
    else if (key == "gamma") spec.gamma = to_double(key, value);
    else if (key == "sigma_u2") spec.sigma_u2 = to_double(key, value);
    else if (key == "sigma_e2") spec.sigma_e2 = to_double(key, value);
    else if (key == "error_dist") spec.error_dist = parse_error_dist(value);
    else if (key == "ald_tau0") spec.ald_tau0 = to_double(key, value);
    else if (key == "ald_sigma0") spec.ald_sigma0 = to_double(key, value);
    else if (key == "sigma_v2") spec.sigma_v2 = to_double(key, value);
    else if (key == "reps") spec.reps = to_int<Index>(key, value);
    else if (key == "B") spec.B = to_int<Index>(key, value);
    else if (key == "alpha") spec.alpha = to_double(key, value);
    else if (key == "seed") spec.seed = to_int<std::uint64_t>(key, value);
    else if (key == "nK") spec.nK = to_int<int>(key, value);
    else if (key == "blp") {
      if (value == "posterior_mean") spec.blp = BlpMethod::posterior_mean;
      else if (value == "linear") spec.blp = BlpMethod::linear;
      else bad_value(key, value);
    } else if (key == "estimators") {
      spec.estimators.clear();
      for (const auto& name : split_list(value)) spec.estimators.push_back(parse_estimator(name));
    } else if (key == "schemes") {
      spec.schemes.clear();
      for (const auto& name : split_list(value)) spec.schemes.push_back(parse_scheme(name));
    } else {
      throw Error(ErrorCode::config, "unknown scenario key '" + key + "'");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config && std::string(e.what()).find("'" + key + "'") != std::string::npos)
      throw;
    throw Error(ErrorCode::config, "scenario key '" + key + "': " + e.what());
  }
}

ScenarioSpec parse_scenario(const std::string& text) {
  ScenarioSpec spec;
  std::istringstream in(text);
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
      throw Error(ErrorCode::config,
                  "scenario line " + std::to_string(line_no) + ": expected 'key = value'");
    set_scenario_value(spec, line.substr(0, eq), line.substr(eq + 1));
  }
  return spec;
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw Error(ErrorCode::io, "cannot open scenario file '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_scenario(buffer.str());
}

std::string scenario_to_text(const ScenarioSpec& spec) {
  std::ostringstream out;
  out << "N = " << spec.N << "\n"
      << "n_i = " << spec.n_i << "\n"
      << "tau = " << fmt(spec.tau) << "\n"
      << "beta0 = " << fmt(spec.beta0) << "\n"
      << "beta1 = " << fmt(spec.beta1) << "\n"
      << "gamma = " << fmt(spec.gamma) << "\n"
      << "sigma_u2 = " << fmt(spec.sigma_u2) << "\n"
      << "sigma_e2 = " << fmt(spec.sigma_e2) << "\n"
      << "error_dist = " << error_dist_name(spec.error_dist) << "\n"
      << "ald_tau0 = " << fmt(spec.ald_tau0) << "\n"
      << "ald_sigma0 = " << fmt(spec.ald_sigma0) << "\n"
      << "sigma_v2 = " << fmt(spec.sigma_v2) << "\n"
      << "reps = " << spec.reps << "\n"
      << "B = " << spec.B << "\n"
      << "alpha = " << fmt(spec.alpha) << "\n";
  if (spec.seed) out << "seed = " << *spec.seed << "\n";
  out << "nK = " << spec.nK << "\n"
      << "blp = " << (spec.blp == BlpMethod::linear ? "linear" : "posterior_mean") << "\n";
  out << "estimators = ";
  for (std::size_t k = 0; k < spec.estimators.size(); ++k)
    out << (k ? "," : "") << estimator_name(spec.estimators[k]);
  out << "\nschemes = ";
  for (std::size_t k = 0; k < spec.schemes.size(); ++k)
    out << (k ? "," : "") << scheme_name(spec.schemes[k]);
  out << "\n";
  return out.str();
}

}  // namespace cqr
