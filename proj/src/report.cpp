#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cqr/simulation.hpp"

namespace cqr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void coverage_of(const std::vector<Interval>* intervals, double truth, double& coverage,
                 double& mcse, double& length) {
  coverage = mcse = length = kNaN;
  if (!intervals || intervals->empty()) return;
  double hits = 0.0, total_length = 0.0;
  for (const Interval& iv : *intervals) {
    if (iv.lo <= truth && truth <= iv.hi) hits += 1.0;
    total_length += iv.hi - iv.lo;
  }
  const double n = static_cast<double>(intervals->size());
  coverage = hits / n;
  mcse = std::sqrt(coverage * (1.0 - coverage) / n);
  length = total_length / n;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const std::vector<std::string>& header() {
  static const std::vector<std::string> h{
      "estimator", "component",  "reps_used", "truth",          "bias",
      "sd",        "rmse",       "mcse_bias", "cov_basic",      "mcse_cov_basic",
      "len_basic", "cov_seadj", "mcse_cov_seadj", "len_seadj"};
  return h;
}

std::vector<std::string> cells(const ReportRow& r) {
  return {r.estimator,
          r.component,
          std::to_string(r.reps_used),
          fmt(r.truth),
          fmt(r.bias),
          fmt(r.sd),
          fmt(r.rmse),
          fmt(r.mcse_bias),
          fmt(r.coverage_basic),
          fmt(r.mcse_coverage_basic),
          fmt(r.length_basic),
          fmt(r.coverage_seadj),
          fmt(r.mcse_coverage_seadj),
          fmt(r.length_seadj)};
}

}  // namespace

ReportRow summarize_row(const std::string& estimator, const std::string& component, double truth,
                        const std::vector<double>& estimates, const std::vector<Interval>* basic,
                        const std::vector<Interval>* seadj) {
  ReportRow row;
  row.estimator = estimator;
  row.component = component;
  row.truth = truth;
  row.estimates = estimates;
  row.reps_used = static_cast<Index>(estimates.size());
  row.bias = row.sd = row.rmse = row.mcse_bias = kNaN;
  if (!estimates.empty()) {
    const double n = static_cast<double>(estimates.size());
    double sum = 0.0, sq_err = 0.0;
    for (double e : estimates) {
      sum += e;
      sq_err += (e - truth) * (e - truth);
    }
    const double mean = sum / n;
    row.bias = mean - truth;
    row.rmse = std::sqrt(sq_err / n);
    if (estimates.size() >= 2) {
      double ss = 0.0;
      for (double e : estimates) ss += (e - mean) * (e - mean);
      row.sd = std::sqrt(ss / (n - 1.0));
      row.mcse_bias = row.sd / std::sqrt(n);
    }
  }
  coverage_of(basic, truth, row.coverage_basic, row.mcse_coverage_basic, row.length_basic);
  coverage_of(seadj, truth, row.coverage_seadj, row.mcse_coverage_seadj, row.length_seadj);
  return row;
}

std::string render_csv(const SimReport& report) {
  std::ostringstream out;
  const auto& h = header();
  for (std::size_t k = 0; k < h.size(); ++k) out << (k ? "," : "") << h[k];
  out << "\n";
  for (const ReportRow& r : report.rows) {
    const auto c = cells(r);
    for (std::size_t k = 0; k < c.size(); ++k) out << (k ? "," : "") << c[k];
    out << "\n";
  }
  return out.str();
}

std::string render_text(const SimReport& report) {
  std::vector<std::vector<std::string>> table{header()};
  for (const ReportRow& r : report.rows) table.push_back(cells(r));
  std::vector<std::size_t> width(header().size(), 0);
  for (const auto& row : table)
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());

  const ScenarioSpec& s = report.spec;
  std::ostringstream out;
  out << "scenario: N=" << s.N << " n_i=" << s.n_i << " tau=" << fmt(s.tau)
      << " gamma=" << fmt(s.gamma) << " sigma_u2=" << fmt(s.sigma_u2)
      << " sigma_e2=" << fmt(s.sigma_e2) << " errors=" << error_dist_name(s.error_dist);
  if (s.random_slope()) out << " sigma_v2=" << fmt(s.sigma_v2);
  out << "\n";
  out << "reps=" << s.reps << " B=" << s.B << " alpha=" << fmt(s.alpha) << " nK=" << s.nK
      << " seed=" << (s.seed ? std::to_string(*s.seed) : "none") << "\n\n";
  for (const auto& row : table) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << "  ";
      // Text columns left-aligned, numbers right-aligned.
      const std::size_t pad = width[k] - row[k].size();
      if (k < 2) {
        out << row[k] << std::string(pad, ' ');
      } else {
        out << std::string(pad, ' ') << row[k];
      }
    }
    out << "\n";
  }
  if (!report.notes.empty()) {
    out << "\nexcluded replications: " << report.notes.size() << "\n";
    for (const auto& n : report.notes) out << "  " << n << "\n";
  }
  return out.str();
}

}  // namespace cqr
