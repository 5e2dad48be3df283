#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cqr/pipeline.hpp"
#include "cqr/serialize.hpp"

namespace cqr {

namespace {

nlohmann::json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json record_json(const CoefRecord& r) {
  nlohmann::json j;
  j["term"] = r.term;
  j["estimate"] = number(r.estimate);
  j["estimate_adj"] = number(r.estimate_adj);
  j["se_obs"] = number(r.se_obs);
  j["se_adj"] = number(r.se_adj);
  j["basic_lo"] = number(r.basic.lo);
  j["basic_hi"] = number(r.basic.hi);
  j["seadj_lo"] = number(r.seadj.lo);
  j["seadj_hi"] = number(r.seadj.hi);
  j["B"] = r.B;
  j["scheme"] = r.scheme.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.scheme);
  return j;
}

std::string cell(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void csv_row(std::ostringstream& out, const FitBlock& b, const CoefRecord& r, const char* kind) {
  out << cell(r.tau) << "," << b.estimator << "," << kind << ",\"" << r.term << "\","
      << cell(r.estimate) << "," << cell(r.estimate_adj) << "," << cell(r.se_obs) << ","
      << cell(r.se_adj) << "," << cell(r.basic.lo) << "," << cell(r.basic.hi) << ","
      << cell(r.seadj.lo) << "," << cell(r.seadj.hi) << "," << r.B << ","
      << (r.scheme.empty() ? "NA" : r.scheme) << "\n";
}

}  // namespace

namespace {

nlohmann::json vector_json(const VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Index k = 0; k < v.size(); ++k) j.push_back(number(v(k)));
  return j;
}

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) j.push_back(vector_json(m.row(r).transpose()));
  return j;
}

}  // namespace

std::string to_json(const LqmmFit& fit, const std::vector<std::string>& term_names) {
  nlohmann::json j;
  j["tau"] = fit.tau;
  j["nK"] = fit.nK;
  j["terms"] = term_names;
  j["beta"] = vector_json(fit.beta);
  j["sigma"] = number(fit.sigma);
  j["re_chol"] = matrix_json(fit.re_scale.chol);
  j["re_covariance"] = matrix_json(fit.re_scale.covariance());
  j["loglik"] = number(fit.loglik);
  j["converged"] = fit.converged;
  j["n_evals"] = fit.n_evals;
  j["blp"] = matrix_json(fit.blp);
  return j.dump(2);
}

std::string to_json(const BootstrapRun& run, const FixedEffects& beta_hat, const VectorXd& se_obs,
                    const std::vector<std::string>& term_names, double alpha) {
  nlohmann::json j;
  j["B"] = run.B;
  j["scheme"] = scheme_name(run.scheme);
  j["n_failed"] = run.n_failed;
  j["failed"] = run.failed;
  j["alpha"] = alpha;
  const std::vector<Interval> basic = basic_ci(beta_hat, run, alpha);
  std::vector<Interval> seadj;
  VectorXd se_adj;
  if (has_oracle(run.scheme)) {
    const SeAdjusted adj = se_adjusted_ci(beta_hat, se_obs, run, alpha);
    seadj = adj.intervals;
    se_adj = adj.se_adj;
  }
  const FixedEffects beta_adj = bias_adjust(beta_hat, run);
  j["components"] = nlohmann::json::array();
  for (Index k = 0; k < beta_hat.size(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    nlohmann::json c;
    c["term"] = ks < term_names.size() ? term_names[ks] : std::to_string(k);
    c["estimate"] = number(beta_hat(k));
    c["mean_twostep"] = number(run.mean_twostep(k));
    c["sd_twostep"] = number(run.sd_twostep(k));
    c["sd_oracle"] = run.sd_oracle.size() ? number(run.sd_oracle(k)) : nlohmann::json(nullptr);
    c["bias"] = number(run.mean_twostep(k) - beta_hat(k));
    c["estimate_adj"] = number(beta_adj(k));
    c["basic"] = {number(basic[ks].lo), number(basic[ks].hi)};
    if (!seadj.empty()) {
      c["se_adj"] = number(se_adj(k));
      c["se_adjusted"] = {number(seadj[ks].lo), number(seadj[ks].hi)};
    } else {
      c["se_adj"] = nullptr;
      c["se_adjusted"] = nullptr;
    }
    j["components"].push_back(std::move(c));
  }
  return j.dump(2);
}

std::string to_json(const FitReport& report) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const FitBlock& b : report.blocks) {
    nlohmann::json j;
    j["tau"] = b.tau;
    j["estimator"] = b.estimator;
    j["converged"] = b.converged;
    j["n_failed"] = b.n_failed;
    j["coefficients"] = nlohmann::json::array();
    for (const auto& r : b.coefficients) j["coefficients"].push_back(record_json(r));
    j["contrasts"] = nlohmann::json::array();
    for (const auto& r : b.contrasts) j["contrasts"].push_back(record_json(r));
    blocks.push_back(std::move(j));
  }
  nlohmann::json root;
  root["results"] = std::move(blocks);
  return root.dump(2);
}

std::string to_csv(const FitReport& report) {
  std::ostringstream out;
  out << "tau,estimator,kind,term,estimate,estimate_adj,se_obs,se_adj,basic_lo,basic_hi,"
         "seadj_lo,seadj_hi,B,scheme\n";
  for (const FitBlock& b : report.blocks) {
    for (const auto& r : b.coefficients) csv_row(out, b, r, "coef");
    for (const auto& r : b.contrasts) csv_row(out, b, r, "contrast");
  }
  return out.str();
}

}  // namespace cqr
