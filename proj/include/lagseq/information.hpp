#pragma once

// Effective sample size and proportion of information.
//
// Fixed-sample monitoring: n_ESS(t) = var_hat{m} / SE^2 and p(t) = n_ESS / n_max,
// where var_hat{m} is the inverse-probability-weighted average of the
// squared full-data influence function (optionally after projecting out the
// baseline augmentation). Information-based monitoring: Inf(t) = SE^-2 and
// p(t) = Inf(t) / MI.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "basis.hpp"
#include "censoring.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "models.hpp"
#include "normal.hpp"
#include "trial_data.hpp"

namespace lagseq {

enum class Sidedness { one, two };

// (1/n) sum_i w_i m_i^2 with w_i = Delta_i / K(U_i, A_i).
inline double weighted_second_moment(const std::vector<double>& w, const std::vector<double>& m) {
  if (w.empty()) throw ValidationError("no subjects");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) s += w[i] * m[i] * m[i];
  return s / static_cast<double>(w.size());
}

// Weighted least squares of m on the baseline block Z with weights w, then
// (1/n) sum_i w_i (m_i - Pred*_i)^2.
inline double projected_second_moment(const std::vector<double>& w, const std::vector<double>& m,
                                       const Eigen::MatrixXd& Z) {
  const auto n = static_cast<Eigen::Index>(w.size());
  if (n == 0) throw ValidationError("no subjects");
  const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
  const Eigen::VectorXd mv = Eigen::Map<const Eigen::VectorXd>(m.data(), n);
  const auto fit = min_norm_least_squares(Z, mv, &wv);
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (wv[i] != 0.0) s += wv[i] * (mv[i] - fit.fitted[i]) * (mv[i] - fit.fitted[i]);
  return s / static_cast<double>(n);
}

namespace detail {
inline std::vector<double> influence_values(const InterimSnapshot& snap, const InfluenceEvaluator& ev,
                                            const std::vector<double>& w) {
  std::vector<double> m(snap.size(), 0.0);
  for (std::size_t i = 0; i < snap.size(); ++i)
    if (w[i] != 0.0) m[i] = ev(snap.subjects[i].outcome().value(), snap.subjects[i].arm());
  return m;
}
}  // namespace detail

inline double var_full_ipw(const InterimSnapshot& snap, const InfluenceEvaluator& ev, const ArmCurves& curves) {
  const auto w = ipcw_weights(snap, curves);
  return weighted_second_moment(w, detail::influence_values(snap, ev, w));
}

inline double var_full_aipw(const InterimSnapshot& snap, const InfluenceEvaluator& ev, const ArmCurves& curves,
                            const BasisSpec& basis) {
  const auto w = ipcw_weights(snap, curves);
  return projected_second_moment(w, detail::influence_values(snap, ev, w), baseline_covariates(snap, basis));
}

struct EssResult {
  double n_ess = 0.0;
  double p = 0.0;
  bool above_one = false;  // p > 1, reported raw; clamp before spending
};

inline EssResult n_ess(double var_full, double se_beta, double n_max) {
  if (!(var_full > 0.0)) throw ValidationError("n_ess: variance estimate must be positive");
  if (!(se_beta > 0.0)) throw ValidationError("n_ess: standard error must be positive");
  if (!(n_max > 0.0)) throw ValidationError("n_ess: n_max must be positive");
  EssResult r;
  r.n_ess = var_full / (se_beta * se_beta);
  r.p = r.n_ess / n_max;
  r.above_one = r.p > 1.0;
  return r;
}

// Critical value for a level-alpha test: z_{alpha/2} two-sided, z_alpha one-sided.
inline double critical_z(double alpha, Sidedness sided) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
  return normal::upper_quantile(sided == Sidedness::two ? alpha / 2.0 : alpha);
}

// MI = ((z + z_gamma) / beta_A)^2 * IF, gamma = 1 - power.
inline double max_information(double alpha, Sidedness sided, double gamma, double beta_A, double inflation = 1.0) {
  if (beta_A == 0.0) throw ValidationError("max_information: beta_A must be nonzero");
  if (!(inflation >= 1.0)) throw ValidationError("max_information: inflation factor must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("max_information: gamma must lie in (0, 1)");
  const double z = critical_z(alpha, sided) + normal::upper_quantile(gamma);
  return (z / beta_A) * (z / beta_A) * inflation;
}

struct InformationReport {
  enum class Mode { fixed_sample, information_based } mode = Mode::fixed_sample;
  double var_full = 0.0;
  double n_ess = 0.0;
  double p_fixed = 0.0;
  double inf_t = 0.0;
  double mi = 0.0;
  double p = 0.0;  // the fraction used for monitoring in this mode
};

}  // namespace lagseq
