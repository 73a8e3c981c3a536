#pragma once

// Treatment-effect estimators at an interim analysis.
//
//   tf_only  unit weights on subjects followed for the full window T_F
//   ipwcc    weights Delta / K(U, A), Step 1 of the two-step algorithm
//   aipw1    one-step update using baseline augmentation only
//   aipw2    one-step update adding the censoring-martingale terms
//
// InterimAnalyzer caches the pieces shared by the estimators (censoring
// curves, the Step 1 fit, the dependent variable and the covariates) so
// several estimators on one snapshot cost little more than one.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "basis.hpp"
#include "censoring.hpp"
#include "errors.hpp"
#include "information.hpp"
#include "linalg.hpp"
#include "models.hpp"
#include "trial_data.hpp"

namespace lagseq {

enum class EstimatorKind { tf_only, ipwcc, aipw1, aipw2 };

inline constexpr EstimatorKind all_estimators[] = {EstimatorKind::tf_only, EstimatorKind::ipwcc,
                                                   EstimatorKind::aipw1, EstimatorKind::aipw2};

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::tf_only: return "tf";
    case EstimatorKind::ipwcc: return "ipw";
    case EstimatorKind::aipw1: return "aipw1";
    case EstimatorKind::aipw2: return "aipw2";
  }
  return "?";
}

inline EstimatorKind parse_estimator(const std::string& s) {
  if (s == "tf" || s == "tf_only") return EstimatorKind::tf_only;
  if (s == "ipw" || s == "ipwcc") return EstimatorKind::ipwcc;
  if (s == "aipw1") return EstimatorKind::aipw1;
  if (s == "aipw2") return EstimatorKind::aipw2;
  throw ValidationError("unknown estimator '" + s + "' (expected tf, ipw, aipw1 or aipw2)");
}

struct Diagnostics {
  int iterations = 0;           // Newton iterations in the estimating equation
  double root_residual = 0.0;   // max |weighted mean of M| at the root
  double g_condition = 0.0;     // condition number of the averaged Jacobian
  double ls_condition = 0.0;    // condition number of the Step 2 design
  std::size_t ls_rank = 0;
  double r_squared = 0.0;       // Step 2 regression, uncentered
};

struct AnalysisResult {
  EstimatorKind kind = EstimatorKind::ipwcc;
  double t = 0.0;
  double beta = 0.0;
  double se = 0.0;
  double wald = 0.0;
  std::size_t n_t = 0;
  std::size_t n_A_t = 0;
  double var_full = 0.0;
  double n_ess = 0.0;
  double p_info = 0.0;
  Eigen::VectorXd theta_step1;
  Diagnostics diag;
};

struct AnalysisConfig {
  ModelSpec model;
  BasisSpec basis;
  double n_max = 0.0;
  SolveOptions solve;
};

class InterimAnalyzer {
 public:
  // The snapshot must outlive the analyzer.
  InterimAnalyzer(const InterimSnapshot& snap, AnalysisConfig cfg) : snap_(&snap), cfg_(std::move(cfg)) {
    if (snap.subjects.empty()) throw ValidationError("no enrolled subjects at t = " + std::to_string(snap.t));
    if (!(cfg_.n_max > 0)) throw ValidationError("n_max must be positive");
    cfg_.basis.check_dims(snap.p_x(), snap.q());
  }

  const InterimSnapshot& snapshot() const { return *snap_; }
  const AnalysisConfig& config() const { return cfg_; }
  std::size_t n() const { return snap_->size(); }

  const ArmCurves& curves() {
    if (!curves_) {
      std::size_t na[2] = {0, 0};
      for (const auto& s : snap_->subjects) ++na[s.arm()];
      if (na[0] == 0 || na[1] == 0) throw ValidationError("both arms must have enrolled subjects");
      curves_ = fit_arm_curves(*snap_);
    }
    return *curves_;
  }

  const std::vector<double>& weights() {
    if (!weights_) weights_ = ipcw_weights(*snap_, curves());
    return *weights_;
  }

  // Step 1: weighted fit, scaling row G and m_i (zero for Delta_i = 0).
  struct Step1 {
    ModelFit fit;
    InfluenceEvaluator ev;
    std::vector<double> m;
    double g_condition = 0.0;
  };

  const Step1& step1() {
    if (!step1_) step1_ = fit_and_scale(weights());
    return *step1_;
  }

  // Y-hat_i(t): Delta m / K plus the martingale-weighted at-risk averages.
  const Eigen::VectorXd& dependent_variable() {
    if (!yhat_) yhat_ = compute_dependent_variable();
    return *yhat_;
  }

  // (A_i - pi_t) f_m(X_i), m = 0..M.
  const Eigen::MatrixXd& baseline_block() {
    if (!zbase_) zbase_ = baseline_covariates(*snap_, cfg_.basis);
    return *zbase_;
  }

  // Arm-0 block (L columns) followed by arm-1 block (L columns).
  const Eigen::MatrixXd& martingale_block() {
    if (!zmart_) zmart_ = compute_martingale_block();
    return *zmart_;
  }

  AnalysisResult estimate(EstimatorKind kind) {
    switch (kind) {
      case EstimatorKind::tf_only: return estimate_tf();
      case EstimatorKind::ipwcc: return estimate_ipw();
      case EstimatorKind::aipw1: return estimate_aipw(false);
      case EstimatorKind::aipw2: return estimate_aipw(true);
    }
    throw ValidationError("unknown estimator");
  }

  // Mean of (at-risk h - mu) per jump, a numerical check of the centering.
  double max_centering_error() {
    martingale_block();
    return centering_error_;
  }

 private:
  Step1 fit_and_scale(const std::vector<double>& w) const {
    Step1 s;
    const auto sample = weighted_sample(cfg_.model, *snap_, w);
    s.fit = solve_weighted(cfg_.model, sample, cfg_.solve);
    const Eigen::MatrixXd J = mean_jacobian(cfg_.model, sample, s.fit.theta);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto& sv = svd.singularValues();
    s.g_condition = sv[0] / sv[sv.size() - 1];
    if (!(s.g_condition <= 1e12)) throw NumericalError("scaling matrix is singular (condition number > 1e12)");
    s.ev = InfluenceEvaluator{cfg_.model, s.fit.theta, -J.inverse().row(cfg_.model.dim() - 1)};
    s.m.assign(snap_->size(), 0.0);
    for (std::size_t i = 0; i < snap_->size(); ++i)
      if (w[i] != 0.0) s.m[i] = s.ev(snap_->subjects[i].outcome().value(), snap_->subjects[i].arm());
    return s;
  }

  // Indices of arm-a subjects sorted by U.
  std::vector<std::size_t> sorted_arm(int a) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < snap_->size(); ++i)
      if (snap_->subjects[i].arm() == a) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      return snap_->subjects[x].U() < snap_->subjects[y].U();
    });
    return idx;
  }

  Eigen::VectorXd compute_dependent_variable() {
    const auto& w = weights();
    const auto& m = step1().m;
    const std::size_t n = snap_->size();
    Eigen::VectorXd yh(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) yh[static_cast<Eigen::Index>(i)] = w[i] * m[i];
    for (int a = 0; a < 2; ++a) {
      const auto& c = curves()[a];
      const std::size_t J = c.jumps();
      if (J == 0) continue;
      const auto idx = sorted_arm(a);
      // Suffix sums of w m over subjects ordered by U.
      std::vector<double> suffix(idx.size() + 1, 0.0);
      std::vector<double> us(idx.size());
      for (std::size_t k = idx.size(); k-- > 0;) {
        suffix[k] = suffix[k + 1] + w[idx[k]] * m[idx[k]];
        us[k] = snap_->subjects[idx[k]].U();
      }
      // R_j = (sum of w m over the at-risk set) / at-risk count, and the
      // running sum of dLambda_j R_j.
      std::vector<double> R(J), prefix(J + 1, 0.0);
      for (std::size_t j = 0; j < J; ++j) {
        const auto first = static_cast<std::size_t>(std::lower_bound(us.begin(), us.end(), c.jump_times[j]) - us.begin());
        R[j] = c.at_risk[j] > 0 ? suffix[first] / static_cast<double>(c.at_risk[j]) : 0.0;
        prefix[j + 1] = prefix[j] + c.dlambda[j] * R[j];
      }
      for (std::size_t i : idx) {
        const auto& s = snap_->subjects[i];
        const std::size_t k = c.count_upto(s.U());
        double aug = -prefix[k];
        if (!s.delta() && k > 0 && c.jump_times[k - 1] == s.U()) aug += R[k - 1];
        yh[static_cast<Eigen::Index>(i)] += aug;
      }
    }
    return yh;
  }

  Eigen::MatrixXd compute_martingale_block() {
    const std::size_t n = snap_->size(), L = cfg_.basis.L();
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * L));
    centering_error_ = 0.0;
    if (L == 0) return Z;
    const std::vector<double>& ldef = snap_->l_default;
    std::vector<double> h(L);
    for (int a = 0; a < 2; ++a) {
      const auto& c = curves()[a];
      const std::size_t J = c.jumps();
      if (J == 0) continue;
      const auto off = static_cast<Eigen::Index>(a * L);
      std::vector<double> hsum(J * L, 0.0);
      // First pass: sum over at-risk subjects of h at each jump, and each
      // subject's own sum of dM_i(u_j) h_i(u_j).
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = snap_->subjects[i];
        if (s.arm() != a) continue;
        const std::size_t k = c.count_upto(s.U());
        const auto& path = s.path();
        std::size_t rec = 0;
        for (std::size_t j = 0; j < k; ++j) {
          const double u = c.jump_times[j];
          while (rec < path.size() && path.time(rec) <= u) ++rec;
          const std::span<const double> lu = rec == 0 ? std::span<const double>(ldef) : path.row(rec - 1);
          const double dM = (!s.delta() && u == s.U() ? 1.0 : 0.0) - c.dlambda[j];
          for (std::size_t l = 0; l < L; ++l) {
            h[l] = cfg_.basis.h[l].eval(u, s.x(), lu);
            hsum[j * L + l] += h[l];
            Z(static_cast<Eigen::Index>(i), off + static_cast<Eigen::Index>(l)) += dM * h[l];
          }
        }
      }
      // mu_j = hsum_j / at-risk count; subtract sum_j dM_i(u_j) mu_j.
      std::vector<double> mu(J * L), prefix((J + 1) * L, 0.0);
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t l = 0; l < L; ++l) {
          mu[j * L + l] = hsum[j * L + l] / static_cast<double>(c.at_risk[j]);
          prefix[(j + 1) * L + l] = prefix[j * L + l] + c.dlambda[j] * mu[j * L + l];
        }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = snap_->subjects[i];
        if (s.arm() != a) continue;
        const std::size_t k = c.count_upto(s.U());
        const bool own = !s.delta() && k > 0 && c.jump_times[k - 1] == s.U();
        for (std::size_t l = 0; l < L; ++l) {
          double v = prefix[k * L + l];
          if (own) v -= mu[(k - 1) * L + l];
          Z(static_cast<Eigen::Index>(i), off + static_cast<Eigen::Index>(l)) += v;
        }
      }
      // Centering check: sum over the at-risk set of (h - mu) at each jump.
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t l = 0; l < L; ++l) {
          const double scale = std::max(1.0, std::fabs(hsum[j * L + l]));
          const double err = std::fabs(hsum[j * L + l] - static_cast<double>(c.at_risk[j]) * mu[j * L + l]) / scale;
          centering_error_ = std::max(centering_error_, err);
        }
    }
    return Z;
  }

  AnalysisResult base_result(EstimatorKind kind) const {
    AnalysisResult r;
    r.kind = kind;
    r.t = snap_->t;
    r.n_t = snap_->n_t;
    r.n_A_t = snap_->n_A_t;
    return r;
  }

  void finish(AnalysisResult& r) const {
    if (!(r.se > 0.0) || !std::isfinite(r.se)) throw NumericalError("standard error is not positive");
    r.wald = r.beta / r.se;
    if (!std::isfinite(r.wald)) throw NumericalError("Wald statistic is not finite");
    const auto e = n_ess(r.var_full, r.se, cfg_.n_max);
    r.n_ess = e.n_ess;
    if (r.kind != EstimatorKind::tf_only) r.p_info = e.p;
  }

  AnalysisResult estimate_tf() const {
    const std::size_t nA = snap_->n_A_t;
    if (nA < static_cast<std::size_t>(cfg_.model.dim()) + 2)
      throw ValidationError("too few subjects followed for the full window T_F (n_A = " + std::to_string(nA) + ")");
    std::vector<double> w(snap_->size(), 0.0);
    for (std::size_t i = 0; i < snap_->size(); ++i)
      if (snap_->subjects[i].C() >= snap_->T_F) w[i] = 1.0;
    const Step1 s = fit_and_scale(w);
    double ss = 0.0;
    for (double v : s.m) ss += v * v;
    AnalysisResult r = base_result(EstimatorKind::tf_only);
    r.beta = s.fit.beta();
    r.se = std::sqrt(ss) / static_cast<double>(nA);
    r.var_full = ss / static_cast<double>(nA);
    r.p_info = static_cast<double>(nA) / cfg_.n_max;
    r.theta_step1 = s.fit.theta;
    r.diag.iterations = s.fit.iterations;
    r.diag.root_residual = s.fit.residual;
    r.diag.g_condition = s.g_condition;
    finish(r);
    return r;
  }

  AnalysisResult estimate_ipw() {
    const auto& s = step1();
    const Eigen::VectorXd& yh = dependent_variable();
    AnalysisResult r = base_result(EstimatorKind::ipwcc);
    r.beta = s.fit.beta();
    r.se = std::sqrt(yh.squaredNorm()) / static_cast<double>(n());
    r.var_full = weighted_second_moment(weights(), s.m);
    fill_step1(r, s);
    finish(r);
    return r;
  }

  AnalysisResult estimate_aipw(bool with_martingale) {
    const auto& s = step1();
    const Eigen::VectorXd& yh = dependent_variable();
    const Eigen::MatrixXd& zb = baseline_block();
    Eigen::MatrixXd design;
    if (with_martingale) {
      const Eigen::MatrixXd& zm = martingale_block();
      // Identically zero columns (arms or terms with no censoring jumps) are
      // dropped so that the fit matches the baseline-only one exactly.
      std::vector<Eigen::Index> keep;
      for (Eigen::Index k = 0; k < zm.cols(); ++k)
        if (zm.col(k).cwiseAbs().maxCoeff() > 0.0) keep.push_back(k);
      design.resize(zb.rows(), zb.cols() + static_cast<Eigen::Index>(keep.size()));
      design.leftCols(zb.cols()) = zb;
      for (std::size_t k = 0; k < keep.size(); ++k) design.col(zb.cols() + static_cast<Eigen::Index>(k)) = zm.col(keep[k]);
    } else {
      design = zb;
    }
    if (design.cols() + 2 > design.rows()) throw ValidationError("augmentation design has too few rows for its width");
    const auto fit = min_norm_least_squares(design, yh);
    const double nn = static_cast<double>(n());
    AnalysisResult r = base_result(with_martingale ? EstimatorKind::aipw2 : EstimatorKind::aipw1);
    r.beta = s.fit.beta() - fit.fitted.sum() / nn;
    r.se = std::sqrt((yh - fit.fitted).squaredNorm()) / nn;
    r.var_full = projected_second_moment(weights(), s.m, zb);
    fill_step1(r, s);
    r.diag.ls_condition = fit.condition;
    r.diag.ls_rank = fit.rank;
    const double tss = yh.squaredNorm();
    r.diag.r_squared = tss > 0 ? 1.0 - (yh - fit.fitted).squaredNorm() / tss : 0.0;
    finish(r);
    return r;
  }

  static void fill_step1(AnalysisResult& r, const Step1& s) {
    r.theta_step1 = s.fit.theta;
    r.diag.iterations = s.fit.iterations;
    r.diag.root_residual = s.fit.residual;
    r.diag.g_condition = s.g_condition;
  }

  const InterimSnapshot* snap_;
  AnalysisConfig cfg_;
  std::optional<ArmCurves> curves_;
  std::optional<std::vector<double>> weights_;
  std::optional<Step1> step1_;
  std::optional<Eigen::VectorXd> yhat_;
  std::optional<Eigen::MatrixXd> zbase_;
  std::optional<Eigen::MatrixXd> zmart_;
  double centering_error_ = 0.0;
};

inline AnalysisResult estimate_tf_only(const InterimSnapshot& snap, const AnalysisConfig& cfg) {
  return InterimAnalyzer(snap, cfg).estimate(EstimatorKind::tf_only);
}
inline AnalysisResult estimate_ipwcc(const InterimSnapshot& snap, const AnalysisConfig& cfg) {
  return InterimAnalyzer(snap, cfg).estimate(EstimatorKind::ipwcc);
}
inline AnalysisResult estimate_aipw(const InterimSnapshot& snap, const AnalysisConfig& cfg, bool with_martingale) {
  return InterimAnalyzer(snap, cfg).estimate(with_martingale ? EstimatorKind::aipw2 : EstimatorKind::aipw1);
}

}  // namespace lagseq
