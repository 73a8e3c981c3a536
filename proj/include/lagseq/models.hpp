#pragma once

// Full-data estimating functions M(Y, A; alpha, beta) for the three marginal
// treatment-effect models, the weighted Newton solver, the scaling row G and
// the influence function m = G M.
//
// Parameter layout is theta = (alpha_1, ..., alpha_{p-1}, beta).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "trial_data.hpp"

namespace lagseq {

enum class ModelKind { mean_difference, log_relative_risk, proportional_odds };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mean_difference: return "mean_difference";
    case ModelKind::log_relative_risk: return "log_relative_risk";
    case ModelKind::proportional_odds: return "proportional_odds";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "mean_difference") return ModelKind::mean_difference;
  if (s == "log_relative_risk") return ModelKind::log_relative_risk;
  if (s == "proportional_odds") return ModelKind::proportional_odds;
  throw ValidationError("unknown model kind '" + s + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::mean_difference;
  int levels = 0;  // ordinal levels c, proportional odds only

  static ModelSpec mean_difference() { return {ModelKind::mean_difference, 0}; }
  static ModelSpec log_relative_risk() { return {ModelKind::log_relative_risk, 0}; }
  static ModelSpec proportional_odds(int c) {
    if (c < 3) throw ValidationError("proportional odds model needs at least 3 levels");
    return {ModelKind::proportional_odds, c};
  }

  int dim() const { return kind == ModelKind::proportional_odds ? levels : 2; }

  OutcomeKind outcome_kind() const {
    switch (kind) {
      case ModelKind::mean_difference: return OutcomeKind::continuous;
      case ModelKind::log_relative_risk: return OutcomeKind::binary;
      case ModelKind::proportional_odds: return OutcomeKind::ordinal;
    }
    return OutcomeKind::continuous;
  }

  void check_outcome(double y) const {
    if (kind == ModelKind::proportional_odds && (y < 1 || y > levels || y != std::floor(y)))
      throw ValidationError("ordinal outcome " + std::to_string(y) + " outside 1.." + std::to_string(levels));
    if (kind == ModelKind::log_relative_risk && y != 0.0 && y != 1.0)
      throw ValidationError("binary outcome must be 0 or 1");
  }
};

inline double expit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// M(Y, A; theta), written into out (length p).
inline void evaluate_M(const ModelSpec& spec, const Eigen::VectorXd& theta, double y, int a,
                       Eigen::Ref<Eigen::VectorXd> out) {
  switch (spec.kind) {
    case ModelKind::mean_difference: {
      const double r = y - theta[0] - theta[1] * a;
      out[0] = r;
      out[1] = a * r;
      return;
    }
    case ModelKind::log_relative_risk: {
      const double r = y - std::exp(theta[0] + theta[1] * a);
      out[0] = r;
      out[1] = a * r;
      return;
    }
    case ModelKind::proportional_odds: {
      const int c = spec.levels;
      const double beta = theta[c - 1];
      double sum = 0.0;
      for (int j = 0; j < c - 1; ++j) {
        const double r = (y <= j + 1 ? 1.0 : 0.0) - expit(theta[j] + beta * a);
        out[j] = r;
        sum += r;
      }
      out[c - 1] = a * sum;
      return;
    }
  }
}

inline Eigen::VectorXd evaluate_M(const ModelSpec& spec, const Eigen::VectorXd& theta, double y, int a) {
  Eigen::VectorXd out(spec.dim());
  evaluate_M(spec, theta, y, a, out);
  return out;
}

// Analytic dM/dtheta^T (p x p), accumulated as w * J into acc.
inline void accumulate_jacobian(const ModelSpec& spec, const Eigen::VectorXd& theta, double y, int a,
                                double w, Eigen::Ref<Eigen::MatrixXd> acc) {
  switch (spec.kind) {
    case ModelKind::mean_difference:
      acc(0, 0) -= w;
      acc(0, 1) -= w * a;
      acc(1, 0) -= w * a;
      acc(1, 1) -= w * a;
      return;
    case ModelKind::log_relative_risk: {
      const double e = std::exp(theta[0] + theta[1] * a);
      acc(0, 0) -= w * e;
      acc(0, 1) -= w * a * e;
      acc(1, 0) -= w * a * e;
      acc(1, 1) -= w * a * e;
      return;
    }
    case ModelKind::proportional_odds: {
      (void)y;
      const int c = spec.levels;
      const double beta = theta[c - 1];
      double tot = 0.0;
      for (int j = 0; j < c - 1; ++j) {
        const double pj = expit(theta[j] + beta * a);
        const double v = pj * (1.0 - pj);
        acc(j, j) -= w * v;
        acc(j, c - 1) -= w * a * v;
        acc(c - 1, j) -= w * a * v;
        tot += v;
      }
      acc(c - 1, c - 1) -= w * a * tot;
      return;
    }
  }
}

// The data an estimating equation is solved on: outcomes, arms and weights
// of the subjects with positive weight.
struct WeightedSample {
  std::vector<double> y;
  std::vector<int> a;
  std::vector<double> w;

  std::size_t size() const { return y.size(); }
  double total_weight() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }
};

// Subjects with w_i > 0 from a snapshot. Positive weight on an unascertained
// subject is a caller error.
inline WeightedSample weighted_sample(const ModelSpec& spec, const InterimSnapshot& snap,
                                      const std::vector<double>& weights) {
  if (weights.size() != snap.size()) throw ValidationError("weights length does not match snapshot");
  WeightedSample s;
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (weights[i] < 0.0) throw ValidationError("negative weight");
    if (weights[i] == 0.0) continue;
    const auto& sub = snap.subjects[i];
    if (!sub.has_outcome()) throw ValidationError("positive weight on subject " + sub.id() + " with no outcome");
    const double y = sub.outcome().value();
    spec.check_outcome(y);
    s.y.push_back(y);
    s.a.push_back(sub.arm());
    s.w.push_back(weights[i]);
  }
  return s;
}

// Weighted average of M over the sample.
inline Eigen::VectorXd mean_M(const ModelSpec& spec, const WeightedSample& s, const Eigen::VectorXd& theta) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(spec.dim()), m(spec.dim());
  for (std::size_t i = 0; i < s.size(); ++i) {
    evaluate_M(spec, theta, s.y[i], s.a[i], m);
    acc += s.w[i] * m;
  }
  return acc / s.total_weight();
}

// Weighted average of dM/dtheta^T.
inline Eigen::MatrixXd mean_jacobian(const ModelSpec& spec, const WeightedSample& s, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(spec.dim(), spec.dim());
  for (std::size_t i = 0; i < s.size(); ++i) accumulate_jacobian(spec, theta, s.y[i], s.a[i], s.w[i], acc);
  return acc / s.total_weight();
}

// Central-difference version, step 1e-5 (1 + |theta_k|).
inline Eigen::MatrixXd numeric_jacobian(const ModelSpec& spec, const WeightedSample& s, const Eigen::VectorXd& theta) {
  const int p = spec.dim();
  Eigen::MatrixXd J(p, p);
  for (int k = 0; k < p; ++k) {
    const double h = 1e-5 * (1.0 + std::fabs(theta[k]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    J.col(k) = (mean_M(spec, s, tp) - mean_M(spec, s, tm)) / (2.0 * h);
  }
  return J;
}

enum class JacobianMode { analytic, numeric };

struct SolveOptions {
  int max_iter = 50;
  double tol = 1e-8;  // max |weighted mean of M| at the root
  JacobianMode jacobian = JacobianMode::analytic;
};

struct ModelFit {
  Eigen::VectorXd theta;
  int iterations = 0;
  double residual = 0.0;  // max |weighted mean of M|
  double alpha(int j) const { return theta[j]; }
  double beta() const { return theta[theta.size() - 1]; }
};

namespace detail {

inline Eigen::VectorXd start_values(const ModelSpec& spec, const WeightedSample& s) {
  double sw[2] = {0, 0}, sy[2] = {0, 0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    sw[s.a[i]] += s.w[i];
    sy[s.a[i]] += s.w[i] * s.y[i];
  }
  if (sw[0] <= 0 || sw[1] <= 0) throw NumericalError("estimating equation: an arm has no weighted subjects");
  const double m0 = sy[0] / sw[0], m1 = sy[1] / sw[1];
  Eigen::VectorXd th(spec.dim());
  switch (spec.kind) {
    case ModelKind::mean_difference:
      th << m0, m1 - m0;
      break;
    case ModelKind::log_relative_risk:
      if (m0 <= 0 || m1 <= 0) throw NumericalError("log relative risk: no events in an arm");
      th << std::log(m0), std::log(m1 / m0);
      break;
    case ModelKind::proportional_odds: {
      const int c = spec.levels;
      std::vector<double> cnt(c, 0.0);
      for (std::size_t i = 0; i < s.size(); ++i) cnt[static_cast<int>(s.y[i]) - 1] += s.w[i];
      for (int j = 0; j < c; ++j)
        if (cnt[j] <= 0.0)
          throw NumericalError("ordinal level " + std::to_string(j + 1) + " has zero weighted count");
      const double tot = sw[0] + sw[1];
      double cum = 0.0;
      for (int j = 0; j < c - 1; ++j) {
        cum += cnt[j];
        th[j] = logit(cum / tot);
      }
      th[c - 1] = 0.0;
      break;
    }
  }
  return th;
}

inline bool cutpoints_ok(const ModelSpec& spec, const Eigen::VectorXd& th) {
  if (!th.allFinite()) return false;
  if (spec.kind != ModelKind::proportional_odds) return true;
  for (int j = 1; j < spec.levels - 1; ++j)
    if (!(th[j] > th[j - 1])) return false;
  return true;
}

}  // namespace detail

// Solves sum_i w_i M(Y_i, A_i; theta) = 0 by damped Newton.
inline ModelFit solve_weighted(const ModelSpec& spec, const WeightedSample& s, const SolveOptions& opt = {}) {
  const int p = spec.dim();
  if (s.size() < static_cast<std::size_t>(p)) throw NumericalError("estimating equation: too few weighted subjects");
  ModelFit fit;
  fit.theta = detail::start_values(spec, s);
  Eigen::VectorXd g = mean_M(spec, s, fit.theta);
  double gnorm = g.cwiseAbs().maxCoeff();
  for (int it = 0; it < opt.max_iter && gnorm > 1e-14; ++it) {
    Eigen::MatrixXd J = opt.jacobian == JacobianMode::analytic ? mean_jacobian(spec, s, fit.theta)
                                                               : numeric_jacobian(spec, s, fit.theta);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      J += 1e-8 * Eigen::MatrixXd::Identity(p, p);
      lu.compute(J);
      if (!lu.isInvertible()) throw NumericalError("estimating equation: singular Jacobian");
    }
    const Eigen::VectorXd step = lu.solve(g);
    double lambda = 1.0, nn = 0.0;
    bool accepted = false;
    Eigen::VectorXd th, gn;
    for (int half = 0; half < 40 && !accepted; ++half, lambda *= 0.5) {
      th = fit.theta - lambda * step;
      if (!detail::cutpoints_ok(spec, th)) continue;
      gn = mean_M(spec, s, th);
      nn = gn.cwiseAbs().maxCoeff();
      accepted = std::isfinite(nn) && nn < gnorm * (1.0 - 1e-4 * lambda);
    }
    fit.iterations = it + 1;
    if (!accepted) break;  // no further progress possible
    const bool tiny = (th - fit.theta).cwiseAbs().maxCoeff() < 1e-15 * (1.0 + th.cwiseAbs().maxCoeff());
    fit.theta = th;
    g = gn;
    gnorm = nn;
    if (tiny) break;
  }
  fit.residual = gnorm;
  if (!(gnorm <= opt.tol)) {
    throw NumericalError("estimating equation did not converge (residual " + std::to_string(gnorm) + " after " +
                         std::to_string(fit.iterations) + " iterations)");
  }
  if (!detail::cutpoints_ok(spec, fit.theta)) throw NumericalError("fitted cutpoints are not increasing");
  return fit;
}

inline ModelFit solve_weighted(const ModelSpec& spec, const InterimSnapshot& snap, const std::vector<double>& weights,
                               const SolveOptions& opt = {}) {
  return solve_weighted(spec, weighted_sample(spec, snap, weights), opt);
}

// Last row of -[weighted average of dM/dtheta^T]^{-1}. Dividing by the total
// weight makes G invariant to rescaling the weights.
inline Eigen::RowVectorXd compute_G(const ModelSpec& spec, const WeightedSample& s, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd J = mean_jacobian(spec, s, theta);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& sv = svd.singularValues();
  if (!(sv[sv.size() - 1] > 0.0) || sv[0] / sv[sv.size() - 1] > 1e12)
    throw NumericalError("scaling matrix is singular (condition number > 1e12)");
  const Eigen::MatrixXd inv = J.inverse();
  return -inv.row(spec.dim() - 1);
}

inline Eigen::RowVectorXd compute_G(const ModelSpec& spec, const InterimSnapshot& snap,
                                    const std::vector<double>& weights, const Eigen::VectorXd& theta) {
  return compute_G(spec, weighted_sample(spec, snap, weights), theta);
}

// m(Y, A) = G M(Y, A) at a converged fit.
struct InfluenceEvaluator {
  ModelSpec spec;
  Eigen::VectorXd theta;
  Eigen::RowVectorXd G;

  double operator()(double y, int a) const {
    Eigen::VectorXd m(spec.dim());
    evaluate_M(spec, theta, y, a, m);
    return G.dot(m);
  }
};

inline double influence(const InfluenceEvaluator& ev, double y, int a) { return ev(y, a); }

}  // namespace lagseq
