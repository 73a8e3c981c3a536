#include <gtest/gtest.h>

#include "support.hpp"

#include <cmath>
#include <functional>

using namespace lagseq;

namespace {

WeightedSample sample_of(const std::vector<double>& y, const std::vector<int>& a, double w = 1.0) {
  WeightedSample s;
  s.y = y;
  s.a = a;
  s.w.assign(y.size(), w);
  return s;
}

WeightedSample random_sample(Rng& rng, const ModelSpec& spec, std::size_t n) {
  WeightedSample s;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    double y = 0;
    switch (spec.kind) {
      case ModelKind::mean_difference: y = 2.0 + 0.7 * a + rng.normal(); break;
      case ModelKind::log_relative_risk: y = rng.uniform() < (a ? 0.25 : 0.4) ? 1 : 0; break;
      case ModelKind::proportional_odds: y = 1 + static_cast<int>(rng.uniform() * spec.levels); break;
    }
    s.y.push_back(y);
    s.a.push_back(a);
    s.w.push_back(rng.uniform(0.5, 3.0));
  }
  return s;
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi), fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Models, EvaluateMExamples) {
  const Eigen::Vector2d zero(0, 0);
  const auto m1 = evaluate_M(ModelSpec::mean_difference(), zero, 2.0, 1);
  EXPECT_DOUBLE_EQ(m1[0], 2);
  EXPECT_DOUBLE_EQ(m1[1], 2);
  const auto m2 = evaluate_M(ModelSpec::log_relative_risk(), zero, 1.0, 0);
  EXPECT_DOUBLE_EQ(m2[0], 0);
  EXPECT_DOUBLE_EQ(m2[1], 0);
}

TEST(Models, ProportionalOddsWorkingIndependenceForm) {
  const auto spec = ModelSpec::proportional_odds(3);
  for (int a : {0, 1})
    for (int y : {1, 2, 3}) {
      const Eigen::Vector3d theta(-0.3, 0.8, 0.4);
      // Cumulative probability vector and its finite-difference gradient D.
      auto probs = [&](const Eigen::Vector3d& th) {
        return Eigen::Vector2d(expit(th[0] + th[2] * a), expit(th[1] + th[2] * a));
      };
      Eigen::Matrix<double, 2, 3> D;
      for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d tp = theta, tm = theta;
        tp[k] += 1e-6;
        tm[k] -= 1e-6;
        D.col(k) = (probs(tp) - probs(tm)) / 2e-6;
      }
      const Eigen::Vector2d p = probs(theta);
      const Eigen::Vector2d r((y <= 1) - p[0], (y <= 2) - p[1]);
      const Eigen::Vector2d vinv(1 / (p[0] * (1 - p[0])), 1 / (p[1] * (1 - p[1])));
      const Eigen::Vector3d oracle = D.transpose() * vinv.asDiagonal() * r;
      const auto M = evaluate_M(spec, theta, y, a);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(M[k], oracle[k], 1e-8);
    }
  const auto M0 = evaluate_M(spec, Eigen::Vector3d::Zero(), 1, 0);
  EXPECT_DOUBLE_EQ(M0[0], 0.5);
  EXPECT_DOUBLE_EQ(M0[1], 0.5);
  EXPECT_THROW(spec.check_outcome(4), ValidationError);
}

TEST(Models, MeanDifferenceSolvesToDifferenceInMeans) {
  const std::vector<double> y = {1, 2, 3, 4, 6, 8, 9.5};
  const std::vector<int> a = {0, 0, 0, 1, 1, 1, 1};
  const auto fit = solve_weighted(ModelSpec::mean_difference(), sample_of(y, a));
  EXPECT_NEAR(fit.beta(), (6 + 8 + 9.5 + 4) / 4.0 - 2.0, 1e-12);
  EXPECT_NEAR(fit.theta[0], 2.0, 1e-12);
}

TEST(Models, LogRelativeRiskSolvesToLogRatio) {
  const std::vector<double> y = {1, 0, 0, 1, 1, 1, 0, 0, 0, 1};
  const std::vector<int> a = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const auto fit = solve_weighted(ModelSpec::log_relative_risk(), sample_of(y, a));
  EXPECT_NEAR(fit.beta(), std::log(0.4 / 0.6), 1e-10);
  EXPECT_LE(fit.residual, 1e-8);
}

TEST(Models, ProportionalOddsMatchesBisectionOracle) {
  const std::vector<double> y = {1, 2, 3, 1, 2, 2, 3, 3, 1, 2, 3, 3};
  const std::vector<int> a = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  const auto spec = ModelSpec::proportional_odds(3);
  const auto fit = solve_weighted(spec, sample_of(y, a));
  // For fixed beta each cutpoint solves a monotone equation; the beta
  // equation is then solved on the profile.
  auto alpha_at = [&](double beta, int j) {
    return bisect(
        [&](double al) {
          double s = 0;
          for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] <= j + 1) - expit(al + beta * a[i]);
          return s;
        },
        -20, 20);
  };
  auto score_beta = [&](double beta) {
    const double a0 = alpha_at(beta, 0), a1 = alpha_at(beta, 1);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (a[i]) s += (y[i] <= 1) - expit(a0 + beta) + (y[i] <= 2) - expit(a1 + beta);
    return s;
  };
  const double beta = bisect(score_beta, -10, 10);
  EXPECT_NEAR(fit.beta(), beta, 1e-4);
  EXPECT_NEAR(fit.theta[0], alpha_at(beta, 0), 1e-4);
  EXPECT_NEAR(fit.theta[1], alpha_at(beta, 1), 1e-4);
  EXPECT_LT(fit.theta[0], fit.theta[1]);
}

TEST(Models, SolverRootResidualAndJacobianModesAgree) {
  for (ModelSpec spec : {ModelSpec::mean_difference(), ModelSpec::log_relative_risk(), ModelSpec::proportional_odds(6)})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed, 3, static_cast<std::uint64_t>(spec.kind));
      const auto s = random_sample(rng, spec, 150);
      SolveOptions an, nu;
      nu.jacobian = JacobianMode::numeric;
      const auto fa = solve_weighted(spec, s, an);
      const auto fn = solve_weighted(spec, s, nu);
      EXPECT_LE(fa.residual, 1e-8);
      EXPECT_LE(mean_M(spec, s, fa.theta).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((fa.theta - fn.theta).norm(), 1e-6);
    }
}

TEST(Models, AnalyticJacobianMatchesFiniteDifferences) {
  for (ModelSpec spec : {ModelSpec::mean_difference(), ModelSpec::log_relative_risk(), ModelSpec::proportional_odds(4)}) {
    Rng rng(8, 0, static_cast<std::uint64_t>(spec.kind));
    const auto s = random_sample(rng, spec, 80);
    Eigen::VectorXd theta(spec.dim());
    for (int k = 0; k < spec.dim(); ++k) theta[k] = -1.0 + 0.5 * k;
    if (spec.kind == ModelKind::log_relative_risk) theta << -0.9, 0.2;
    EXPECT_LE((mean_jacobian(spec, s, theta) - numeric_jacobian(spec, s, theta)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Models, ScalingRowForBalancedMeanDifference) {
  const std::vector<double> y = {1, 2, 3, 4};
  const std::vector<int> a = {0, 1, 0, 1};
  const auto spec = ModelSpec::mean_difference();
  const auto s = sample_of(y, a);
  const auto fit = solve_weighted(spec, s);
  const auto G = compute_G(spec, s, fit.theta);
  EXPECT_NEAR(G[0], -2.0, 1e-12);
  EXPECT_NEAR(G[1], 4.0, 1e-12);
  // m = (A/pi)(Y - mu1) - ((1 - A)/(1 - pi))(Y - mu0).
  const InfluenceEvaluator ev{spec, fit.theta, G};
  EXPECT_NEAR(ev(4, 1), (4 - 3.0) / 0.5, 1e-12);
  EXPECT_NEAR(ev(1, 0), -(1 - 2.0) / 0.5, 1e-12);
}

TEST(Models, ScalingRowInvariantToWeightScale) {
  Rng rng(4, 0, 0);
  for (ModelSpec spec : {ModelSpec::log_relative_risk(), ModelSpec::proportional_odds(5)}) {
    auto s = random_sample(rng, spec, 120);
    const auto fit = solve_weighted(spec, s);
    const auto G1 = compute_G(spec, s, fit.theta);
    for (double& w : s.w) w *= 37.5;
    const auto G2 = compute_G(spec, s, fit.theta);
    EXPECT_LE((G1 - G2).cwiseAbs().maxCoeff(), 1e-12 * (1 + G1.cwiseAbs().maxCoeff()));
  }
}

TEST(Models, InfluenceHasWeightedMeanZero) {
  for (ModelSpec spec : {ModelSpec::mean_difference(), ModelSpec::log_relative_risk(), ModelSpec::proportional_odds(6)}) {
    Rng rng(6, 1, static_cast<std::uint64_t>(spec.kind));
    const auto s = random_sample(rng, spec, 200);
    const auto fit = solve_weighted(spec, s);
    const InfluenceEvaluator ev{spec, fit.theta, compute_G(spec, s, fit.theta)};
    double acc = 0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += s.w[i] * influence(ev, s.y[i], s.a[i]);
    EXPECT_LE(std::fabs(acc / s.total_weight()), 1e-8);
  }
}

TEST(Models, InfluenceVarianceIsTwoSampleVariance) {
  Rng rng(12, 0, 0);
  auto s = random_sample(rng, ModelSpec::mean_difference(), 300);
  std::fill(s.w.begin(), s.w.end(), 1.0);
  const auto spec = ModelSpec::mean_difference();
  const auto fit = solve_weighted(spec, s);
  const InfluenceEvaluator ev{spec, fit.theta, compute_G(spec, s, fit.theta)};
  double n[2] = {0, 0}, sum[2] = {0, 0}, ss[2] = {0, 0}, m2 = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    n[s.a[i]] += 1;
    sum[s.a[i]] += s.y[i];
    const double m = ev(s.y[i], s.a[i]);
    m2 += m * m;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s.y[i] - sum[s.a[i]] / n[s.a[i]];
    ss[s.a[i]] += d * d;
  }
  const double N = n[0] + n[1], pi = n[1] / N;
  const double oracle = (ss[1] / n[1]) / pi + (ss[0] / n[0]) / (1 - pi);
  EXPECT_NEAR(m2 / N, oracle, 1e-6);
  // Standard error from the influence function equals the two-sample SE.
  EXPECT_NEAR(std::sqrt(m2) / N, std::sqrt(ss[1] / n[1] / n[1] + ss[0] / n[0] / n[0]), 1e-6);
}

TEST(Models, DegenerateInputsReported) {
  const auto po = ModelSpec::proportional_odds(4);
  // Level 4 never observed.
  EXPECT_THROW(solve_weighted(po, sample_of({1, 2, 3, 1, 2, 3}, {0, 0, 0, 1, 1, 1})), NumericalError);
  // Only one arm.
  EXPECT_THROW(solve_weighted(ModelSpec::mean_difference(), sample_of({1, 2, 3}, {0, 0, 0})), NumericalError);
  // No events in an arm.
  EXPECT_THROW(solve_weighted(ModelSpec::log_relative_risk(), sample_of({1, 0, 0, 0}, {0, 0, 1, 1})), NumericalError);
  EXPECT_THROW(ModelSpec::proportional_odds(2), ValidationError);
}
