#include <gtest/gtest.h>

#include "support.hpp"

#include <algorithm>
#include <cmath>

using namespace lagseq;
using lagseq::testing::record;

namespace {

// Snapshot whose subjects have the given (U, Delta) pairs: entry at t - C.
InterimSnapshot from_pairs(const std::vector<std::pair<double, int>>& ud, std::vector<int> arms = {}) {
  const double t = 200, T_F = 90;
  std::vector<SubjectRecord> recs;
  for (std::size_t i = 0; i < ud.size(); ++i) {
    const auto [u, d] = ud[i];
    const int a = arms.empty() ? 0 : arms[i];
    // Delta = 1: T = u, C = u + 5 (or more); Delta = 0: C = u, T = T_F.
    const double C = d ? std::min(u + 5.0, T_F + 5.0) : u;
    const double T = d ? u : T_F;
    recs.push_back(record("s" + std::to_string(i), t - C, a, T, Outcome::continuous(1.0)));
  }
  return snapshot_at(recs, t, T_F);
}

// Product-limit survivor of C at u (right-continuous), by exhaustive
// risk-set bookkeeping over every distinct time.
double brute_km(const InterimSnapshot& s, double u) {
  std::vector<double> times;
  for (const auto& o : s.subjects) times.push_back(o.U());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  double K = 1;
  for (double v : times) {
    if (v > u) break;
    int d = 0, r = 0;
    for (const auto& o : s.subjects) {
      if (o.U() >= v) ++r;
      if (o.U() == v && !o.delta()) ++d;
    }
    K *= 1.0 - static_cast<double>(d) / r;
  }
  return K;
}

}  // namespace

TEST(Censoring, HandExample) {
  const auto s = from_pairs({{10, 0}, {20, 1}, {30, 0}, {40, 1}});
  const auto c = fit_censoring_km(s, ArmSet::pooled);
  ASSERT_EQ(c.jumps(), 2u);
  EXPECT_DOUBLE_EQ(c.jump_times[0], 10);
  EXPECT_DOUBLE_EQ(c.jump_times[1], 30);
  EXPECT_DOUBLE_EQ(c.eval(10), 0.75);
  EXPECT_DOUBLE_EQ(c.eval(30), 0.375);
  EXPECT_DOUBLE_EQ(c.eval_geq(10), 1.0);
  EXPECT_DOUBLE_EQ(c.eval_geq(10.5), 0.75);
  EXPECT_DOUBLE_EQ(c.eval_geq(0), 1.0);
  EXPECT_DOUBLE_EQ(c.eval_geq(30), 0.75);
  EXPECT_DOUBLE_EQ(c.eval_geq(31), 0.375);
  EXPECT_NEAR(c.log_hazard_increment(0), -std::log(0.75), 1e-15);
}

TEST(Censoring, NoCensoringMeansUnitSurvivor) {
  Rng rng(1, 0, 0);
  const auto recs = gen_scenario1(rng, Hypothesis::null);
  const auto s = snapshot_at(recs, 330, 90);
  const auto c = fit_censoring_km(s, ArmSet::pooled);
  EXPECT_EQ(c.jumps(), 0u);
  for (double u = 0; u <= 90; u += 7.5) EXPECT_EQ(c.eval_geq(u), 1.0);
}

TEST(Censoring, ArmWithoutCensoringHasUnitCurve) {
  const auto s = from_pairs({{10, 0}, {20, 1}, {30, 1}, {40, 1}}, {0, 1, 1, 1});
  const auto curves = fit_arm_curves(s);
  EXPECT_EQ(curves[1].jumps(), 0u);
  EXPECT_EQ(curves[1].eval_geq(50), 1.0);
  EXPECT_EQ(curves[0].jumps(), 1u);
}

TEST(Censoring, EmptySubsetRejected) {
  const auto s = from_pairs({{10, 0}, {20, 1}}, {0, 0});
  EXPECT_THROW(fit_censoring_km(s, ArmSet::treated), ValidationError);
}

TEST(Censoring, TiesKeepAscertainedInRiskSet) {
  // At u = 10 one censoring and one ascertainment: hazard 1/4, not 1/3.
  const auto s = from_pairs({{10, 0}, {10, 1}, {30, 0}, {40, 1}});
  const auto c = fit_censoring_km(s, ArmSet::pooled);
  EXPECT_EQ(c.at_risk[0], 4u);
  EXPECT_DOUBLE_EQ(c.eval(10), 0.75);
}

TEST(Censoring, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed, 0, 77);
    const int n = 1 + static_cast<int>(rng.uniform() * 10);
    std::vector<std::pair<double, int>> ud;
    for (int i = 0; i < n; ++i)
      ud.emplace_back(std::max(8.0, std::round(rng.uniform(1, 80) / 8) * 8), rng.bernoulli(0.5) ? 1 : 0);  // coarse: forces ties
    const auto s = from_pairs(ud);
    const auto c = fit_censoring_km(s, ArmSet::pooled);
    for (double u = 0; u <= 90; u += 0.5) ASSERT_NEAR(c.eval(u), brute_km(s, u), 1e-12) << seed << " " << u;
    for (std::size_t j = 1; j < c.jumps(); ++j) ASSERT_LE(c.survivor[j], c.survivor[j - 1]);
  }
}

TEST(Censoring, MartingaleIncrementsSumToZeroAtEveryJump) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed, 1, 0);
    const auto recs = gen_scenario1(rng, Hypothesis::alternative);
    const auto s = snapshot_at(recs, rng.uniform(100, 300), 90);
    for (ArmSet a : {ArmSet::control, ArmSet::treated, ArmSet::pooled}) {
      const auto c = fit_censoring_km(s, a);
      const auto jumps = martingale_jumps(c, s);
      std::vector<double> sum(c.jumps(), 0.0);
      for (const auto& list : jumps)
        for (std::size_t j = 0; j < list.size(); ++j) sum[j] += list[j].dM;
      for (double v : sum) ASSERT_NEAR(v, 0.0, 1e-10);
    }
  }
}

TEST(Censoring, MartingaleIncrementDefinitions) {
  const auto s = from_pairs({{5, 1}, {10, 0}, {20, 1}, {30, 0}, {40, 1}});
  const auto c = fit_censoring_km(s, ArmSet::pooled);
  const auto jumps = martingale_jumps(c, s);
  EXPECT_TRUE(jumps[0].empty());  // ascertained before the first jump
  ASSERT_EQ(jumps[1].size(), 1u);
  EXPECT_DOUBLE_EQ(jumps[1][0].dM, 1.0 - c.dlambda[0]);
  ASSERT_EQ(jumps[3].size(), 2u);
  EXPECT_DOUBLE_EQ(jumps[3][0].dM, -c.dlambda[0]);
  EXPECT_DOUBLE_EQ(jumps[3][1].dM, 1.0 - c.dlambda[1]);
  EXPECT_DOUBLE_EQ(c.dlambda[0], 1.0 / 4);
}

TEST(Censoring, CurveSnapshotMismatchRejected) {
  Rng rng(2, 0, 0);
  const auto recs = gen_scenario1(rng, Hypothesis::null);
  const auto a = snapshot_at(recs, 150, 90), b = snapshot_at(recs, 200, 90);
  const auto c = fit_censoring_km(a, ArmSet::pooled);
  EXPECT_THROW(martingale_jumps(c, b), ValidationError);
}

TEST(Censoring, WeightsPositiveForAscertained) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed, 2, 0);
    const auto recs = gen_scenario2(rng, Hypothesis::null);
    const auto s = snapshot_at(recs, 150, 90);
    const auto w = ipcw_weights(s, fit_arm_curves(s));
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.subjects[i].delta()) ASSERT_GT(w[i], 0.0);
      else ASSERT_EQ(w[i], 0.0);
      total += w[i];
    }
    EXPECT_NEAR(total / static_cast<double>(s.size()), 1.0, 0.1);
  }
}

TEST(Censoring, CurveCsvDump) {
  const auto s = from_pairs({{10, 0}, {20, 1}, {30, 0}, {40, 1}});
  std::ostringstream os;
  write_curve_csv(os, fit_censoring_km(s, ArmSet::pooled));
  EXPECT_EQ(os.str(), "u,K,dLambda,at_risk,events\n10,0.75,0.25,4,1\n30,0.375,0.5,2,1\n");
}
