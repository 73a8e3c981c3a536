#pragma once

#include <lagseq/lagseq.hpp>

#include <string>
#include <vector>

namespace lagseq::testing {

inline SubjectRecord record(const std::string& id, double entry, int arm, double lag, Outcome y,
                            std::vector<double> x = {}) {
  SubjectRecord r;
  r.id = id;
  r.entry = entry;
  r.arm = arm;
  r.lag = lag;
  r.y = y;
  r.x = std::move(x);
  return r;
}

// Continuous-outcome records with one baseline covariate correlated with Y,
// staggered entry on [0, E_max] and lags spread over (0, T_F].
inline std::vector<SubjectRecord> continuous_trial(Rng& rng, std::size_t n, double E_max, double T_F,
                                                   double effect = 0.5) {
  std::vector<SubjectRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    const double y = 1.0 + effect * a + 0.8 * x + rng.normal();
    const double lag = rng.bernoulli(0.5) ? T_F : rng.uniform(0.2 * T_F, T_F);
    auto r = record("c" + std::to_string(i), rng.uniform(0.0, E_max), a, lag, Outcome::continuous(y), {x});
    r.path = CovariatePath(1);
    const double u = rng.uniform(0.0, lag);
    const double l = y + rng.normal();
    r.path.append(u, std::span<const double>(&l, 1));
    out.push_back(std::move(r));
  }
  return out;
}

// Binary outcome: events occur before T_F, non-events are followed to T_F.
inline std::vector<SubjectRecord> binary_trial(Rng& rng, std::size_t n, double E_max, double T_F) {
  std::vector<SubjectRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    const double x = rng.normal();
    const bool event = rng.uniform() < (a ? 0.25 : 0.35);
    const double lag = event ? rng.uniform(0.05 * T_F, 0.6 * T_F) : T_F;
    out.push_back(record("b" + std::to_string(i), rng.uniform(0.0, E_max), a, lag, Outcome::binary(event), {x}));
  }
  return out;
}

inline AnalysisConfig config_for(const ModelSpec& spec, const InterimSnapshot& snap, double n_max) {
  AnalysisConfig c;
  c.model = spec;
  c.basis = BasisSpec::linear_default(snap.p_x(), snap.q());
  c.n_max = n_max;
  return c;
}

}  // namespace lagseq::testing
