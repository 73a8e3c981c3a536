#pragma once

// Monte Carlo harness: scenario generators, the per-replication analysis
// and monitoring loop, and aggregation of operating characteristics.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "basis.hpp"
#include "boundaries.hpp"
#include "design.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "models.hpp"
#include "rng.hpp"
#include "trial_data.hpp"

namespace lagseq {

enum class Hypothesis { null, alternative };

inline const char* to_string(Hypothesis h) { return h == Hypothesis::null ? "null" : "alt"; }

inline Hypothesis parse_hypothesis(const std::string& s) {
  if (s == "null" || s == "h0") return Hypothesis::null;
  if (s == "alt" || s == "alternative" || s == "h1") return Hypothesis::alternative;
  throw ValidationError("hypothesis must be null or alt, got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Generators

namespace scen {

inline constexpr double cutpoints[] = {0.0, 0.12, 0.35, 0.52, 0.62, 0.67, 1.0};
inline constexpr double log_or_alt = 0.4054651081081644;  // log 1.5

// Gamma given A: identity for A = 0; for A = 1 the odds of Upsilon are
// divided by e^beta, so logit pr(Gamma <= u | A = 1) = logit(u) + beta.
inline double gamma_transform(double upsilon, int a, double beta) {
  if (a == 0) return upsilon;
  const double r = std::exp(-beta);
  return upsilon * r / (1.0 - upsilon + upsilon * r);
}

inline int ordinal_level(double gamma) {
  for (int j = 1; j <= 6; ++j)
    if (gamma < cutpoints[j]) return j;
  return 6;
}

// pr(Y = 1 | A = 1) for the binary outcome under the alternative.
inline double binary_alt_risk() { return 1.0 - expit(logit(0.67) + log_or_alt); }

inline std::string subject_id(std::size_t i) {
  std::string s = std::to_string(i + 1);
  return "s" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace scen

struct Scenario12Params {
  std::size_t n = 602;
  double E_max = 240.0;
  double T_F = 90.0;
  double beta = 0.0;  // log odds ratio used to generate Gamma
  bool binary = false;
};

// Ordinal (scenario 1) or binary (scenario 2) outcome with hospital-stay
// covariates L1(u) = I(W < u), L2(u) = (T_F - W) L1(u).
inline std::vector<SubjectRecord> gen_scenario12(Rng& rng, const Scenario12Params& p) {
  std::vector<SubjectRecord> out;
  out.reserve(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    SubjectRecord r;
    r.id = scen::subject_id(i);
    r.entry = rng.uniform(0.0, p.E_max);
    r.arm = rng.bernoulli(0.5) ? 1 : 0;
    const double ups = rng.uniform();
    const double z = rng.normal();
    const double death = rng.uniform();
    const double gam = scen::gamma_transform(ups, r.arm, p.beta);
    r.x = {1.5 * (ups - 0.5) + z};
    r.path = CovariatePath(2);
    if (gam >= 0.67) {
      r.lag = r.arm == 0 ? 30.0 * death : 20.0 + 30.0 * death;
    } else {
      r.lag = p.T_F;
    }
    if (gam < 0.52) {
      const double H = p.T_F * gam / 0.52;
      const double v[2] = {1.0, p.T_F - H};
      r.path.append(H, v);
    }
    r.y = p.binary ? Outcome::binary(gam >= 0.67 ? 1 : 0) : Outcome::ordinal(scen::ordinal_level(gam));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<SubjectRecord> gen_scenario1(Rng& rng, Hypothesis h) {
  return gen_scenario12(rng, {602, 240.0, 90.0, h == Hypothesis::null ? 0.0 : scen::log_or_alt, false});
}

inline std::vector<SubjectRecord> gen_scenario2(Rng& rng, Hypothesis h) {
  return gen_scenario12(rng, {900, 240.0, 90.0, h == Hypothesis::null ? 0.0 : scen::log_or_alt, true});
}

struct Scenario3Params {
  std::size_t n = 300;
  double E_max = 156.0;
  double T_F = 52.0;
  double xi0 = -0.3, xi1 = -0.3;
};

// Continuous outcome from a random-intercept-and-slope model measured at
// weeks 0, 4, 12, 24, 52. X = Z at week 0, Y = Z at week 52, L(u) = last
// observed Z.
inline std::vector<SubjectRecord> gen_scenario3(Rng& rng, const Scenario3Params& p) {
  static constexpr double visits[] = {0.0, 4.0, 12.0, 24.0, 52.0};
  static constexpr double intercepts[] = {65.0, 60.0, 55.0, 49.0};
  static constexpr double cum_prob[] = {0.4, 0.7, 0.9, 1.0};
  const double l11 = std::sqrt(80.0), l21 = -0.5 / l11, l22 = std::sqrt(0.08 - l21 * l21);
  const double sigma = 4.5;
  std::vector<SubjectRecord> out;
  out.reserve(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    SubjectRecord r;
    r.id = scen::subject_id(i);
    r.entry = rng.uniform(0.0, p.E_max);
    r.arm = rng.bernoulli(0.5) ? 1 : 0;
    const double u = rng.uniform();
    int cat = 0;
    while (cat < 3 && u >= cum_prob[cat]) ++cat;
    const double z0 = rng.normal(), z1 = rng.normal();
    const double b0 = l11 * z0, b1 = l21 * z0 + l22 * z1;
    const double slope = (r.arm == 0 ? p.xi0 : p.xi1) + b1;
    r.path = CovariatePath(1);
    double z = 0.0;
    for (double s : visits) {
      z = intercepts[cat] + b0 + slope * s + sigma * rng.normal();
      if (s <= p.T_F) r.path.append(s, std::span<const double>(&z, 1));
    }
    r.x = {r.path.row(0)[0]};
    r.lag = p.T_F;
    r.y = Outcome::continuous(z);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<SubjectRecord> gen_scenario3(Rng& rng, Hypothesis h) {
  Scenario3Params p;
  if (h == Hypothesis::alternative) p.xi1 = -0.18;
  return gen_scenario3(rng, p);
}

// Intercept mixture variance + b0 + 2 s cov + s^2 var(b1) + sigma^2 at s = 52.
inline double scenario3_outcome_variance() {
  const double pr[] = {0.4, 0.3, 0.2, 0.1}, mu[] = {65, 60, 55, 49};
  double m = 0, m2 = 0;
  for (int k = 0; k < 4; ++k) {
    m += pr[k] * mu[k];
    m2 += pr[k] * mu[k] * mu[k];
  }
  return (m2 - m * m) + 80.0 + 2.0 * 52.0 * (-0.5) + 52.0 * 52.0 * 0.08 + 4.5 * 4.5;
}

// ---------------------------------------------------------------------------
// Configuration

struct ScenarioConfig {
  int scenario = 1;
  Hypothesis hypothesis = Hypothesis::null;
  std::size_t n_max = 602;
  double E_max = 240.0;
  double T_F = 90.0;
  std::vector<double> analysis_times{150, 195, 240, 285, 330};
  std::size_t reps = 2000;
  std::uint64_t seed = 42;
  std::vector<EstimatorKind> estimators{std::begin(all_estimators), std::end(all_estimators)};
  std::vector<SpendingKind> spendings{SpendingKind::obrien_fleming, SpendingKind::pocock};
  double alpha = 0.025;
  std::size_t grid_points = 401;

  static ScenarioConfig standard(int scenario, Hypothesis h) {
    ScenarioConfig c;
    c.scenario = scenario;
    c.hypothesis = h;
    switch (scenario) {
      case 1: break;
      case 2: c.n_max = 900; break;
      case 3:
        c.n_max = 300;
        c.E_max = 156.0;
        c.T_F = 52.0;
        c.analysis_times = {104, 130, 156, 182, 208};
        break;
      default: throw ValidationError("scenario must be 1, 2 or 3");
    }
    return c;
  }

  ModelSpec model() const {
    switch (scenario) {
      case 1: return ModelSpec::proportional_odds(6);
      case 2: return ModelSpec::log_relative_risk();
      default: return ModelSpec::mean_difference();
    }
  }

  // The parameter each estimator targets.
  double true_beta() const {
    if (hypothesis == Hypothesis::null) return 0.0;
    switch (scenario) {
      case 1: return scen::log_or_alt;
      case 2: return std::log(scen::binary_alt_risk() / 0.33);
      default: return 0.12 * 52.0;
    }
  }

  // Benefit is a lower death risk in scenario 2, higher beta otherwise.
  Direction direction() const { return scenario == 2 ? Direction::lower : Direction::upper; }

  std::vector<SubjectRecord> generate(std::uint64_t rep) const {
    Rng rng(seed, rep, 1);
    switch (scenario) {
      case 1:
      case 2: {
        Scenario12Params p{n_max, E_max, T_F, hypothesis == Hypothesis::null ? 0.0 : scen::log_or_alt, scenario == 2};
        return gen_scenario12(rng, p);
      }
      default: {
        Scenario3Params p{n_max, E_max, T_F, -0.3, hypothesis == Hypothesis::null ? -0.3 : -0.18};
        return gen_scenario3(rng, p);
      }
    }
  }

  // The trial design a single generated data set is analysed under.
  TrialDesign design() const {
    TrialDesign d;
    d.n_max = n_max;
    d.T_F = T_F;
    d.E_max = E_max;
    d.alpha = alpha;
    d.sidedness = Sidedness::one;
    d.direction = direction();
    d.spending = spendings.empty() ? SpendingKind::obrien_fleming : spendings.front();
    d.analysis_times = analysis_times;
    d.model = model();
    return d;
  }

  void validate() const {
    if (reps < 2) throw ValidationError("simulation needs at least 2 replications");
    if (analysis_times.empty()) throw ValidationError("no analysis times");
    if (analysis_times.front() < T_F) throw ValidationError("first analysis time must be >= T_F");
    if (analysis_times.back() < E_max + T_F) throw ValidationError("final analysis must be at or after E_max + T_F");
    if (estimators.empty()) throw ValidationError("no estimators selected");
  }
};

// ---------------------------------------------------------------------------
// One replication

struct LookResult {
  double beta = 0.0, se = 0.0, wald = 0.0, p_info = 0.0;
  std::size_t n_t = 0, n_A = 0;
};

struct StopRecord {
  bool rejected = false;
  std::size_t look = 0;     // look at which the trial stopped (last look if never)
  double sample_size = 0;   // enrolled at stopping
  double stop_time = 0;
  std::vector<double> fractions;   // as passed to the boundary engine
  std::vector<double> boundaries;
};

struct EstimatorTrace {
  EstimatorKind kind = EstimatorKind::ipwcc;
  bool ok = true;
  std::string error;
  std::vector<LookResult> looks;
  std::vector<StopRecord> stops;  // one per spending function
};

struct ReplicationResult {
  std::size_t rep = 0;
  std::vector<EstimatorTrace> traces;  // in config.estimators order
};

// Information fraction handed to the boundary engine at look j.
inline double monitoring_fraction(const LookResult& r, std::size_t j, std::size_t K, double prev) {
  if (j + 1 == K) return 1.0;
  const double p = std::isfinite(r.p_info) && r.p_info > 0.0 ? r.p_info : prev;
  return monotone_fraction(prev, p, K - 1 - j);
}

inline ReplicationResult run_replication(const ScenarioConfig& cfg, std::size_t rep) {
  const auto records = cfg.generate(rep);
  const std::size_t K = cfg.analysis_times.size();
  ReplicationResult out;
  out.rep = rep;
  out.traces.resize(cfg.estimators.size());
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    out.traces[e].kind = cfg.estimators[e];
    out.traces[e].looks.resize(K);
  }
  AnalysisConfig acfg;
  acfg.model = cfg.model();
  acfg.n_max = static_cast<double>(cfg.n_max);
  for (std::size_t j = 0; j < K; ++j) {
    const auto snap = snapshot_at(records, cfg.analysis_times[j], cfg.T_F);
    if (j == 0) acfg.basis = BasisSpec::linear_default(snap.p_x(), snap.q());
    InterimAnalyzer an(snap, acfg);
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      auto& tr = out.traces[e];
      if (!tr.ok) continue;
      try {
        const auto r = an.estimate(tr.kind);
        tr.looks[j] = {r.beta, r.se, r.wald, r.p_info, r.n_t, r.n_A_t};
      } catch (const std::exception& ex) {
        tr.ok = false;
        std::ostringstream msg;
        msg << "t=" << cfg.analysis_times[j] << ": " << ex.what();
        tr.error = msg.str();
      }
    }
  }
  // Sequential monitoring with boundaries from this replication's fractions.
  for (auto& tr : out.traces) {
    if (!tr.ok) continue;
    for (SpendingKind sk : cfg.spendings) {
      StopRecord s;
      BoundaryEngine eng(cfg.alpha, Sidedness::one, sk, cfg.grid_points);
      double prev = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        const double f = monitoring_fraction(tr.looks[j], j, K, prev);
        prev = f;
        const double b = eng.next(f);
        s.fractions.push_back(f);
        s.boundaries.push_back(b);
        s.look = j;
        if (crosses(tr.looks[j].wald, b, Sidedness::one, cfg.direction())) {
          s.rejected = true;
          break;
        }
      }
      s.sample_size = static_cast<double>(tr.looks[s.look].n_t);
      s.stop_time = cfg.analysis_times[s.look];
      tr.stops.push_back(std::move(s));
    }
  }
  return out;
}

// Runs replications 0..reps-1 on `jobs` threads. Output order is by
// replication index, independent of scheduling.
inline std::vector<ReplicationResult> run_replications(const ScenarioConfig& cfg, std::size_t jobs,
                                                       const std::function<void(std::size_t)>& progress = {}) {
  cfg.validate();
  std::vector<ReplicationResult> out(cfg.reps);
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= cfg.reps) return;
      try {
        out[r] = run_replication(cfg, r);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!first_error) first_error = std::current_exception();
        next = cfg.reps;
        return;
      }
      const std::size_t d = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lk(mu);
        progress(d);
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cfg.reps));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct TimeStats {
  double t = 0;
  double mean = 0, sd = 0, mean_se = 0, mse = 0, mse_ratio = 0;
  double mean_p = 0, median_p = 0, mean_n = 0, mean_nA = 0;
};

struct StopStats {
  SpendingKind spending = SpendingKind::obrien_fleming;
  double p_reject = 0, p_reject_se = 0;
  double e_ss = 0, sd_ss = 0, e_stop = 0, sd_stop = 0;
  std::vector<double> reject_at_look;
};

struct EstimatorStats {
  EstimatorKind kind = EstimatorKind::ipwcc;
  std::size_t n_ok = 0, n_failed = 0;
  std::vector<std::string> failures;  // first few messages
  std::vector<TimeStats> times;
  Eigen::MatrixXd cov;
  double ii_diagnostic = 0;
  std::vector<StopStats> stopping;
};

struct AggregateStats {
  std::size_t reps = 0;
  double true_beta = 0;
  std::size_t failures = 0;
  double failure_rate = 0;
  std::vector<EstimatorStats> estimators;

  const EstimatorStats& at(EstimatorKind k) const {
    for (const auto& e : estimators)
      if (e.kind == k) return e;
    throw ValidationError(std::string("estimator not in results: ") + to_string(k));
  }
};

// max over s < t of |cov(s, t) - var(t)| / var(t).
inline double independent_increments_diagnostic(const Eigen::MatrixXd& cov) {
  double worst = 0.0;
  for (Eigen::Index t = 1; t < cov.rows(); ++t)
    for (Eigen::Index s = 0; s < t; ++s)
      worst = std::max(worst, std::fabs(cov(s, t) - cov(t, t)) / cov(t, t));
  return worst;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

inline AggregateStats aggregate(const ScenarioConfig& cfg, const std::vector<ReplicationResult>& reps) {
  if (reps.size() < 2) throw ValidationError("aggregate: at least 2 replications are required");
  const std::size_t K = cfg.analysis_times.size();
  AggregateStats agg;
  agg.reps = reps.size();
  agg.true_beta = cfg.true_beta();
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    EstimatorStats st;
    st.kind = cfg.estimators[e];
    std::vector<const EstimatorTrace*> ok;
    for (const auto& r : reps) {
      const auto& tr = r.traces[e];
      if (tr.ok) {
        ok.push_back(&tr);
      } else {
        ++st.n_failed;
        if (st.failures.size() < 5) st.failures.push_back("rep " + std::to_string(r.rep) + " " + tr.error);
      }
    }
    st.n_ok = ok.size();
    agg.failures += st.n_failed;
    if (st.n_ok < 2) throw NumericalError(std::string("too few successful replications for ") + to_string(st.kind));
    const double R = static_cast<double>(st.n_ok);
    Eigen::MatrixXd B(ok.size(), K);
    for (std::size_t i = 0; i < ok.size(); ++i)
      for (std::size_t j = 0; j < K; ++j) B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ok[i]->looks[j].beta;
    const Eigen::RowVectorXd mean = B.colwise().mean();
    const Eigen::MatrixXd C = B.rowwise() - mean;
    st.cov = (C.transpose() * C) / (R - 1.0);
    st.ii_diagnostic = independent_increments_diagnostic(st.cov);
    for (std::size_t j = 0; j < K; ++j) {
      TimeStats ts;
      ts.t = cfg.analysis_times[j];
      ts.mean = mean[static_cast<Eigen::Index>(j)];
      ts.sd = std::sqrt(st.cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
      std::vector<double> ps;
      for (const auto* tr : ok) {
        const auto& lk = tr->looks[j];
        ts.mean_se += lk.se;
        ts.mse += (lk.beta - agg.true_beta) * (lk.beta - agg.true_beta);
        ts.mean_p += lk.p_info;
        ts.mean_n += static_cast<double>(lk.n_t);
        ts.mean_nA += static_cast<double>(lk.n_A);
        ps.push_back(lk.p_info);
      }
      ts.mean_se /= R;
      ts.mse /= R;
      ts.mean_p /= R;
      ts.mean_n /= R;
      ts.mean_nA /= R;
      ts.median_p = median(ps);
      st.times.push_back(ts);
    }
    for (std::size_t s = 0; s < cfg.spendings.size(); ++s) {
      StopStats ss;
      ss.spending = cfg.spendings[s];
      ss.reject_at_look.assign(K, 0.0);
      double ss2 = 0, st2 = 0;
      for (const auto* tr : ok) {
        const auto& rec = tr->stops[s];
        if (rec.rejected) {
          ss.p_reject += 1.0;
          ss.reject_at_look[rec.look] += 1.0;
        }
        ss.e_ss += rec.sample_size;
        ss2 += rec.sample_size * rec.sample_size;
        ss.e_stop += rec.stop_time;
        st2 += rec.stop_time * rec.stop_time;
      }
      ss.p_reject /= R;
      for (double& v : ss.reject_at_look) v /= R;
      ss.p_reject_se = std::sqrt(ss.p_reject * (1.0 - ss.p_reject) / R);
      ss.e_ss /= R;
      ss.e_stop /= R;
      ss.sd_ss = std::sqrt(std::max(0.0, (ss2 - R * ss.e_ss * ss.e_ss) / (R - 1.0)));
      ss.sd_stop = std::sqrt(std::max(0.0, (st2 - R * ss.e_stop * ss.e_stop) / (R - 1.0)));
      st.stopping.push_back(ss);
    }
    agg.estimators.push_back(std::move(st));
  }
  // MSE ratio relative to the full-follow-up comparator.
  const EstimatorStats* tf = nullptr;
  for (const auto& e : agg.estimators)
    if (e.kind == EstimatorKind::tf_only) tf = &e;
  for (auto& e : agg.estimators)
    for (std::size_t j = 0; j < K; ++j)
      e.times[j].mse_ratio = tf ? tf->times[j].mse / e.times[j].mse : std::numeric_limits<double>::quiet_NaN();
  const double cells = static_cast<double>(reps.size() * cfg.estimators.size());
  agg.failure_rate = static_cast<double>(agg.failures) / cells;
  return agg;
}

}  // namespace lagseq
