#pragma once

// Kaplan-Meier estimate of the censoring distribution K_t(u) = pr{C(t) >= u}
// and the censoring-martingale increments built on it.
//
// A censoring event is a subject with delta = 0 at time U. Subjects
// ascertained (delta = 1) at the same time stay in that time's risk set.
// Hazard increments are d_j / n_j, which makes the increments of the
// fitted subjects sum to zero at every jump.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "trial_data.hpp"

namespace lagseq {

// Which subjects a curve was fit on: arm 0, arm 1 or both.
enum class ArmSet { control = 0, treated = 1, pooled = 2 };

inline bool in_set(ArmSet a, int arm) { return a == ArmSet::pooled || static_cast<int>(a) == arm; }

struct CensoringCurve {
  ArmSet arm = ArmSet::pooled;
  double t = 0.0;
  std::vector<double> jump_times;
  std::vector<double> survivor;  // K at and after each jump
  std::vector<double> dlambda;   // d_j / n_j
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  std::size_t jumps() const { return jump_times.size(); }

  // Number of jumps at times strictly below u.
  std::size_t count_below(double u) const {
    return static_cast<std::size_t>(std::lower_bound(jump_times.begin(), jump_times.end(), u) -
                                    jump_times.begin());
  }
  // Number of jumps at times <= u.
  std::size_t count_upto(double u) const {
    return static_cast<std::size_t>(std::upper_bound(jump_times.begin(), jump_times.end(), u) -
                                    jump_times.begin());
  }

  // pr(C >= u): left limit of the product-limit survivor at u.
  double eval_geq(double u) const {
    auto k = count_below(u);
    return k == 0 ? 1.0 : survivor[k - 1];
  }
  // Right-continuous K(u).
  double eval(double u) const {
    auto k = count_upto(u);
    return k == 0 ? 1.0 : survivor[k - 1];
  }
  // log K(u_j-) - log K(u_j); infinite when the survivor drops to zero.
  double log_hazard_increment(std::size_t j) const {
    return -std::log1p(-static_cast<double>(events[j]) / static_cast<double>(at_risk[j]));
  }
};

inline CensoringCurve fit_censoring_km(const InterimSnapshot& snap, ArmSet arm) {
  std::vector<std::pair<double, bool>> obs;  // (U, censored)
  obs.reserve(snap.size());
  for (const auto& s : snap.subjects)
    if (in_set(arm, s.arm())) obs.emplace_back(s.U(), !s.delta());
  if (obs.empty()) throw ValidationError("censoring fit: no subjects in the requested arm");
  std::sort(obs.begin(), obs.end());

  CensoringCurve c;
  c.arm = arm;
  c.t = snap.t;
  double K = 1.0;
  std::size_t n = obs.size();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i, d = 0;
    while (j < n && obs[j].first == obs[i].first) d += obs[j++].second ? 1 : 0;
    if (d > 0) {
      const std::size_t risk = n - i;
      const double h = static_cast<double>(d) / static_cast<double>(risk);
      K *= 1.0 - h;
      c.jump_times.push_back(obs[i].first);
      c.survivor.push_back(K);
      c.dlambda.push_back(h);
      c.at_risk.push_back(risk);
      c.events.push_back(d);
    }
    i = j;
  }
  return c;
}

// Both arm-specific curves, indexed by arm.
struct ArmCurves {
  CensoringCurve by_arm[2];
  const CensoringCurve& operator[](int a) const { return by_arm[a]; }
};

inline ArmCurves fit_arm_curves(const InterimSnapshot& snap) {
  return {{fit_censoring_km(snap, ArmSet::control), fit_censoring_km(snap, ArmSet::treated)}};
}

// dM_i(u_j) for one subject at jump j: own censoring indicator minus the
// hazard increment while at risk. Zero once u_j > U_i.
inline double martingale_increment(const CensoringCurve& c, std::size_t j, const ObservedSubject& s) {
  const double u = c.jump_times[j];
  if (u > s.U()) return 0.0;
  const double dN = (!s.delta() && u == s.U()) ? 1.0 : 0.0;
  return dN - c.dlambda[j];
}

struct MartingaleJump {
  double u;
  double dM;
};

// Per-subject increments at the curve's jump times up to U_i. Subjects
// outside the curve's arm get an empty list.
inline std::vector<std::vector<MartingaleJump>> martingale_jumps(const CensoringCurve& c,
                                                                 const InterimSnapshot& snap) {
  if (c.t != snap.t) throw ValidationError("martingale_jumps: curve was fit at a different time");
  std::vector<std::vector<MartingaleJump>> out(snap.size());
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const auto& s = snap.subjects[i];
    if (!in_set(c.arm, s.arm())) continue;
    const std::size_t k = c.count_upto(s.U());
    out[i].reserve(k);
    for (std::size_t j = 0; j < k; ++j) out[i].push_back({c.jump_times[j], martingale_increment(c, j, s)});
  }
  return out;
}

inline void write_curve_csv(std::ostream& os, const CensoringCurve& c) {
  os << "u,K,dLambda,at_risk,events\n";
  os.precision(6);
  for (std::size_t j = 0; j < c.jumps(); ++j)
    os << c.jump_times[j] << ',' << c.survivor[j] << ',' << c.dlambda[j] << ',' << c.at_risk[j]
       << ',' << c.events[j] << '\n';
}

}  // namespace lagseq

namespace lagseq {

// Inverse-probability-of-censoring weights Delta_i / K(U_i, A_i) from the
// arm-specific curves.
inline std::vector<double> ipcw_weights(const InterimSnapshot& snap, const ArmCurves& curves) {
  std::vector<double> w(snap.size(), 0.0);
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const auto& s = snap.subjects[i];
    if (!s.delta()) continue;
    const double K = curves[s.arm()].eval_geq(s.U());
    if (!(K > 0.0)) throw NumericalError("censoring survivor is zero at an ascertained subject");
    w[i] = 1.0 / K;
  }
  return w;
}

}  // namespace lagseq
