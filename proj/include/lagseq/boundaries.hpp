#pragma once

// Lan-DeMets alpha-spending boundaries for a Wald statistic with
// independent increments, and the stop/continue rule.
//
// The recursion runs on the Brownian scale S_j = Z_j sqrt(t_j), whose
// increments are independent N(0, t_j - t_{j-1}) under H0. The sub-density
// of S_j on the continuation region is kept as a piecewise-linear function
// on a fixed lattice (spacing h) plus the two region endpoints. The Gaussian
// increment kernel is integrated exactly against each linear piece, both
// for the next density and for the crossing probability, so the only
// discretisation error is the linear interpolation of the density itself.
// Each boundary is the root of crossing probability = spending increment,
// found by Newton steps safeguarded by bisection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "information.hpp"
#include "normal.hpp"

namespace lagseq {

enum class SpendingKind { obrien_fleming, pocock };

inline const char* to_string(SpendingKind k) { return k == SpendingKind::pocock ? "pocock" : "obrien_fleming"; }

inline SpendingKind parse_spending(const std::string& s) {
  if (s == "obf" || s == "obrien_fleming" || s == "of") return SpendingKind::obrien_fleming;
  if (s == "pocock" || s == "pk") return SpendingKind::pocock;
  throw ValidationError("unknown spending function '" + s + "' (expected obf or pocock)");
}

inline const char* to_string(Sidedness s) { return s == Sidedness::one ? "one" : "two"; }

inline Sidedness parse_sidedness(const std::string& s) {
  if (s == "1" || s == "one") return Sidedness::one;
  if (s == "2" || s == "two") return Sidedness::two;
  throw ValidationError("sidedness must be 1/one or 2/two, got '" + s + "'");
}

// alpha*(t). O'Brien-Fleming type: 2(1 - Phi(z_{alpha/2} / sqrt t)).
// Pocock type: alpha ln(1 + (e - 1) t).
inline double spending_value(SpendingKind kind, double alpha, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw ValidationError("spending: information fraction outside (0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("spending: alpha outside (0, 1)");
  if (kind == SpendingKind::obrien_fleming) {
    if (t == 1.0) return alpha;
    return 2.0 * normal::sf(normal::upper_quantile(alpha / 2.0) / std::sqrt(t));
  }
  return alpha * std::log1p((std::exp(1.0) - 1.0) * t);
}

struct BoundaryPlan {
  std::vector<double> fractions;
  double alpha = 0.025;
  Sidedness sided = Sidedness::one;
  SpendingKind spending = SpendingKind::obrien_fleming;
  std::vector<double> spend;       // cumulative alpha spent, both sides for two-sided plans
  std::vector<double> increments;  // alpha*(t_j) - alpha*(t_{j-1})
  std::vector<double> boundaries;  // b_j on the Z scale; +inf when nothing is spent
  std::vector<double> crossing;    // achieved crossing probability at each look
  std::size_t grid_points = 0;
};

namespace detail {

inline double int_phi(double v, double P, double p) { return v * P + p; }                      // integral of Phi
inline double int_vphi(double v, double P, double p) { return 0.5 * ((v * v - 1.0) * P + v * p); }  // of v Phi

// Piecewise-linear sub-density on [lo, hi]: endpoint values plus values at
// lattice nodes k h, k_first <= k <= k_last, strictly inside the interval.
struct SubDensity {
  double lo = 0, hi = 0, g_lo = 0, g_hi = 0;
  long k_first = 0, k_last = -1;
  std::vector<double> g;

  bool has_lattice() const { return k_last >= k_first; }
};

inline void lattice_range(double lo, double hi, double h, long& k_first, long& k_last) {
  k_first = static_cast<long>(std::floor(lo / h)) + 1;
  if (k_first * h - lo < 1e-9 * h) ++k_first;
  k_last = static_cast<long>(std::ceil(hi / h)) - 1;
  if (hi - k_last * h < 1e-9 * h) --k_last;
}

template <class F>
inline void for_each_cell(const SubDensity& d, double h, F&& f) {
  if (!d.has_lattice()) {
    f(d.lo, d.hi, d.g_lo, d.g_hi);
    return;
  }
  f(d.lo, d.k_first * h, d.g_lo, d.g.front());
  for (long k = d.k_first; k < d.k_last; ++k)
    f(k * h, (k + 1) * h, d.g[static_cast<std::size_t>(k - d.k_first)],
      d.g[static_cast<std::size_t>(k + 1 - d.k_first)]);
  f(d.k_last * h, d.hi, d.g.back(), d.g_hi);
}

// Density of S_prev + N(0, sigma^2) at s, restricted to S_prev in [lo, hi].
inline double convolve_at(const SubDensity& d, double h, double sigma, double s) {
  double sum = 0.0;
  for_each_cell(d, h, [&](double xa, double xb, double ga, double gb) {
    const double za = (xa - s) / sigma, zb = (xb - s) / sigma;
    if (zb < -9.0 || za > 9.0) return;
    const double slope = (gb - ga) / (xb - xa);
    const double gs = ga + slope * (s - xa);
    sum += gs * (normal::cdf(zb) - normal::cdf(za)) + sigma * slope * (normal::pdf(za) - normal::pdf(zb));
  });
  return sum;
}

// pr(S_prev + N(0, sigma^2) >= c, S_prev in [lo, hi]).
inline double upper_tail(const SubDensity& d, double h, double sigma, double c) {
  double sum = 0.0;
  for_each_cell(d, h, [&](double xa, double xb, double ga, double gb) {
    const double va = (xa - c) / sigma, vb = (xb - c) / sigma;
    if (vb < -9.0) return;
    const double slope = (gb - ga) / (xb - xa);
    const double Pa = normal::cdf(va), Pb = normal::cdf(vb), pa = normal::pdf(va), pb = normal::pdf(vb);
    const double base = ga - slope * sigma * va;
    sum += sigma * (base * (int_phi(vb, Pb, pb) - int_phi(va, Pa, pa)) +
                    slope * sigma * (int_vphi(vb, Pb, pb) - int_vphi(va, Pa, pa)));
  });
  return sum;
}

}  // namespace detail

// Streaming boundary computation: call next() with each realised
// information fraction in turn.
class BoundaryEngine {
 public:
  BoundaryEngine(double alpha, Sidedness sided, SpendingKind kind, std::size_t grid_points = 4001)
      : grid_(grid_points) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
    if (grid_points < 51) throw ValidationError("boundary grid needs at least 51 points");
    plan_.alpha = alpha;
    plan_.sided = sided;
    plan_.spending = kind;
    plan_.grid_points = grid_points;
  }

  const BoundaryPlan& plan() const { return plan_; }
  std::size_t looks() const { return plan_.fractions.size(); }

  // Boundary for the next look at information fraction t.
  double next(double t) {
    if (!(t > 0.0 && t <= 1.0)) throw ValidationError("information fraction outside (0, 1]");
    if (!plan_.fractions.empty() && !(t > plan_.fractions.back()))
      throw ValidationError("information fractions must be strictly increasing");
    const double spent = plan_.spend.empty() ? 0.0 : plan_.spend.back();
    // Two-sided plans spend alpha/2 on each side.
    const double s = std::max(two() * spending_value(plan_.spending, plan_.alpha / two(), t), spent);
    plan_.fractions.push_back(t);
    plan_.spend.push_back(s);
    plan_.increments.push_back(s - spent);
    try {
      advance();
    } catch (const NumericalError&) {
      if (refined_) throw;
      refined_ = true;
      rebuild(2 * grid_ - 1);
    }
    return plan_.boundaries.back();
  }

 private:
  double two() const { return plan_.sided == Sidedness::two ? 2.0 : 1.0; }

  // Recompute every look on a finer grid.
  void rebuild(std::size_t points) {
    BoundaryPlan old = plan_;
    grid_ = points;
    plan_.grid_points = points;
    plan_.fractions.clear();
    plan_.spend.clear();
    plan_.increments.clear();
    plan_.boundaries.clear();
    plan_.crossing.clear();
    for (std::size_t j = 0; j < old.fractions.size(); ++j) {
      plan_.fractions.push_back(old.fractions[j]);
      plan_.spend.push_back(old.spend[j]);
      plan_.increments.push_back(old.increments[j]);
      advance();
    }
  }

  void advance() {
    const std::size_t j = plan_.fractions.size() - 1;
    const double t = plan_.fractions[j];
    const double pi = plan_.increments[j];
    const double sd = std::sqrt(t);
    const double inf = std::numeric_limits<double>::infinity();
    if (j == 0) {
      h_ = 16.0 * std::sqrt(std::max(t, 0.05)) / static_cast<double>(grid_ - 1);
      const double b = pi > 0.0 ? normal::upper_quantile(pi / two()) : inf;
      plan_.boundaries.push_back(b);
      plan_.crossing.push_back(pi > 0.0 ? two() * normal::sf(b) : 0.0);
      init_density(sd, b);
      return;
    }
    const double sigma = std::sqrt(t - plan_.fractions[j - 1]);
    double c = inf, achieved = 0.0;
    if (pi > 0.0) {
      c = solve_boundary(sigma, pi, sd);
      achieved = two() * detail::upper_tail(dens_, h_, sigma, c);
    }
    plan_.boundaries.push_back(c / sd);
    plan_.crossing.push_back(achieved);
    propagate(sigma, sd, c);
  }

  void init_density(double sd, double b) {
    detail::SubDensity d;
    d.hi = std::min(b * sd, 8.0 * sd);
    d.lo = plan_.sided == Sidedness::two ? -d.hi : -8.0 * sd;
    auto dens = [&](double s) { return normal::pdf(s / sd) / sd; };
    d.g_lo = dens(d.lo);
    d.g_hi = dens(d.hi);
    detail::lattice_range(d.lo, d.hi, h_, d.k_first, d.k_last);
    if (d.has_lattice()) {
      d.g.resize(static_cast<std::size_t>(d.k_last - d.k_first + 1));
      for (long k = d.k_first; k <= d.k_last; ++k) d.g[static_cast<std::size_t>(k - d.k_first)] = dens(k * h_);
    }
    dens_ = std::move(d);
  }

  // Boundary c on the S scale with crossing probability pi.
  double solve_boundary(double sigma, double pi, double sd) {
    const double target = pi / two();
    auto f = [&](double c) { return detail::upper_tail(dens_, h_, sigma, c) - target; };
    // Bracket: f decreasing in c.
    double lo = plan_.sided == Sidedness::two ? 0.0 : -8.0 * sd;
    double hi = std::max(dens_.hi, 0.0) + 12.0 * sigma;
    double flo = f(lo), fhi = f(hi);
    if (flo < 0.0) throw NumericalError("boundary: spending increment exceeds the remaining crossing probability");
    if (fhi > 0.0) throw NumericalError("boundary: could not bracket the root");
    double c = std::clamp(normal::upper_quantile(std::min(target, 0.5)) * sd, lo, hi);
    for (int it = 0; it < 200; ++it) {
      const double fc = f(c);
      if (fc == 0.0) return c;
      if (fc > 0.0) lo = c; else hi = c;
      if (hi - lo < 1e-10 * sd) return 0.5 * (lo + hi);
      const double deriv = -detail::convolve_at(dens_, h_, sigma, c);
      double nc = deriv < 0.0 ? c - fc / deriv : 0.5 * (lo + hi);
      if (!(nc > lo && nc < hi)) nc = 0.5 * (lo + hi);
      if (std::fabs(nc - c) < 1e-11 * sd) return nc;
      c = nc;
    }
    throw NumericalError("boundary: root finding did not converge");
  }

  // Sub-density of S_j on the continuation region [lo, hi].
  void propagate(double sigma, double sd, double c) {
    detail::SubDensity d;
    d.hi = std::min(c, 8.0 * sd);
    d.lo = plan_.sided == Sidedness::two ? -d.hi : -8.0 * sd;
    if (!(d.hi > d.lo)) throw NumericalError("boundary: empty continuation region");
    detail::lattice_range(d.lo, d.hi, h_, d.k_first, d.k_last);
    d.g_lo = detail::convolve_at(dens_, h_, sigma, d.lo);
    d.g_hi = detail::convolve_at(dens_, h_, sigma, d.hi);
    if (d.has_lattice()) {
      d.g.assign(static_cast<std::size_t>(d.k_last - d.k_first + 1), 0.0);
      convolve_lattice(sigma, d);
    }
    dens_ = std::move(d);
  }

  // Convolution at every lattice node of the new density. Interior cells
  // of the old density sit on the same lattice, so their kernel values
  // depend only on the index offset and are tabulated once.
  void convolve_lattice(double sigma, detail::SubDensity& out) const {
    const auto& in = dens_;
    const long D = static_cast<long>(std::ceil(9.0 * sigma / h_)) + 2;
    std::vector<double> P(static_cast<std::size_t>(2 * D + 1)), p(P.size());
    for (long d = -D; d <= D; ++d) {
      const double z = d * h_ / sigma;
      P[static_cast<std::size_t>(d + D)] = normal::cdf(z);
      p[static_cast<std::size_t>(d + D)] = normal::pdf(z);
    }
    const bool lattice = in.has_lattice();
    std::vector<double> slope;
    if (lattice) {
      slope.resize(in.g.size());
      for (std::size_t k = 0; k + 1 < in.g.size(); ++k) slope[k] = (in.g[k + 1] - in.g[k]) / h_;
    }
    auto edge_cell = [&](double s, double xa, double xb, double ga, double gb) {
      const double za = (xa - s) / sigma, zb = (xb - s) / sigma;
      if (zb < -9.0 || za > 9.0 || xb <= xa) return 0.0;
      const double sl = (gb - ga) / (xb - xa);
      const double gs = ga + sl * (s - xa);
      return gs * (normal::cdf(zb) - normal::cdf(za)) + sigma * sl * (normal::pdf(za) - normal::pdf(zb));
    };
    for (long i = out.k_first; i <= out.k_last; ++i) {
      const double s = i * h_;
      double sum = 0.0;
      if (!lattice) {
        sum = edge_cell(s, in.lo, in.hi, in.g_lo, in.g_hi);
      } else {
        sum += edge_cell(s, in.lo, in.k_first * h_, in.g_lo, in.g.front());
        sum += edge_cell(s, in.k_last * h_, in.hi, in.g.back(), in.g_hi);
        const long kb = std::max(in.k_first, i - D + 1);
        const long ke = std::min(in.k_last - 1, i + D - 2);
        for (long k = kb; k <= ke; ++k) {
          const auto ki = static_cast<std::size_t>(k - in.k_first);
          const auto da = static_cast<std::size_t>(k - i + D);
          const double sl = slope[ki];
          const double gs = in.g[ki] + sl * (s - k * h_);
          sum += gs * (P[da + 1] - P[da]) + sigma * sl * (p[da] - p[da + 1]);
        }
      }
      out.g[static_cast<std::size_t>(i - out.k_first)] = sum;
    }
  }

  std::size_t grid_;
  bool refined_ = false;
  double h_ = 0.0;
  detail::SubDensity dens_;
  BoundaryPlan plan_;
};

inline BoundaryPlan compute_boundaries(const std::vector<double>& fractions, double alpha, Sidedness sided,
                                       SpendingKind kind, std::size_t grid_points = 4001) {
  if (fractions.empty()) throw ValidationError("at least one information fraction is required");
  BoundaryEngine e(alpha, sided, kind, grid_points);
  for (double t : fractions) e.next(t);
  return e.plan();
}

enum class Direction { upper, lower };

enum class Decision { continue_trial, stop_reject, final_accept };

inline const char* to_string(Decision d) {
  switch (d) {
    case Decision::continue_trial: return "continue";
    case Decision::stop_reject: return "stop_reject";
    case Decision::final_accept: return "final_accept";
  }
  return "?";
}

struct SequentialDecision {
  std::size_t j = 0;  // 0-based look index
  double statistic = 0.0;
  double boundary = 0.0;
  Decision decision = Decision::continue_trial;
};

// One-sided tests reject for T >= b (upper) or T <= -b (lower); two-sided
// for |T| >= b. Non-crossing at the final look accepts H0.
inline bool crosses(double T, double b, Sidedness sided, Direction dir = Direction::upper) {
  if (sided == Sidedness::two) return std::fabs(T) >= b;
  return dir == Direction::upper ? T >= b : T <= -b;
}

inline SequentialDecision decide(const BoundaryPlan& plan, std::size_t j, double statistic, bool final_look,
                                 Direction dir = Direction::upper) {
  if (j >= plan.boundaries.size()) throw ValidationError("analysis index beyond the boundary plan");
  SequentialDecision d;
  d.j = j;
  d.statistic = statistic;
  d.boundary = plan.boundaries[j];
  if (crosses(statistic, d.boundary, plan.sided, dir))
    d.decision = Decision::stop_reject;
  else
    d.decision = final_look ? Decision::final_accept : Decision::continue_trial;
  return d;
}

// Adjusts a realised fraction so the sequence stays strictly increasing
// (steps of at least 1e-6) and leaves room below 1 for the remaining looks.
inline double monotone_fraction(double prev, double p, std::size_t looks_after) {
  const double cap = 1.0 - 1e-6 * static_cast<double>(looks_after);
  return std::min(cap, std::max(p, prev + 1e-6));
}

// Applies monotone_fraction along a whole sequence; returns how many entries
// changed.
inline std::size_t monotonize_fractions(std::vector<double>& p) {
  std::size_t changed = 0;
  double prev = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double v = monotone_fraction(prev, p[j], p.size() - 1 - j);
    if (v != p[j]) ++changed;
    p[j] = prev = v;
  }
  return changed;
}

}  // namespace lagseq
