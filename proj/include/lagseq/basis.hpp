#pragma once

// Augmentation basis functions. A term is a product of factors written as
// "x<k>" (k-th baseline covariate), "l<k>" (k-th time-dependent covariate
// at u) or "u", joined by '*', e.g. "x1", "l2*x1", "u*u". The baseline
// intercept f_0 = 1 is always implicit.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "trial_data.hpp"

namespace lagseq {

struct BasisFactor {
  enum Kind { X, L, U } kind;
  std::size_t index = 0;  // 0-based
};

struct BasisTerm {
  std::string name;
  std::vector<BasisFactor> factors;

  bool uses_time() const {
    for (const auto& f : factors)
      if (f.kind != BasisFactor::X) return true;
    return false;
  }

  double eval(double u, std::span<const double> x, std::span<const double> l) const {
    double v = 1.0;
    for (const auto& f : factors) {
      switch (f.kind) {
        case BasisFactor::X: v *= x[f.index]; break;
        case BasisFactor::L: v *= l[f.index]; break;
        case BasisFactor::U: v *= u; break;
      }
    }
    return v;
  }
};

inline BasisTerm parse_basis_term(const std::string& text) {
  BasisTerm t;
  t.name = text;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto stop = text.find('*', start);
    if (stop == std::string::npos) stop = text.size();
    const std::string tok = text.substr(start, stop - start);
    if (tok == "u") {
      t.factors.push_back({BasisFactor::U, 0});
    } else if (tok.size() >= 2 && (tok[0] == 'x' || tok[0] == 'l') &&
               tok.find_first_not_of("0123456789", 1) == std::string::npos) {
      const auto k = std::stoul(tok.substr(1));
      if (k == 0) throw ValidationError("basis term '" + text + "': covariate indices start at 1");
      t.factors.push_back({tok[0] == 'x' ? BasisFactor::X : BasisFactor::L, k - 1});
    } else {
      throw ValidationError("basis term '" + text + "': cannot parse factor '" + tok + "'");
    }
    start = stop + 1;
  }
  return t;
}

// f_1..f_M act on X only; h_1..h_L act on (u, X, L(u)).
struct BasisSpec {
  std::vector<BasisTerm> f;
  std::vector<BasisTerm> h;

  std::size_t M() const { return f.size(); }
  std::size_t L() const { return h.size(); }

  static BasisSpec parse(const std::vector<std::string>& f_names, const std::vector<std::string>& h_names) {
    BasisSpec b;
    for (const auto& n : f_names) {
      b.f.push_back(parse_basis_term(n));
      if (b.f.back().uses_time()) throw ValidationError("baseline basis term '" + n + "' may only use x covariates");
    }
    for (const auto& n : h_names) b.h.push_back(parse_basis_term(n));
    return b;
  }

  // f = components of X; h = components of L(u) followed by components of X.
  static BasisSpec linear_default(std::size_t p_x, std::size_t q) {
    std::vector<std::string> f, h;
    for (std::size_t k = 1; k <= p_x; ++k) f.push_back("x" + std::to_string(k));
    for (std::size_t k = 1; k <= q; ++k) h.push_back("l" + std::to_string(k));
    for (std::size_t k = 1; k <= p_x; ++k) h.push_back("x" + std::to_string(k));
    return parse(f, h);
  }

  void check_dims(std::size_t p_x, std::size_t q) const {
    auto check = [&](const BasisTerm& t) {
      for (const auto& f : t.factors) {
        if (f.kind == BasisFactor::X && f.index >= p_x)
          throw ValidationError("basis term '" + t.name + "' refers to a missing baseline covariate");
        if (f.kind == BasisFactor::L && f.index >= q)
          throw ValidationError("basis term '" + t.name + "' refers to a missing time-dependent covariate");
      }
    };
    for (const auto& t : f) check(t);
    for (const auto& t : h) check(t);
  }
};

// Proportion of enrolled subjects on the active arm.
inline double treated_fraction(const InterimSnapshot& snap) {
  if (snap.subjects.empty()) throw ValidationError("no enrolled subjects");
  double s = 0.0;
  for (const auto& sub : snap.subjects) s += sub.arm();
  return s / static_cast<double>(snap.size());
}

// Baseline augmentation columns (A_i - pi_t) f_m(X_i), m = 0..M, f_0 = 1.
inline Eigen::MatrixXd baseline_covariates(const InterimSnapshot& snap, const BasisSpec& basis) {
  const double pi = treated_fraction(snap);
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(snap.size()), static_cast<Eigen::Index>(basis.M() + 1));
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const auto& s = snap.subjects[i];
    const double c = s.arm() - pi;
    const auto r = static_cast<Eigen::Index>(i);
    Z(r, 0) = c;
    for (std::size_t m = 0; m < basis.M(); ++m)
      Z(r, static_cast<Eigen::Index>(m + 1)) = c * basis.f[m].eval(0.0, s.x(), {});
  }
  return Z;
}

}  // namespace lagseq
