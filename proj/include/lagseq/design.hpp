#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "basis.hpp"
#include "boundaries.hpp"
#include "errors.hpp"
#include "information.hpp"
#include "models.hpp"

namespace lagseq {

struct TrialDesign {
  std::size_t n_max = 0;
  double T_F = 0.0;
  double E_max = 0.0;
  double alpha = 0.025;
  Sidedness sidedness = Sidedness::one;
  Direction direction = Direction::upper;  // one-sided tests only
  SpendingKind spending = SpendingKind::obrien_fleming;
  std::vector<double> analysis_times;  // t_1 < ... < t_K < t_end
  ModelSpec model;
  // Empty names mean the linear default built from the data dimensions.
  std::vector<std::string> f_basis;
  std::vector<std::string> h_basis;
  bool basis_given = false;
  std::vector<double> l_default;  // L(u) before the first record; zeros if empty

  double t_end() const { return analysis_times.back(); }

  BasisSpec basis(std::size_t p_x, std::size_t q) const {
    BasisSpec b = basis_given ? BasisSpec::parse(f_basis, h_basis) : BasisSpec::linear_default(p_x, q);
    b.check_dims(p_x, q);
    return b;
  }

  void validate() const {
    if (n_max == 0) throw ValidationError("design: n_max must be positive");
    if (!(T_F > 0.0)) throw ValidationError("design: T_F must be positive");
    if (!(E_max >= 0.0)) throw ValidationError("design: E_max must be >= 0");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("design: alpha must lie in (0, 0.5)");
    if (analysis_times.empty()) throw ValidationError("design: analysis_times is empty");
    for (std::size_t k = 1; k < analysis_times.size(); ++k)
      if (!(analysis_times[k] > analysis_times[k - 1]))
        throw ValidationError("design: analysis_times must be strictly increasing");
    if (analysis_times.front() < T_F)
      throw ValidationError("design: the first analysis must occur at or after T_F");
    if (t_end() < E_max + T_F) throw ValidationError("design: the final analysis must occur at or after E_max + T_F");
    if (model.kind == ModelKind::proportional_odds && model.levels < 3)
      throw ValidationError("design: proportional odds model needs levels >= 3");
  }
};

}  // namespace lagseq
