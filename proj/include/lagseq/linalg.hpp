#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

#include "errors.hpp"

namespace lagseq {

struct LeastSquaresFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;
  std::size_t rank = 0;
  double condition = 0.0;  // s_max / s_min over retained singular values
};

// Minimum-norm least squares via SVD; singular values below
// 1e-10 * s_max are treated as zero. Optional row weights w_i >= 0.
inline LeastSquaresFit min_norm_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              const Eigen::VectorXd* w = nullptr) {
  if (X.rows() != y.size()) throw ValidationError("least squares: row count mismatch");
  LeastSquaresFit out;
  out.coef = Eigen::VectorXd::Zero(X.cols());
  out.fitted = Eigen::VectorXd::Zero(X.rows());
  if (X.cols() == 0) return out;
  Eigen::MatrixXd Xw = X;
  Eigen::VectorXd yw = y;
  if (w) {
    const Eigen::VectorXd s = w->cwiseSqrt();
    Xw = s.asDiagonal() * X;
    yw = s.cwiseProduct(y);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  out.rank = static_cast<std::size_t>(svd.rank());
  if (out.rank == 0) return out;
  const auto& sv = svd.singularValues();
  out.condition = sv[0] / sv[static_cast<Eigen::Index>(out.rank) - 1];
  out.coef = svd.solve(yw);
  out.fitted = X * out.coef;
  return out;
}

}  // namespace lagseq
