#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>

#include <cmath>
#include <utility>

#include "mmreg/common.hpp"

namespace mmreg {

/// Thin QR factor of a design matrix X, exposing products with the hat
/// matrix H = X (X'X)^{-1} X' = Q Q' and the residual maker I - H without
/// ever forming an n-by-n matrix.
///
/// Immutable after construction; safe for concurrent read-only use.
template <typename Scalar = double>
class ProjectionOperator {
 public:
  /// Householder thin QR of X. Throws RankDeficient when the smallest
  /// R-diagonal magnitude falls below rank_tol times the largest.
  static ProjectionOperator factorize(DesignMatrix<Scalar> x,
                                      Scalar rank_tol = Scalar(1e-8)) {
    const Index n = x.rows();
    const Index d = x.cols();
    if (d < 1 || n <= d) throw BadShape("factorize: need n > d >= 1");
    if (!x.allFinite()) throw BadShape("factorize: non-finite entries");

    Eigen::HouseholderQR<DesignMatrix<Scalar>> qr(std::move(x));
    Mat<Scalar> r_full = qr.matrixQR()
                             .topRows(d)
                             .template triangularView<Eigen::Upper>();
    Scalar dmin = r_full.diagonal().cwiseAbs().minCoeff();
    Scalar dmax = r_full.diagonal().cwiseAbs().maxCoeff();
    if (!(dmin > rank_tol * dmax))
      throw RankDeficient("factorize: X numerically rank deficient");

    Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(n, d);
    return ProjectionOperator(std::move(q), std::move(r_full));
  }

  Index rows() const { return q_.rows(); }
  Index cols() const { return q_.cols(); }
  const Mat<Scalar>& q_factor() const { return q_; }
  const Mat<Scalar>& r_factor() const { return r_; }

  /// H u = Q (Q' u)
  Vec<Scalar> apply_hat(const Vec<Scalar>& u) const {
    check_len(u);
    return q_ * (q_.transpose() * u);
  }

  /// (I - H) u
  Vec<Scalar> apply_residual(const Vec<Scalar>& u) const {
    check_len(u);
    return u - apply_hat(u);
  }

  /// argmin_beta || rhs - X beta ||^2 via the triangular solve R beta = Q' rhs.
  Vec<Scalar> solve_beta(const Vec<Scalar>& rhs) const {
    check_len(rhs);
    Vec<Scalar> qtr = q_.transpose() * rhs;
    return r_.template triangularView<Eigen::Upper>().solve(qtr);
  }

  /// Leverage values H_ii = ||q_i||^2 (squared row norms of Q).
  Vec<Scalar> hat_diagonal() const { return q_.rowwise().squaredNorm(); }

  /// Single hat-matrix entry H_ij = <q_i, q_j>, O(d).
  Scalar hat_entry(Index i, Index j) const {
    return q_.row(i).dot(q_.row(j));
  }

 private:
  ProjectionOperator(Mat<Scalar> q, Mat<Scalar> r)
      : q_(std::move(q)), r_(std::move(r)) {}

  void check_len(const Vec<Scalar>& u) const {
    if (u.size() != q_.rows())
      throw DimensionMismatch("ProjectionOperator: vector length != n");
  }

  Mat<Scalar> q_;  // n x d, orthonormal columns
  Mat<Scalar> r_;  // d x d, upper triangular
};

using ProjectionOperatorXd = ProjectionOperator<double>;

}  // namespace mmreg
