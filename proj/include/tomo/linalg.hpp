#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "tomo/errors.hpp"

namespace tomo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/// Condition number above which inversions emit a warning.
inline constexpr double kConditionWarn = 1e10;

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Eigen-decomposition of a symmetric positive-definite matrix with a
/// positivity check and a condition-number warning.
class SpdEigen {
 public:
  SpdEigen(const Matrix& m, std::string_view what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
      throw PreconditionError(std::string(what) + ": matrix must be square and non-empty");
    }
    if (!m.allFinite()) {
      throw SingularCovariance(std::string(what) + ": matrix has non-finite entries");
    }
    solver_.compute(symmetrize(m));
    const Vector& ev = solver_.eigenvalues();
    const double hi = ev.maxCoeff();
    const double lo = ev.minCoeff();
    if (!(hi > 0.0) || !(lo > hi * 1e-15)) {
      std::ostringstream os;
      os << what << ": matrix is singular or not positive definite (eigenvalues in [" << lo
         << ", " << hi << "])";
      throw SingularCovariance(os.str());
    }
    condition_ = hi / lo;
    if (condition_ > kConditionWarn) {
      std::ostringstream os;
      os << what << ": condition number " << condition_ << " exceeds " << kConditionWarn;
      warn(os.str());
    }
  }

  double condition() const { return condition_; }
  const Vector& eigenvalues() const { return solver_.eigenvalues(); }
  const Matrix& eigenvectors() const { return solver_.eigenvectors(); }

  Matrix inverse() const {
    const Matrix& q = solver_.eigenvectors();
    return symmetrize(q * solver_.eigenvalues().cwiseInverse().asDiagonal() * q.transpose());
  }

  Matrix inverse_sqrt() const {
    const Matrix& q = solver_.eigenvectors();
    return symmetrize(q * solver_.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                      q.transpose());
  }

  Matrix sqrt() const {
    const Matrix& q = solver_.eigenvectors();
    return symmetrize(q * solver_.eigenvalues().cwiseSqrt().asDiagonal() * q.transpose());
  }

 private:
  Eigen::SelfAdjointEigenSolver<Matrix> solver_;
  double condition_ = 1.0;
};

inline Matrix spd_inverse(const Matrix& m, std::string_view what = "matrix") {
  return SpdEigen(m, what).inverse();
}

/// Symmetric (spectral) inverse square root.
inline Matrix spd_inverse_sqrt(const Matrix& m, std::string_view what = "matrix") {
  return SpdEigen(m, what).inverse_sqrt();
}

/// Count of singular values above `rel_tol` times the largest.
inline Eigen::Index numerical_rank(const Matrix& m, double rel_tol = 1e-10) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

}  // namespace linalg
}  // namespace tomo
