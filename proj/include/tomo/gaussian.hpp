#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tomo/errors.hpp"
#include "tomo/identifiability.hpp"
#include "tomo/linalg.hpp"
#include "tomo/rng.hpp"
#include "tomo/topology.hpp"

namespace tomo {

enum class EstimatorTag { mle, one_d, two_d, moment };

inline const char* to_string(EstimatorTag t) {
  switch (t) {
    case EstimatorTag::mle: return "mle";
    case EstimatorTag::one_d: return "one_d";
    case EstimatorTag::two_d: return "two_d";
    case EstimatorTag::moment: return "moment";
  }
  return "?";
}

/// Independent Gaussian components X_i ~ N(mu_i, theta_i).
struct GaussianModel {
  Vector theta;
  Vector mu;

  GaussianModel() = default;
  explicit GaussianModel(Vector variances) : GaussianModel(variances, Vector::Zero(variances.size())) {}
  GaussianModel(Vector variances, Vector means) : theta(std::move(variances)), mu(std::move(means)) {
    if (theta.size() == 0) throw PreconditionError("model has no components");
    if (mu.size() != theta.size()) throw PreconditionError("mean and variance sizes differ");
    if (!theta.allFinite() || theta.minCoeff() <= 0.0)
      throw PreconditionError("model variances must be finite and strictly positive");
    if (!mu.allFinite()) throw PreconditionError("model means must be finite");
  }

  Eigen::Index size() const { return theta.size(); }
};

/// Limit covariance of sqrt(n) (theta_hat - theta).
struct AsymptoticCovariance {
  Matrix matrix;
  EstimatorTag estimator_tag = EstimatorTag::mle;

  /// Per-parameter limit standard deviations.
  Vector limit_std() const { return matrix.diagonal().cwiseSqrt(); }
};

namespace detail {

inline void check_model(const RoutingMatrix& a, const GaussianModel& model) {
  if (model.size() != a.cols())
    throw PreconditionError("model has " + std::to_string(model.size()) +
                            " components but routing matrix has " + std::to_string(a.cols()));
}

/// C^{-1} I C^{-1} for C = V^T V / 2 and I = V^T W V / 2, evaluated through a
/// thin QR of V so that the conditioning of V is not squared.
inline Matrix sandwich_from_design(const Matrix& v, const Matrix& w) {
  const Eigen::Index p = v.cols();
  if (v.rows() < p || linalg::numerical_rank(v, 1e-12) < p)
    throw NonIdentifiableDesign("projection design does not identify the variances (rank " +
                                std::to_string(linalg::numerical_rank(v, 1e-12)) + " < " +
                                std::to_string(p) + ")");
  Eigen::HouseholderQR<Matrix> qr(v);
  const Matrix q = qr.householderQ() * Matrix::Identity(v.rows(), p);
  const Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Matrix middle = q.transpose() * w * q;
  // 2 R^{-1} middle R^{-T}
  const Matrix left = r.triangularView<Eigen::Upper>().solve(middle);
  const Matrix full = r.triangularView<Eigen::Upper>().solve(left.transpose());
  return linalg::symmetrize(2.0 * full.transpose());
}

}  // namespace detail

/// Sigma = A Theta A^T.
inline Matrix model_covariance(const RoutingMatrix& a, const GaussianModel& model) {
  detail::check_model(a, model);
  return linalg::symmetrize(a.matrix() * model.theta.asDiagonal() * a.matrix().transpose());
}

/// U = A^T Sigma^{-1} A.
inline Matrix precision_gram(const RoutingMatrix& a, const GaussianModel& model) {
  const Matrix sigma_inv = linalg::spd_inverse(model_covariance(a, model), "model covariance");
  return linalg::symmetrize(a.matrix().transpose() * sigma_inv * a.matrix());
}

/// Fisher information of the variances: I_F(a, b) = U_ab^2 / 2.
inline Matrix fisher_information(const RoutingMatrix& a, const GaussianModel& model) {
  const Matrix u = precision_gram(a, model);
  return 0.5 * u.cwiseProduct(u);
}

/// Maximum-correlation projections: beta_k = Sigma^{-1} A^k / lambda_k with
/// lambda_k = sqrt(A^k^T Sigma^{-1} A^k), so that beta_k^T Sigma beta_k = 1.
/// One projection per latent component (K = I).
inline ProjectionSet optimal_projections(const RoutingMatrix& a, const Matrix& sigma) {
  if (sigma.rows() != a.rows() || sigma.cols() != a.rows())
    throw PreconditionError("covariance is not J x J");
  const Matrix sigma_inv = linalg::spd_inverse(sigma, "covariance");
  const Matrix dirs = sigma_inv * a.matrix();  // J x I, column k = Sigma^{-1} A^k
  Matrix b(a.cols(), a.rows());
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double lambda = std::sqrt(a.column(k).dot(dirs.col(k)));
    b.row(k) = dirs.col(k).transpose() / lambda;
  }
  return ProjectionSet(std::move(b));
}

/// The scale factors lambda_k^2 = A^k^T Sigma^{-1} A^k (diagonal of S).
inline Vector optimal_projection_scales(const RoutingMatrix& a, const Matrix& sigma) {
  const Matrix sigma_inv = linalg::spd_inverse(sigma, "covariance");
  return (a.matrix().transpose() * sigma_inv * a.matrix()).diagonal();
}

/// Random directions beta_k = Sigma^{-1/2} alpha_k with alpha_k ~ N(0, I_J),
/// using the symmetric inverse square root.
inline ProjectionSet random_projections(const Matrix& sigma, Eigen::Index k, Rng& gen) {
  if (k < 1) throw PreconditionError("need at least one random projection");
  const Matrix root = linalg::spd_inverse_sqrt(sigma, "covariance");
  const Matrix alpha = rng::standard_normal(k, sigma.rows(), gen);
  return ProjectionSet(alpha * root);
}

/// The V and W matrices of the 1D sandwich:
/// V_ka = gamma_ka^2 / sigma_k^2, W_kk' = (beta_k^T Sigma beta_k')^2 / (sigma_k^2 sigma_k'^2).
struct OneDDesign {
  Matrix v;
  Matrix w;
};

inline OneDDesign one_d_design(const RoutingMatrix& a, const GaussianModel& model,
                               const ProjectionSet& projections) {
  const Matrix sigma = model_covariance(a, model);
  const Matrix gamma = projections.gamma(a);
  const Matrix& b = projections.directions();
  const Matrix cross = b * sigma * b.transpose();  // beta_k^T Sigma beta_k'
  const Vector var = cross.diagonal();
  if (var.minCoeff() <= 0.0) throw SingularCovariance("a projection has zero variance");
  OneDDesign d;
  d.v = var.cwiseInverse().asDiagonal() * gamma.cwiseProduct(gamma);
  d.w = var.cwiseInverse().asDiagonal() * cross.cwiseProduct(cross) *
        var.cwiseInverse().asDiagonal();
  return d;
}

/// Sandwich covariance C_1D^{-1} I_1D C_1D^{-1} of the 1D-projection
/// likelihood estimator. Throws NonIdentifiableDesign when C_1D is singular.
inline AsymptoticCovariance asymptotic_cov_1d(const RoutingMatrix& a, const GaussianModel& model,
                                              const ProjectionSet& projections) {
  const OneDDesign d = one_d_design(a, model, projections);
  return {detail::sandwich_from_design(d.v, d.w), EstimatorTag::one_d};
}

/// The square-design form 2 V^{-1} W V^{-T}, valid when K = I and V is invertible.
inline Matrix asymptotic_cov_1d_square(const RoutingMatrix& a, const GaussianModel& model,
                                       const ProjectionSet& projections) {
  const OneDDesign d = one_d_design(a, model, projections);
  if (d.v.rows() != d.v.cols()) throw PreconditionError("square form needs K = I");
  Eigen::FullPivLU<Matrix> lu(d.v);
  if (!lu.isInvertible()) throw NonIdentifiableDesign("V is singular");
  const Matrix vinv_w = lu.solve(d.w);
  return linalg::symmetrize(2.0 * lu.solve(vinv_w.transpose()).transpose());
}

/// Inverse Fisher information, the MLE limit covariance.
inline AsymptoticCovariance asymptotic_cov_mle(const RoutingMatrix& a, const GaussianModel& model) {
  // I_F = V^T V / 2 with V rows indexed by measurement pairs; using the
  // Cholesky factor of Sigma keeps conditioning unsquared.
  const Matrix sigma = model_covariance(a, model);
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw SingularCovariance("model covariance is not positive definite");
  const Matrix r = llt.matrixL().solve(a.matrix());  // J x I, R^T R = U
  const Eigen::Index j = r.rows();
  Matrix v(j * j, a.cols());
  for (Eigen::Index s = 0; s < j; ++s)
    for (Eigen::Index t = 0; t < j; ++t)
      v.row(s * j + t) = r.row(s).cwiseProduct(r.row(t));
  return {detail::sandwich_from_design(v, Matrix::Identity(j * j, j * j)), EstimatorTag::mle};
}

/// The pairwise-composite matrices C_2D and I_2D from their element formulas:
///   C(a,b) = 1/2 sum_{k<k'} (a_kk'^T S_kk'^{-1} b_kk')^2
///   I(a,b) = 1/2 sum_{k<k', l<l'} (a_kk'^T S_kk'^{-1} Sigma_kk'^ll' S_ll'^{-1} b_ll')^2
/// where a_kk' = [A_ka, A_k'a] and S_kk' is the 2x2 block of Sigma.
struct TwoDDesign {
  Matrix c;
  Matrix i;
};

inline TwoDDesign two_d_design(const RoutingMatrix& a, const GaussianModel& model) {
  const Matrix sigma = model_covariance(a, model);
  const Eigen::Index jn = a.rows(), in = a.cols();
  if (jn < 2) throw PreconditionError("pairwise design needs J >= 2");
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index k = 0; k < jn; ++k)
    for (Eigen::Index l = k + 1; l < jn; ++l) pairs.emplace_back(k, l);

  std::vector<Eigen::Matrix2d> s_inv(pairs.size());
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> g(pairs.size());
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> h(pairs.size());  // S^{-1} g
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [k, l] = pairs[p];
    Eigen::Matrix2d s;
    s << sigma(k, k), sigma(k, l), sigma(l, k), sigma(l, l);
    const double det = s.determinant();
    if (!(det > 1e-14 * s.trace() * s.trace()))
      throw SingularCovariance("2x2 covariance block (" + std::to_string(k) + "," +
                               std::to_string(l) + ") is singular");
    s_inv[p] = s.inverse();
    g[p].resize(2, in);
    g[p].row(0) = a.matrix().row(k);
    g[p].row(1) = a.matrix().row(l);
    h[p] = s_inv[p] * g[p];
  }

  TwoDDesign d;
  d.c = Matrix::Zero(in, in);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Matrix m = g[p].transpose() * h[p];
    d.c += 0.5 * m.cwiseProduct(m);
  }
  d.i = Matrix::Zero(in, in);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      Eigen::Matrix2d cross;
      cross << sigma(pairs[p].first, pairs[q].first), sigma(pairs[p].first, pairs[q].second),
          sigma(pairs[p].second, pairs[q].first), sigma(pairs[p].second, pairs[q].second);
      const Matrix m = h[p].transpose() * cross * h[q];
      d.i += 0.5 * m.cwiseProduct(m);
    }
  }
  d.c = linalg::symmetrize(d.c);
  d.i = linalg::symmetrize(d.i);
  return d;
}

/// Sandwich covariance C_2D^{-1} I_2D C_2D^{-1} of the all-pairs bivariate
/// pseudo-likelihood estimator.
inline AsymptoticCovariance asymptotic_cov_2d(const RoutingMatrix& a, const GaussianModel& model) {
  const TwoDDesign d = two_d_design(a, model);
  Eigen::LDLT<Matrix> ldlt(d.c);
  if (ldlt.info() != Eigen::Success || linalg::numerical_rank(d.c, 1e-13) < d.c.rows())
    throw NonIdentifiableDesign("pairwise design does not identify the variances");
  const Matrix left = ldlt.solve(d.i);
  return {linalg::symmetrize(ldlt.solve(left.transpose())), EstimatorTag::two_d};
}

/// Per-component score s_i(y) = -d/dtheta_i log p(y; theta)
///   = ( -(y^T Sigma^{-1} A^i)^2 + A^i^T Sigma^{-1} A^i ) / 2.
inline Vector gaussian_score(const RoutingMatrix& a, const GaussianModel& model, const Vector& y) {
  const Matrix sigma = model_covariance(a, model);
  if (y.size() != a.rows()) throw PreconditionError("observation has wrong length");
  const Matrix sigma_inv = linalg::spd_inverse(sigma, "model covariance");
  const Vector proj = a.matrix().transpose() * (sigma_inv * y);
  const Vector diag = (a.matrix().transpose() * sigma_inv * a.matrix()).diagonal();
  return 0.5 * (diag - proj.cwiseProduct(proj));
}

}  // namespace tomo
