#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomo/errors.hpp"
#include "tomo/gaussian.hpp"
#include "tomo/identifiability.hpp"
#include "tomo/linalg.hpp"
#include "tomo/optimize.hpp"
#include "tomo/rng.hpp"
#include "tomo/topology.hpp"

namespace tomo {

/// n x J matrix of i.i.d. observations of Y, one row per observation.
class SampleBlock {
 public:
  SampleBlock() = default;
  explicit SampleBlock(Matrix data, SeedProvenance provenance = {})
      : data_(std::move(data)), provenance_(std::move(provenance)) {
    if (data_.rows() < 2) throw PreconditionError("sample block needs at least 2 observations");
    if (data_.cols() < 1) throw PreconditionError("sample block has no columns");
    if (!data_.allFinite()) throw PreconditionError("sample block contains non-finite entries");
  }

  Eigen::Index size() const { return data_.rows(); }
  Eigen::Index dimension() const { return data_.cols(); }
  const Matrix& data() const { return data_; }
  const SeedProvenance& provenance() const { return provenance_; }

  Vector mean() const { return data_.colwise().mean().transpose(); }
  /// Uncentred second moment (1/n) sum y y^T.
  Matrix second_moment() const {
    return linalg::symmetrize(data_.transpose() * data_ / static_cast<double>(size()));
  }
  /// Centred covariance with divisor n.
  Matrix covariance() const {
    const Vector m = mean();
    return linalg::symmetrize(second_moment() - m * m.transpose());
  }

 private:
  Matrix data_;
  SeedProvenance provenance_;
};

/// Variance = phi * mean^c.
struct MeanVarianceRelation {
  double phi = 1.0;
  double c = 2.0;

  void validate() const {
    if (!(phi > 0.0) || !std::isfinite(phi)) throw PreconditionError("relation needs phi > 0");
    if (!std::isfinite(c)) throw PreconditionError("relation exponent must be finite");
  }
  double variance(double mean) const { return phi * std::pow(mean, c); }
};

struct EstimateOptions {
  OptimizerOptions optimizer;
  /// When set, the estimators work on the means mu (theta_i = phi mu_i^c and
  /// E[Y] = A mu); otherwise on zero-mean variances theta.
  std::optional<MeanVarianceRelation> relation;
};

struct EstimateReport {
  Vector theta_hat;
  std::optional<Vector> mu_hat;
  double objective_value = 0.0;
  int iterations = 0;
  bool converged = false;
  EstimatorTag estimator_tag = EstimatorTag::mle;
  std::vector<std::string> warnings;
  std::string message;
};

inline void to_json(nlohmann::json& j, const EstimateReport& r) {
  j = nlohmann::json{{"estimator", to_string(r.estimator_tag)},
                     {"theta_hat", std::vector<double>(r.theta_hat.data(),
                                                       r.theta_hat.data() + r.theta_hat.size())},
                     {"objective_value", r.objective_value},
                     {"iterations", r.iterations},
                     {"converged", r.converged},
                     {"warnings", r.warnings},
                     {"message", r.message}};
  if (r.mu_hat)
    j["mu_hat"] = std::vector<double>(r.mu_hat->data(), r.mu_hat->data() + r.mu_hat->size());
}

/// Sum over linear blocks Z_b = L_b Y of the Gaussian negative log-likelihood
/// of Z_b, averaged over the sample. The full likelihood is the single block
/// L = I; 1D projections use one row per block; pairwise 2D uses the J(J-1)/2
/// coordinate pairs. Only sufficient statistics enter, so evaluation cost does
/// not depend on n.
///
/// Parameters are log-coordinates: log theta without a mean-variance relation,
/// log mu with one.
class BlockLikelihood {
 public:
  BlockLikelihood(const RoutingMatrix& a, const SampleBlock& samples, const std::vector<Matrix>& blocks,
                  std::optional<MeanVarianceRelation> relation)
      : relation_(relation), components_(a.cols()) {
    if (samples.dimension() != a.rows())
      throw PreconditionError("sample dimension " + std::to_string(samples.dimension()) +
                              " does not match routing matrix rows " + std::to_string(a.rows()));
    if (relation_) relation_->validate();
    const Vector ybar = samples.mean();
    const Matrix m2 = samples.second_moment();
    for (const Matrix& l : blocks) {
      if (l.cols() != a.rows()) throw PreconditionError("block has wrong width");
      Block b;
      b.g = l * a.matrix();
      b.zbar = l * ybar;
      b.m2 = linalg::symmetrize(l * m2 * l.transpose());
      blocks_.push_back(std::move(b));
    }
  }

  Eigen::Index parameters() const { return components_; }

  Vector theta(const Vector& x) const {
    if (!relation_) return x.array().exp();
    return x.unaryExpr([this](double v) { return relation_->variance(std::exp(v)); });
  }
  Vector mu(const Vector& x) const {
    if (!relation_) return Vector::Zero(x.size());
    return x.array().exp();
  }

  double operator()(const Vector& x, Vector& grad) const {
    const Vector th = theta(x);
    const Vector m = mu(x);
    Vector d_theta = Vector::Zero(components_);
    Vector d_mu = Vector::Zero(components_);
    double total = 0.0;
    for (const Block& b : blocks_) {
      const Eigen::Index d = b.g.rows();
      const Matrix sigma = b.g * th.asDiagonal() * b.g.transpose();
      Eigen::LLT<Matrix> llt(sigma);
      if (llt.info() != Eigen::Success) {
        grad.setConstant(components_, std::numeric_limits<double>::quiet_NaN());
        return std::numeric_limits<double>::infinity();
      }
      const Matrix lmat = llt.matrixL();
      const double logdet = 2.0 * lmat.diagonal().array().log().sum();
      const Vector mean = relation_ ? Vector(b.g * m) : Vector::Zero(d);
      const Vector resid = b.zbar - mean;
      const Matrix q = b.m2 - b.zbar * mean.transpose() - mean * b.zbar.transpose() +
                       mean * mean.transpose();
      const Matrix p = llt.solve(b.g);   // Sigma^{-1} G
      const Matrix sq = llt.solve(q);    // Sigma^{-1} Q
      total += 0.5 * (logdet + sq.trace() + static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
      const Matrix r = sq * p;  // Sigma^{-1} Q Sigma^{-1} G
      d_theta += 0.5 * (b.g.cwiseProduct(p).colwise().sum() - b.g.cwiseProduct(r).colwise().sum())
                           .transpose();
      if (relation_) d_mu -= p.transpose() * resid;
    }
    if (!relation_) {
      grad = th.cwiseProduct(d_theta);
    } else {
      grad = m.cwiseProduct(d_mu) + relation_->c * th.cwiseProduct(d_theta);
    }
    if (!std::isfinite(total)) return std::numeric_limits<double>::infinity();
    return total;
  }

  double value(const Vector& x) const {
    Vector g;
    return (*this)(x, g);
  }

  /// Expected Hessian of the objective (per observation) in log-coordinates.
  Matrix expected_information(const Vector& x) const {
    const Vector th = theta(x);
    const Vector m = mu(x);
    Matrix f_theta = Matrix::Zero(components_, components_);
    Matrix f_mu = Matrix::Zero(components_, components_);
    for (const Block& b : blocks_) {
      const Matrix sigma = b.g * th.asDiagonal() * b.g.transpose();
      Eigen::LDLT<Matrix> ldlt(sigma);
      const Matrix k = b.g.transpose() * ldlt.solve(b.g);
      f_theta += 0.5 * k.cwiseProduct(k);
      f_mu += k;
    }
    if (!relation_) return th.asDiagonal() * f_theta * th.asDiagonal();
    const Vector dt = relation_->c * th;
    return linalg::symmetrize(m.asDiagonal() * f_mu * m.asDiagonal() +
                              dt.asDiagonal() * f_theta * dt.asDiagonal());
  }

 private:
  struct Block {
    Matrix g;     // L A
    Vector zbar;  // L ybar
    Matrix m2;    // L S_raw L^T
  };
  std::vector<Block> blocks_;
  std::optional<MeanVarianceRelation> relation_;
  Eigen::Index components_;
};

namespace detail {

inline std::vector<Matrix> full_block(Eigen::Index j) { return {Matrix::Identity(j, j)}; }

inline std::vector<Matrix> projection_blocks(const ProjectionSet& p) {
  std::vector<Matrix> out;
  for (Eigen::Index k = 0; k < p.size(); ++k) out.emplace_back(p.directions().row(k));
  return out;
}

inline std::vector<Matrix> pair_blocks(Eigen::Index j) {
  std::vector<Matrix> out;
  for (Eigen::Index k = 0; k < j; ++k) {
    for (Eigen::Index l = k + 1; l < j; ++l) {
      Matrix b = Matrix::Zero(2, j);
      b(0, k) = 1.0;
      b(1, l) = 1.0;
      out.push_back(std::move(b));
    }
  }
  return out;
}

inline void check_init(const Vector& init, Eigen::Index components) {
  if (init.size() != components)
    throw PreconditionError("initial value has " + std::to_string(init.size()) +
                            " entries, expected " + std::to_string(components));
  if (!init.allFinite() || init.minCoeff() <= 0.0)
    throw PreconditionError("initial value must be strictly positive");
}

inline EstimateReport run_block_estimator(const BlockLikelihood& objective, const Vector& init,
                                          const EstimateOptions& options, EstimatorTag tag,
                                          bool check_design) {
  const Vector x0 = init.array().log();
  const Matrix info = objective.expected_information(x0);
  if (check_design) {
    // Rank of the diagonally scaled information, so that parameters of very
    // different magnitude do not masquerade as a deficient design.
    const Vector d = info.diagonal();
    bool deficient = !(d.array() > 0.0).all();
    if (!deficient) {
      const Vector s = d.cwiseSqrt().cwiseInverse();
      deficient = linalg::numerical_rank(s.asDiagonal() * info * s.asDiagonal(), 1e-10) < info.rows();
    }
    if (deficient)
      throw NonIdentifiableDesign(std::string(to_string(tag)) +
                                  ": design does not identify the parameters at the initial value");
  }
  // Seed the quasi-Newton metric with the inverse expected information.
  std::optional<Matrix> h0;
  if (info.allFinite() && info.diagonal().maxCoeff() > 0.0) {
    Matrix reg = linalg::symmetrize(info);
    reg.diagonal().array() += 1e-10 * info.diagonal().maxCoeff();
    Eigen::LDLT<Matrix> ldlt(reg);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive())
      h0 = linalg::symmetrize(ldlt.solve(Matrix::Identity(info.rows(), info.cols())));
  }
  const OptimizerResult opt = minimize_bfgs(objective, x0, options.optimizer, h0 ? &*h0 : nullptr);
  EstimateReport r;
  r.estimator_tag = tag;
  r.theta_hat = objective.theta(opt.x);
  if (options.relation) r.mu_hat = objective.mu(opt.x);
  r.objective_value = opt.value;
  r.iterations = opt.iterations;
  r.converged = opt.converged && opt.x.allFinite();
  r.message = opt.message;
  return r;
}

}  // namespace detail

/// Maximum likelihood from the joint Gaussian law of Y. `init` holds theta
/// (or mu when a relation is configured).
inline EstimateReport estimate_mle(const RoutingMatrix& a, const SampleBlock& samples,
                                   const Vector& init, const EstimateOptions& options = {}) {
  detail::check_init(init, a.cols());
  if (linalg::numerical_rank(a.matrix(), 1e-10) < a.rows())
    throw PreconditionError("maximum likelihood needs a routing matrix of full row rank");
  const BlockLikelihood objective(a, samples, detail::full_block(a.rows()), options.relation);
  return detail::run_block_estimator(objective, init, options, EstimatorTag::mle, false);
}

/// Minimizes the summed negative marginal log-likelihoods of beta_k^T Y.
inline EstimateReport estimate_1d(const RoutingMatrix& a, const SampleBlock& samples,
                                  const ProjectionSet& projections, const Vector& init,
                                  const EstimateOptions& options = {}) {
  detail::check_init(init, a.cols());
  if (projections.dimension() != a.rows())
    throw PreconditionError("projection dimension does not match routing matrix rows");
  const BlockLikelihood objective(a, samples, detail::projection_blocks(projections),
                                  options.relation);
  return detail::run_block_estimator(objective, init, options, EstimatorTag::one_d, true);
}

/// Minimizes the summed negative bivariate log-likelihoods over all pairs (Y_k, Y_k').
inline EstimateReport estimate_2d(const RoutingMatrix& a, const SampleBlock& samples,
                                  const Vector& init, const EstimateOptions& options = {}) {
  detail::check_init(init, a.cols());
  if (a.rows() < 2) throw PreconditionError("pairwise estimator needs J >= 2");
  const BlockLikelihood objective(a, samples, detail::pair_blocks(a.rows()), options.relation);
  return detail::run_block_estimator(objective, init, options, EstimatorTag::two_d, true);
}

/// Least-squares moment estimator.
///
/// Stacks E[Y] = A mu with the distinct covariance equations
/// cov(Y)_jj' = sum_i A_ji A_j'i theta_i and solves by minimum-norm least
/// squares. With a relation, theta_i = phi mu_i^c is substituted and mu is
/// refined by Gauss-Newton sweeps over the stacked system. Variances below
/// 1e-6 times their mean are clipped to that floor.
inline EstimateReport estimate_moment(const RoutingMatrix& a, const SampleBlock& samples,
                                      const std::optional<MeanVarianceRelation>& relation = {}) {
  if (samples.dimension() != a.rows())
    throw PreconditionError("sample dimension does not match routing matrix rows");
  if (relation) relation->validate();
  const Eigen::Index jn = a.rows(), in = a.cols();
  const Vector ybar = samples.mean();
  const Matrix cov = samples.covariance();

  const Eigen::Index neq = jn * (jn + 1) / 2;
  Matrix d(neq, in);
  Vector rhs(neq);
  {
    Eigen::Index e = 0;
    for (Eigen::Index j = 0; j < jn; ++j)
      for (Eigen::Index l = j; l < jn; ++l, ++e) {
        d.row(e) = a.matrix().row(j).cwiseProduct(a.matrix().row(l));
        rhs(e) = cov(j, l);
      }
  }

  EstimateReport r;
  r.estimator_tag = EstimatorTag::moment;
  r.converged = true;

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod_var(d);
  cod_var.setThreshold(1e-10);
  if (cod_var.rank() < in)
    r.warnings.push_back("covariance equations are rank deficient (rank " +
                         std::to_string(cod_var.rank()) + " < " + std::to_string(in) +
                         "); minimum-norm solution returned");
  Vector theta = cod_var.solve(rhs);

  auto clip = [](Vector v) {
    const double avg = v.mean();
    const double floor = 1e-6 * (avg > 0.0 ? avg : std::max(v.cwiseAbs().mean(), 1e-300));
    return Vector(v.cwiseMax(floor));
  };

  if (!relation) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod_mean(a.matrix());
    r.mu_hat = cod_mean.solve(ybar);
    r.theta_hat = clip(theta);
    r.objective_value = (d * r.theta_hat - rhs).squaredNorm();
    return r;
  }

  const double c = relation->c, phi = relation->phi;
  Vector mu;
  if (c != 0.0) {
    mu = clip(theta).unaryExpr([&](double t) { return std::pow(t / phi, 1.0 / c); });
  } else {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod_mean(a.matrix());
    mu = clip(cod_mean.solve(ybar));
  }

  Matrix jac(jn + neq, in);
  Vector res(jn + neq);
  auto residual = [&](const Vector& m) {
    Vector out(jn + neq);
    out.head(jn) = a.matrix() * m - ybar;
    const Vector th = m.unaryExpr([&](double v) { return phi * std::pow(v, c); });
    out.tail(neq) = d * th - rhs;
    return out;
  };

  res = residual(mu);
  double cost = res.squaredNorm();
  int sweep = 0;
  for (; sweep < 50; ++sweep) {
    jac.topRows(jn) = a.matrix();
    const Vector dth = mu.unaryExpr([&](double v) { return c * phi * std::pow(v, c - 1.0); });
    jac.bottomRows(neq) = d * dth.asDiagonal();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(jac);
    const Vector step = cod.solve(-res);
    double t = 1.0;
    bool improved = false;
    Vector trial;
    for (int k = 0; k < 30; ++k, t *= 0.5) {
      trial = clip(mu + t * step);
      const Vector rt = residual(trial);
      if (rt.squaredNorm() < cost) {
        improved = true;
        res = rt;
        break;
      }
    }
    if (!improved) break;
    const double rel = (trial - mu).norm() / std::max(mu.norm(), 1e-300);
    mu = trial;
    const double new_cost = res.squaredNorm();
    cost = new_cost;
    if (rel < 1e-10) {
      ++sweep;
      break;
    }
  }
  r.iterations = sweep;
  r.mu_hat = mu;
  r.theta_hat = mu.unaryExpr([&](double v) { return phi * std::pow(v, c); });
  r.objective_value = cost;
  return r;
}

struct PluginProjections {
  ProjectionSet projections;
  Matrix sigma_hat;
  bool ridge_fallback = false;
};

/// Optimal projections evaluated at the sample covariance (divisor n). A
/// singular estimate is regularized by 1e-8 * trace / J on the diagonal and
/// the fallback is flagged.
inline PluginProjections plugin_optimal_projections(const RoutingMatrix& a,
                                                    const SampleBlock& samples) {
  if (samples.dimension() != a.rows())
    throw PreconditionError("sample dimension does not match routing matrix rows");
  PluginProjections out;
  out.sigma_hat = samples.covariance();
  bool singular = samples.size() <= samples.dimension();
  if (!singular) {
    try {
      linalg::SpdEigen check(out.sigma_hat, "sample covariance");
      singular = check.condition() > 1e14;
    } catch (const SingularCovariance&) {
      singular = true;
    }
  }
  if (singular) {
    const double eps = 1e-8 * out.sigma_hat.trace() / static_cast<double>(a.rows());
    out.sigma_hat.diagonal().array() += (eps > 0.0 ? eps : 1e-8);
    out.ridge_fallback = true;
  }
  out.projections = optimal_projections(a, out.sigma_hat);
  return out;
}

}  // namespace tomo
