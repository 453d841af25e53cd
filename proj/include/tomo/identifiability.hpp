#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomo/errors.hpp"
#include "tomo/linalg.hpp"
#include "tomo/topology.hpp"

namespace tomo {

/// K projection directions over measurement space, stored as the rows of a
/// K x J matrix.
///
/// Rows must be finite and nonzero. Proportional rows are allowed (they are
/// reported by `proportional_pairs`) because the downstream checks already
/// diagnose the rank loss they cause.
class ProjectionSet {
 public:
  ProjectionSet() = default;

  explicit ProjectionSet(Matrix directions) : directions_(std::move(directions)) {
    if (directions_.rows() == 0 || directions_.cols() == 0)
      throw PreconditionError("projection set is empty");
    if (!directions_.allFinite()) throw PreconditionError("projection set has non-finite entries");
    for (Eigen::Index k = 0; k < directions_.rows(); ++k)
      if (directions_.row(k).cwiseAbs().maxCoeff() == 0.0)
        throw PreconditionError("projection " + std::to_string(k) + " is the zero vector");
  }

  Eigen::Index size() const { return directions_.rows(); }
  Eigen::Index dimension() const { return directions_.cols(); }
  const Matrix& directions() const { return directions_; }
  auto direction(Eigen::Index k) const { return directions_.row(k).transpose(); }

  /// K x I matrix with rows gamma_k = A^T beta_k.
  Matrix gamma(const RoutingMatrix& a) const {
    if (a.rows() != dimension())
      throw PreconditionError("projection dimension " + std::to_string(dimension()) +
                              " does not match routing matrix rows " + std::to_string(a.rows()));
    return directions_ * a.matrix();
  }

  /// Pairs of rows that are scalar multiples of each other.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> proportional_pairs(double tol = 1e-12) const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    for (Eigen::Index k = 0; k < size(); ++k) {
      const Vector u = directions_.row(k).normalized();
      for (Eigen::Index l = k + 1; l < size(); ++l) {
        const Vector v = directions_.row(l).normalized();
        if (std::abs(std::abs(u.dot(v)) - 1.0) < tol) out.emplace_back(k, l);
      }
    }
    return out;
  }

 private:
  Matrix directions_;
};

struct IdentifiabilityReport {
  bool identifiable_all = false;
  bool identifiable_even = false;
  std::optional<int> first_failing_order;
  std::vector<std::pair<int, Eigen::Index>> rank_by_order;  // (n, rank of M_n)
  int max_order_checked = 0;
  Eigen::Index projections = 0;  // K
  Eigen::Index components = 0;   // I
  std::string note;
};

inline void to_json(nlohmann::json& j, const IdentifiabilityReport& r) {
  j = nlohmann::json{{"identifiable_all", r.identifiable_all},
                     {"identifiable_even", r.identifiable_even},
                     {"first_failing_order", r.first_failing_order
                                                 ? nlohmann::json(*r.first_failing_order)
                                                 : nlohmann::json(nullptr)},
                     {"max_order_checked", r.max_order_checked},
                     {"projections", r.projections},
                     {"components", r.components}};
  auto table = nlohmann::json::array();
  for (const auto& [n, rank] : r.rank_by_order) table.push_back({{"order", n}, {"rank", rank}});
  j["rank_by_order"] = std::move(table);
  if (!r.note.empty()) j["note"] = r.note;
}

/// Elementwise n-th power of gamma = B A.
inline Matrix power_matrix(const ProjectionSet& projections, const RoutingMatrix& a, int n) {
  if (n < 1) throw PreconditionError("power order must be >= 1");
  const Matrix g = projections.gamma(a);
  return g.unaryExpr([n](double x) { return std::pow(x, n); });
}

/// Rank of M_n after scaling every row to unit sup-norm; the entries of M_n
/// grow like |gamma|^n so unscaled rows would swamp the singular values.
inline Eigen::Index power_matrix_rank(const Matrix& m, double rank_tolerance) {
  Matrix scaled = m;
  for (Eigen::Index k = 0; k < scaled.rows(); ++k) {
    const double s = scaled.row(k).cwiseAbs().maxCoeff();
    if (s > 0.0) scaled.row(k) /= s;
  }
  return linalg::numerical_rank(scaled, rank_tolerance);
}

/// Full-column-rank test of M_n for n = 2..max_order.
///
/// Identifiability proper requires every n >= 2; orders beyond `max_order`
/// are not examined. Even orders alone determine the even cumulants, hence
/// the separate `identifiable_even` verdict.
inline IdentifiabilityReport check_identifiability(const ProjectionSet& projections,
                                                   const RoutingMatrix& a, int max_order = 20,
                                                   double rank_tolerance = 1e-9) {
  if (max_order < 2) throw PreconditionError("max_order must be >= 2");
  IdentifiabilityReport r;
  r.max_order_checked = max_order;
  r.projections = projections.size();
  r.components = a.cols();
  const Matrix g = projections.gamma(a);

  if (projections.size() < a.cols()) {
    r.first_failing_order = 2;
    r.note = "fewer projections than latent components (K < I)";
    return r;
  }

  bool all = true, even = true;
  for (int n = 2; n <= max_order; ++n) {
    const Matrix mn = g.unaryExpr([n](double x) { return std::pow(x, n); });
    const Eigen::Index rank = power_matrix_rank(mn, rank_tolerance);
    r.rank_by_order.emplace_back(n, rank);
    if (rank < a.cols()) {
      all = false;
      if (n % 2 == 0) even = false;
      if (!r.first_failing_order) r.first_failing_order = n;
    }
  }
  r.identifiable_all = all;
  r.identifiable_even = even;
  return r;
}

/// Closed-form det(M_n) for the two-leaf tree with projections Y1, Y2, Y1 + a Y2.
inline double two_leaf_determinant(double a, int n) {
  if (n < 2) throw PreconditionError("two_leaf_determinant needs n >= 2");
  return std::pow(1.0 + a, n) - std::pow(a, n) - 1.0;
}

/// The projections Y1, Y2, Y1 + a Y2 on the two-leaf tree.
inline ProjectionSet two_leaf_projections(double a) {
  Matrix b(3, 2);
  b << 1.0, 0.0, 0.0, 1.0, 1.0, a;
  return ProjectionSet(std::move(b));
}

}  // namespace tomo
