#pragma once

// Convex quadratic programs over the probability simplex.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tomo/errors.hpp"
#include "tomo/linalg.hpp"

namespace tomo {

struct SimplexQpResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes x'Hx - 2b'x subject to x >= 0, sum(x) = 1, by a primal
/// active-set method started from the barycentre. Steps are minimum-norm and a
/// small ridge toward the barycentre makes the minimizer unique when H is
/// singular, so ties resolve toward uniform weights.
inline SimplexQpResult solve_simplex_qp(const Matrix& h, const Vector& b, double tol = 1e-10,
                                        int max_iterations = 0) {
  const Eigen::Index n = b.size();
  if (h.rows() != n || h.cols() != n)
    throw PreconditionError("simplex QP: dimension mismatch");
  if (n == 0) throw PreconditionError("simplex QP: empty problem");
  if (max_iterations <= 0) max_iterations = 50 * static_cast<int>(n) + 50;

  const double scale = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const double ridge = 1e-12 * scale;
  const Vector centre = Vector::Constant(n, 1.0 / static_cast<double>(n));
  // Work with 0.5 x'Qx + c'x.
  const Matrix q = 2.0 * linalg::symmetrize(h) + 2.0 * ridge * Matrix::Identity(n, n);
  const Vector c = -2.0 * b - 2.0 * ridge * centre;

  Vector x = centre;
  std::vector<bool> bound(static_cast<std::size_t>(n), false);

  SimplexQpResult res;
  const double step_tol = tol;
  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!bound[static_cast<std::size_t>(i)]) free.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free.size());
    const Vector g = q * x + c;

    // Equality-constrained step on the free set.
    Matrix kkt = Matrix::Zero(nf + 1, nf + 1);
    Vector rhs(nf + 1);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index bb = 0; bb < nf; ++bb) kkt(a, bb) = q(free[a], free[bb]);
      kkt(a, nf) = 1.0;
      kkt(nf, a) = 1.0;
      rhs(a) = -g(free[a]);
    }
    rhs(nf) = 0.0;
    const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    Vector d = Vector::Zero(n);
    for (Eigen::Index a = 0; a < nf; ++a) d(free[a]) = sol(a);
    const double lambda = sol(nf);

    if (d.cwiseAbs().maxCoeff() <= step_tol) {
      // Multipliers of the bound constraints: mu_i = g_i + lambda.
      Eigen::Index worst = -1;
      double worst_mu = -tol * std::max(1.0, g.cwiseAbs().maxCoeff());
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!bound[static_cast<std::size_t>(i)]) continue;
        const double mu = g(i) + lambda;
        if (mu < worst_mu) {
          worst_mu = mu;
          worst = i;
        }
      }
      if (worst < 0) {
        res.converged = true;
        break;
      }
      bound[static_cast<std::size_t>(worst)] = false;
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i : free) {
      if (d(i) < 0.0) {
        const double a = -x(i) / d(i);
        if (a < alpha) {
          alpha = a;
          blocking = i;
        }
      }
    }
    x += alpha * d;
    if (blocking >= 0) {
      x(blocking) = 0.0;
      bound[static_cast<std::size_t>(blocking)] = true;
    }
  }

  x = x.cwiseMax(0.0);
  x /= x.sum();
  res.x = x;
  res.value = x.dot(h * x) - 2.0 * b.dot(x);
  return res;
}

}  // namespace tomo
