#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "tomo/linalg.hpp"

namespace tomo {

struct OptimizerOptions {
  double gradient_tolerance = 1e-7;   // sup-norm
  double relative_tolerance = 1e-10;  // relative objective change
  int max_iterations = 500;
  double max_step = 5.0;  // sup-norm cap on a trial step
};

struct OptimizerResult {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  Vector gradient;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Unconstrained BFGS with backtracking (Armijo) line search.
///
/// `objective(x, grad)` returns f(x) and writes the gradient; a non-finite
/// return marks x as infeasible and makes the line search back off.
/// `h0`, when given, seeds the inverse-Hessian approximation.
template <typename Objective>
OptimizerResult minimize_bfgs(Objective&& objective, Vector x0, const OptimizerOptions& opts = {},
                              const Matrix* h0 = nullptr) {
  OptimizerResult res;
  const Eigen::Index n = x0.size();
  Vector g(n);
  double f = objective(x0, g);
  res.x = std::move(x0);
  res.value = f;
  res.gradient = g;
  if (!std::isfinite(f) || !g.allFinite()) {
    res.message = "objective is not finite at the starting point";
    return res;
  }

  Matrix h = h0 ? *h0 : Matrix::Identity(n, n);
  bool h_is_identity = h0 == nullptr;
  Vector x_new(n), g_new(n);

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    Vector p = -h * g;
    if (g.dot(p) >= 0.0) {
      h.setIdentity();
      h_is_identity = true;
      p = -g;
    }
    if (const double m = p.lpNorm<Eigen::Infinity>(); m > opts.max_step) p *= opts.max_step / m;

    const double slope = g.dot(p);
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * p;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!h_is_identity) {
        h.setIdentity();
        h_is_identity = true;
        continue;
      }
      res.message = "line search failed";
      res.iterations = it + 1;
      return res;
    }

    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    const double change = std::abs(f_new - f);
    res.x = x_new;
    g = g_new;
    f = f_new;
    res.value = f;
    res.gradient = g;

    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (h_is_identity) h *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Vector hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
           rho * (hy * s.transpose() + s * hy.transpose());
      h_is_identity = false;
    }

    if (change <= opts.relative_tolerance * std::max(1.0, std::abs(f))) {
      res.converged = true;
      res.iterations = it + 1;
      res.message = "relative objective change below tolerance";
      return res;
    }
    res.iterations = it + 1;
  }
  if (!res.converged) {
    if (g.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
    } else if (res.message.empty()) {
      res.message = "maximum iterations reached";
    }
  }
  return res;
}

}  // namespace tomo
