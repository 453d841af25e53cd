#pragma once

// Distribution and parameter error metrics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tomo/cf_gmm.hpp"
#include "tomo/errors.hpp"
#include "tomo/linalg.hpp"

namespace tomo {

/// A CDF tabulated on an increasing grid. Between grid points the curve is
/// treated as a step function (right-continuous), unless an exact quantile
/// function is attached, in which case that is used for Mallows distances.
struct CdfCurve {
  std::vector<double> x;
  std::vector<double> f;
  std::function<double(double)> quantile;   // optional exact generalized inverse
  std::optional<double> stddev;             // closed form, when known
  std::string tag;

  void validate() const {
    if (x.empty() || x.size() != f.size()) throw PreconditionError("CDF curve needs matching, nonempty grid and values");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || !std::isfinite(f[i])) throw PreconditionError("CDF curve has non-finite entries");
      if (f[i] < 0.0 || f[i] > 1.0) throw PreconditionError("CDF values must lie in [0, 1]");
      if (i > 0 && (x[i] <= x[i - 1] || f[i] < f[i - 1]))
        throw PreconditionError("CDF grid must increase and values must not decrease");
    }
  }

  /// inf{x : F(x) >= p}; the top of the grid if the tabulated curve never reaches p.
  double inverse(double p) const {
    if (quantile) return quantile(p);
    const auto it = std::lower_bound(f.begin(), f.end(), p);
    if (it == f.end()) return x.back();
    return x[static_cast<std::size_t>(it - f.begin())];
  }

  /// Standard deviation: the closed form when available, otherwise from the
  /// curve's quantiles.
  double standard_deviation(int n_nodes = 100000) const {
    if (stddev) return *stddev;
    double m1 = 0.0, m2 = 0.0;
    for (int k = 0; k < n_nodes; ++k) {
      const double q = inverse((k + 0.5) / n_nodes);
      m1 += q;
      m2 += q * q;
    }
    m1 /= n_nodes;
    m2 /= n_nodes;
    return std::sqrt(std::max(0.0, m2 - m1 * m1));
  }
};

/// Tabulates any CDF on a grid.
inline CdfCurve tabulate_cdf(const std::function<double(double)>& cdf, const std::vector<double>& grid,
                             std::string tag = {}) {
  CdfCurve c;
  c.x = grid;
  c.f.reserve(grid.size());
  double running = 0.0;
  for (double g : grid) {
    running = std::max(running, std::clamp(cdf(g), 0.0, 1.0));
    c.f.push_back(running);
  }
  c.tag = std::move(tag);
  return c;
}

inline std::vector<double> linear_grid(double lo, double hi, int points) {
  if (points < 2 || !(hi > lo)) throw PreconditionError("grid needs hi > lo and at least two points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  return g;
}

/// Delay law with P(X = 0) = 1 - u and P(X > x) = u exp(-x / v).
/// E[X^2] = 2uv^2, so var = uv^2 (2 - u).
inline double mm1_stddev(double u, double v) { return v * std::sqrt(u * (2.0 - u)); }

inline double mm1_cdf(double u, double v, double x) { return x < 0.0 ? 0.0 : 1.0 - u * std::exp(-x / v); }

inline double mm1_quantile(double u, double v, double p) {
  if (p <= 1.0 - u) return 0.0;
  return -v * std::log((1.0 - p) / u);
}

inline CdfCurve mm1_cdf_curve(double u, double v, int points = 512) {
  if (!(u > 0.0 && u < 1.0) || !(v > 0.0)) throw PreconditionError("M/M/1 law needs 0 < u < 1 and v > 0");
  const double hi = mm1_quantile(u, v, 1.0 - 1e-4);
  CdfCurve c = tabulate_cdf([&](double x) { return mm1_cdf(u, v, x); }, linear_grid(0.0, hi, points), "mm1");
  c.quantile = [u, v](double p) { return mm1_quantile(u, v, p); };
  c.stddev = mm1_stddev(u, v);
  return c;
}

inline CdfCurve mixture_cdf_curve(const MixtureLinkModel& model, double hi, int points = 512) {
  CdfCurve c = tabulate_cdf([&](double x) { return mixture_cdf(model, x); }, linear_grid(0.0, hi, points), "mixture");
  c.quantile = [model](double p) { return mixture_quantile(model, p); };
  return c;
}

/// Integral over p in (0, 1) of |F^{-1}(p) - G^{-1}(p)|, midpoint rule.
inline double mallows_distance(const CdfCurve& f, const CdfCurve& g, int n_quantile_nodes = 10000) {
  if (n_quantile_nodes < 1) throw PreconditionError("need at least one quantile node");
  if (!f.quantile) f.validate();
  if (!g.quantile) g.validate();
  double acc = 0.0;
  for (int k = 0; k < n_quantile_nodes; ++k) {
    const double p = (k + 0.5) / n_quantile_nodes;
    acc += std::abs(f.inverse(p) - g.inverse(p));
  }
  return acc / n_quantile_nodes;
}

inline double normalized_mallows(const CdfCurve& f_true, const CdfCurve& f_hat, int n_nodes = 10000) {
  const double sigma = f_true.standard_deviation();
  if (!(sigma > 0.0)) throw DegenerateDistribution("reference distribution has zero standard deviation");
  return mallows_distance(f_true, f_hat, n_nodes) / sigma;
}

inline Vector log_abs_error(const Vector& theta_hat, const Vector& theta) {
  if (theta_hat.size() != theta.size()) throw PreconditionError("log error: length mismatch");
  if (!(theta_hat.array() > 0.0).all() || !(theta.array() > 0.0).all())
    throw PreconditionError("log error needs strictly positive entries");
  return (theta_hat.array().log() - theta.array().log()).abs();
}

}  // namespace tomo
