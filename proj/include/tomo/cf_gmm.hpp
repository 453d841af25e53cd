#pragma once

// Characteristic-function GMM fits of mixture link-delay models.
//
// Each link delay is a mixture of an atom at zero, uniform pieces on fixed
// bins and an exponential tail beyond the last edge. The objective compares
// empirical and model characteristic functions of linear functionals of Y at
// Monte-Carlo frequency nodes drawn once from a Gaussian weight.

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tomo/errors.hpp"
#include "tomo/estimators.hpp"
#include "tomo/identifiability.hpp"
#include "tomo/linalg.hpp"
#include "tomo/rng.hpp"
#include "tomo/simplex_qp.hpp"
#include "tomo/topology.hpp"

namespace tomo {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Fixed support of one link's mixture: bin edges e_1 < ... < e_m (e_0 = 0)
/// and the rate of the exponential tail starting at e_m.
struct BinSpec {
  std::vector<double> edges;
  double tail_rate = 1.0;

  void validate() const {
    double prev = 0.0;
    for (double e : edges) {
      if (!std::isfinite(e) || e <= prev) throw PreconditionError("bin edges must be positive and strictly increasing");
      prev = e;
    }
    if (!std::isfinite(tail_rate) || tail_rate <= 0.0) throw PreconditionError("tail rate must be positive");
  }
};

/// Bins for a delay law with P(X = 0) = 1 - u and an Exp(mean v) positive
/// part: the m edges cut the positive part into m + 1 equal-probability
/// pieces, the last being the exponential tail with rate 1/v.
inline BinSpec quantile_bin_spec(double u, double v, int m) {
  if (!(u > 0.0 && u < 1.0) || !(v > 0.0) || m < 0) throw PreconditionError("quantile_bin_spec: bad arguments");
  BinSpec spec;
  for (int j = 1; j <= m; ++j) spec.edges.push_back(-v * std::log1p(-static_cast<double>(j) / (m + 1)));
  spec.tail_rate = 1.0 / v;
  return spec;
}

struct MixtureLinkModel {
  double atom_at_zero = 1.0;
  std::vector<double> bin_edges;
  std::vector<double> bin_weights;
  double tail_weight = 0.0;
  double tail_rate = 1.0;

  MixtureLinkModel() = default;

  /// Uniform weights over atom, bins and tail.
  explicit MixtureLinkModel(const BinSpec& spec) : bin_edges(spec.edges), tail_rate(spec.tail_rate) {
    const double w = 1.0 / static_cast<double>(spec.edges.size() + 2);
    atom_at_zero = w;
    bin_weights.assign(spec.edges.size(), w);
    tail_weight = w;
  }

  Eigen::Index n_weights() const { return static_cast<Eigen::Index>(bin_edges.size()) + 2; }

  /// (p0, p1..pm, p_tail)
  Vector weights() const {
    Vector w(n_weights());
    w(0) = atom_at_zero;
    for (std::size_t j = 0; j < bin_weights.size(); ++j) w(static_cast<Eigen::Index>(j) + 1) = bin_weights[j];
    w(n_weights() - 1) = tail_weight;
    return w;
  }

  void set_weights(const Vector& w) {
    if (w.size() != n_weights()) throw PreconditionError("weight vector has wrong length");
    atom_at_zero = w(0);
    for (std::size_t j = 0; j < bin_weights.size(); ++j) bin_weights[j] = w(static_cast<Eigen::Index>(j) + 1);
    tail_weight = w(n_weights() - 1);
  }

  double tail_start() const { return bin_edges.empty() ? 0.0 : bin_edges.back(); }

  void validate() const {
    BinSpec{bin_edges, tail_rate}.validate();
    if (bin_weights.size() != bin_edges.size()) throw PreconditionError("one weight per bin required");
    const Vector w = weights();
    if (!w.allFinite() || w.minCoeff() < 0.0) throw PreconditionError("mixture weights must be nonnegative");
    if (std::abs(w.sum() - 1.0) > 1e-12) throw PreconditionError("mixture weights must sum to one");
  }
};

namespace cf {

/// sin(x)/x, accurate near zero.
inline double sinc(double x) {
  if (std::abs(x) < 1e-6) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

/// CF of Uniform[a, b] at t.
inline Complex uniform(double a, double b, double t) {
  const double half = 0.5 * t * (b - a);
  return std::polar(sinc(half), 0.5 * t * (a + b));
}

/// CF of start + Exp(rate) at t.
inline Complex shifted_exponential(double start, double rate, double t) {
  return std::polar(1.0, t * start) / Complex(1.0, -t / rate);
}

/// Row of basis CFs (atom, bins, tail) at t.
inline void basis_row(const std::vector<double>& edges, double tail_rate, double t, Complex* out) {
  out[0] = 1.0;
  double prev = 0.0;
  for (std::size_t j = 0; j < edges.size(); ++j) {
    out[j + 1] = uniform(prev, edges[j], t);
    prev = edges[j];
  }
  out[edges.size() + 1] = shifted_exponential(prev, tail_rate, t);
}

}  // namespace cf

inline Complex mixture_cf(const MixtureLinkModel& model, double t) {
  std::vector<Complex> basis(static_cast<std::size_t>(model.n_weights()));
  cf::basis_row(model.bin_edges, model.tail_rate, t, basis.data());
  const Vector w = model.weights();
  Complex acc = 0.0;
  for (Eigen::Index c = 0; c < w.size(); ++c) acc += w(c) * basis[static_cast<std::size_t>(c)];
  return acc;
}

inline Complex projection_cf(const RoutingMatrix& a, const std::vector<MixtureLinkModel>& models,
                             const Vector& beta, double t) {
  if (static_cast<Eigen::Index>(models.size()) != a.cols())
    throw PreconditionError("one mixture model per component required");
  if (beta.size() != a.rows()) throw PreconditionError("projection length must match measurements");
  const Vector gamma = a.matrix().transpose() * beta;
  Complex acc = 1.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) acc *= mixture_cf(models[static_cast<std::size_t>(i)], gamma(i) * t);
  return acc;
}

inline Complex empirical_cf(const Vector& z, double t) {
  if (z.size() < 1) throw PreconditionError("empirical CF needs at least one sample");
  double re = 0.0, im = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    re += std::cos(t * z(j));
    im += std::sin(t * z(j));
  }
  const double n = static_cast<double>(z.size());
  return {re / n, im / n};
}

/// Gaussian weight measure on each frequency axis, applied after scaling each
/// functional of Y to unit sample variance.
struct CFWeightSpec {
  enum class Kind { gaussian };
  Kind kind = Kind::gaussian;
  double std = 5.0;
  int n_nodes = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(std > 0.0) || !std::isfinite(std)) throw PreconditionError("CF weight std must be positive");
    if (n_nodes < 1) throw PreconditionError("CF weight needs at least one node");
  }
};

/// Frequency nodes omega_q in R^J with integration weights and the empirical
/// CF of Y at each node.
struct FrequencyDesign {
  Matrix omega;       // Q x J
  Vector weight;      // Q
  ComplexVector ecf;  // Q

  Eigen::Index size() const { return omega.rows(); }
};

namespace detail {

inline ComplexVector empirical_cf_nodes(const Matrix& y, const Matrix& omega) {
  const Matrix phase = y * omega.transpose();  // n x Q
  const double n = static_cast<double>(y.rows());
  ComplexVector out(omega.rows());
  for (Eigen::Index q = 0; q < omega.rows(); ++q) {
    double re = 0.0, im = 0.0;
    for (Eigen::Index r = 0; r < phase.rows(); ++r) {
      re += std::cos(phase(r, q));
      im += std::sin(phase(r, q));
    }
    out(q) = Complex(re / n, im / n);
  }
  return out;
}

inline double unit_scale(const Vector& z) {
  const double m = z.mean();
  const double var = (z.array() - m).square().mean();
  return var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
}

}  // namespace detail

/// Nodes t * beta_k / sd(beta_k'Y) with t ~ N(0, std^2), n_nodes per projection.
inline FrequencyDesign projection_frequencies(const SampleBlock& samples, const ProjectionSet& projections,
                                              const CFWeightSpec& weight) {
  weight.validate();
  const Matrix& b = projections.directions();
  if (b.cols() != samples.dimension()) throw PreconditionError("projection width must match sample dimension");
  const Eigen::Index k = b.rows(), nodes = weight.n_nodes;
  FrequencyDesign d;
  d.omega.resize(k * nodes, b.cols());
  d.weight = Vector::Constant(k * nodes, 1.0 / static_cast<double>(nodes));
  std::normal_distribution<double> nd(0.0, weight.std);
  for (Eigen::Index p = 0; p < k; ++p) {
    const Vector beta = b.row(p).transpose();
    const Vector scaled = beta * detail::unit_scale(samples.data() * beta);
    Rng gen = rng::make_rng(weight.seed, "cf-nodes-1d", static_cast<std::uint64_t>(p));
    for (Eigen::Index q = 0; q < nodes; ++q) d.omega.row(p * nodes + q) = nd(gen) * scaled.transpose();
  }
  d.ecf = detail::empirical_cf_nodes(samples.data(), d.omega);
  return d;
}

/// Bivariate nodes for every coordinate pair (j, j'): s e_j/sd_j + t e_j'/sd_j'
/// with s, t independent N(0, std^2).
inline FrequencyDesign pair_frequencies(const SampleBlock& samples, const CFWeightSpec& weight) {
  weight.validate();
  const Eigen::Index jn = samples.dimension(), nodes = weight.n_nodes;
  if (jn < 2) throw PreconditionError("pairwise design needs at least two measurements");
  Vector scale(jn);
  for (Eigen::Index j = 0; j < jn; ++j) scale(j) = detail::unit_scale(samples.data().col(j));
  const Eigen::Index pairs = jn * (jn - 1) / 2;
  FrequencyDesign d;
  d.omega = Matrix::Zero(pairs * nodes, jn);
  d.weight = Vector::Constant(pairs * nodes, 1.0 / static_cast<double>(nodes));
  std::normal_distribution<double> nd(0.0, weight.std);
  Eigen::Index p = 0;
  for (Eigen::Index j = 0; j < jn; ++j) {
    for (Eigen::Index l = j + 1; l < jn; ++l, ++p) {
      Rng gen = rng::make_rng(weight.seed, "cf-nodes-2d", static_cast<std::uint64_t>(p));
      for (Eigen::Index q = 0; q < nodes; ++q) {
        const double s = nd(gen);
        const double t = nd(gen);
        d.omega(p * nodes + q, j) = s * scale(j);
        d.omega(p * nodes + q, l) = t * scale(l);
      }
    }
  }
  d.ecf = detail::empirical_cf_nodes(samples.data(), d.omega);
  return d;
}

namespace detail {

/// Per-link basis CFs at gamma_qi = omega_q' A^i: one Q x (m_i + 2) matrix per link.
inline std::vector<ComplexMatrix> link_bases(const RoutingMatrix& a, const std::vector<MixtureLinkModel>& models,
                                             const FrequencyDesign& design) {
  const Matrix gamma = design.omega * a.matrix();  // Q x I
  std::vector<ComplexMatrix> out;
  out.reserve(models.size());
  std::vector<Complex> row;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    ComplexMatrix basis(design.size(), m.n_weights());
    row.resize(static_cast<std::size_t>(m.n_weights()));
    for (Eigen::Index q = 0; q < design.size(); ++q) {
      cf::basis_row(m.bin_edges, m.tail_rate, gamma(q, static_cast<Eigen::Index>(i)), row.data());
      for (Eigen::Index c = 0; c < m.n_weights(); ++c) basis(q, c) = row[static_cast<std::size_t>(c)];
    }
    out.push_back(std::move(basis));
  }
  return out;
}

inline void check_models(const RoutingMatrix& a, const std::vector<MixtureLinkModel>& models) {
  if (static_cast<Eigen::Index>(models.size()) != a.cols())
    throw PreconditionError("one mixture model per component required");
  for (const auto& m : models) m.validate();
}

inline double weighted_residual(const FrequencyDesign& design, const ComplexVector& model_cf) {
  return (design.weight.array() * (design.ecf - model_cf).array().abs2()).sum();
}

}  // namespace detail

inline double cf_objective(const RoutingMatrix& a, const std::vector<MixtureLinkModel>& models,
                           const FrequencyDesign& design) {
  detail::check_models(a, models);
  if (design.omega.cols() != a.rows()) throw PreconditionError("frequency design width must match measurements");
  const auto bases = detail::link_bases(a, models, design);
  ComplexVector prod = ComplexVector::Ones(design.size());
  for (std::size_t i = 0; i < models.size(); ++i) prod.array() *= (bases[i] * models[i].weights()).array();
  return detail::weighted_residual(design, prod);
}

inline double cf_objective(const RoutingMatrix& a, const std::vector<MixtureLinkModel>& models,
                           const ProjectionSet& projections, const SampleBlock& samples, const CFWeightSpec& weight) {
  return cf_objective(a, models, projection_frequencies(samples, projections, weight));
}

struct CfFitOptions {
  double tol = 1e-6;  // relative objective decrease per sweep
  int max_sweeps = 1000;
  double qp_tol = 1e-10;
};

struct CfFitResult {
  std::vector<MixtureLinkModel> models;
  double objective = 0.0;
  std::vector<double> objective_trace;  // after each link update, starting with the initial value
  int sweeps = 0;
  bool converged = false;
  int rejected_updates = 0;
};

/// Cyclic per-link fit. With the other links held fixed, the objective is a
/// quadratic in link i's weights; each subproblem is solved exactly on the
/// simplex.
inline CfFitResult fit_cf_gmm(const RoutingMatrix& a, const FrequencyDesign& design,
                              std::vector<MixtureLinkModel> init, const CfFitOptions& options = {}) {
  detail::check_models(a, init);
  if (design.omega.cols() != a.rows()) throw PreconditionError("frequency design width must match measurements");
  const auto bases = detail::link_bases(a, init, design);
  const std::size_t links = init.size();
  const Eigen::Index nq = design.size();

  std::vector<ComplexVector> psi(links);
  for (std::size_t i = 0; i < links; ++i) psi[i] = bases[i] * init[i].weights();
  auto product_except = [&](std::size_t skip) {
    ComplexVector p = ComplexVector::Ones(nq);
    for (std::size_t i = 0; i < links; ++i)
      if (i != skip) p.array() *= psi[i].array();
    return p;
  };

  CfFitResult res;
  res.models = std::move(init);
  double current = detail::weighted_residual(design, product_except(links));
  res.objective_trace.push_back(current);
  const Eigen::ArrayXd sw = design.weight.array().sqrt();

  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    const double sweep_start = current;
    for (std::size_t i = 0; i < links; ++i) {
      const ComplexVector others = product_except(i);
      // h_qc = w_q^{1/2} * others_q * basis_qc; target w_q^{1/2} * ecf_q.
      ComplexMatrix hmat = (others.array() * sw).matrix().asDiagonal() * bases[i];
      const ComplexVector target = (design.ecf.array() * sw).matrix();
      const Matrix h = (hmat.adjoint() * hmat).real();
      const Vector b = (hmat.adjoint() * target).real();
      const SimplexQpResult qp = solve_simplex_qp(h, b, options.qp_tol);
      const ComplexVector psi_new = bases[i] * qp.x;
      const double candidate = detail::weighted_residual(design, ComplexVector(others.array() * psi_new.array()));
      if (candidate <= current) {
        res.models[i].set_weights(qp.x);
        psi[i] = psi_new;
        current = candidate;
      } else {
        ++res.rejected_updates;
      }
      res.objective_trace.push_back(current);
    }
    res.sweeps = sweep + 1;
    if (sweep_start - current <= options.tol * std::max(current, 1e-300)) {
      res.converged = true;
      break;
    }
  }
  res.objective = current;
  return res;
}

inline CfFitResult fit_cf_gmm(const RoutingMatrix& a, const SampleBlock& samples, const ProjectionSet& projections,
                              const std::vector<BinSpec>& bins, const CFWeightSpec& weight,
                              const CfFitOptions& options = {}) {
  if (static_cast<Eigen::Index>(bins.size()) != a.cols()) throw PreconditionError("one bin spec per component required");
  std::vector<MixtureLinkModel> init;
  for (const auto& b : bins) {
    b.validate();
    init.emplace_back(b);
  }
  return fit_cf_gmm(a, projection_frequencies(samples, projections, weight), std::move(init), options);
}

inline double mixture_cdf(const MixtureLinkModel& model, double x) {
  if (x < 0.0) return 0.0;
  double f = model.atom_at_zero;
  double prev = 0.0;
  for (std::size_t j = 0; j < model.bin_edges.size(); ++j) {
    const double e = model.bin_edges[j];
    if (x >= e) {
      f += model.bin_weights[j];
    } else {
      f += model.bin_weights[j] * (x - prev) / (e - prev);
      return std::min(f, 1.0);
    }
    prev = e;
  }
  f += model.tail_weight * -std::expm1(-model.tail_rate * (x - prev));
  return std::min(f, 1.0);
}

/// Generalized inverse inf{x : F(x) >= p} for p in (0, 1).
inline double mixture_quantile(const MixtureLinkModel& model, double p) {
  if (!(p > 0.0 && p < 1.0)) throw PreconditionError("quantile level must lie in (0, 1)");
  double acc = model.atom_at_zero;
  if (p <= acc) return 0.0;
  double prev = 0.0;
  for (std::size_t j = 0; j < model.bin_edges.size(); ++j) {
    const double w = model.bin_weights[j];
    const double e = model.bin_edges[j];
    if (w > 0.0 && p <= acc + w) return prev + (p - acc) / w * (e - prev);
    acc += w;
    prev = e;
  }
  if (model.tail_weight <= 0.0) return prev;
  const double r = std::clamp((p - acc) / model.tail_weight, 0.0, 1.0);
  if (r >= 1.0) return std::numeric_limits<double>::infinity();
  return prev - std::log1p(-r) / model.tail_rate;
}

inline double mixture_mean(const MixtureLinkModel& model) {
  double m = 0.0, prev = 0.0;
  for (std::size_t j = 0; j < model.bin_edges.size(); ++j) {
    m += model.bin_weights[j] * 0.5 * (prev + model.bin_edges[j]);
    prev = model.bin_edges[j];
  }
  return m + model.tail_weight * (prev + 1.0 / model.tail_rate);
}

inline void to_json(nlohmann::json& j, const MixtureLinkModel& m) {
  j = nlohmann::json{{"atom_at_zero", m.atom_at_zero}, {"bin_edges", m.bin_edges}, {"bin_weights", m.bin_weights},
                     {"tail_weight", m.tail_weight},   {"tail_rate", m.tail_rate}};
}

inline void from_json(const nlohmann::json& j, MixtureLinkModel& m) {
  j.at("atom_at_zero").get_to(m.atom_at_zero);
  j.at("bin_edges").get_to(m.bin_edges);
  j.at("bin_weights").get_to(m.bin_weights);
  j.at("tail_weight").get_to(m.tail_weight);
  j.at("tail_rate").get_to(m.tail_rate);
  m.validate();
}

}  // namespace tomo
