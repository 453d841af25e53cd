#pragma once

// Data generators and experiment drivers.
//
// Every replicate owns an RNG stream derived from (seed, tag, run index), so
// results do not depend on the number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tomo/cf_gmm.hpp"
#include "tomo/errors.hpp"
#include "tomo/estimators.hpp"
#include "tomo/gaussian.hpp"
#include "tomo/metrics.hpp"
#include "tomo/rng.hpp"
#include "tomo/topology.hpp"

namespace tomo {

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
/// handled exactly once; callers write results into per-index slots.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Median of the finite entries; NaN when there are none.
inline double finite_median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

/// Row-wise medians of a runs x parameters table.
inline Vector column_medians(const Matrix& table) {
  Vector out(table.cols());
  for (Eigen::Index c = 0; c < table.cols(); ++c) {
    std::vector<double> col(table.col(c).data(), table.col(c).data() + table.rows());
    out(c) = finite_median(std::move(col));
  }
  return out;
}

// ---------------------------------------------------------------- samplers

struct OdSample {
  SampleBlock x;
  SampleBlock y;
};

/// X_i ~ N(mu_i, phi mu_i^c) independently; Y = A X row-wise.
inline OdSample sample_gaussian_od(const RoutingMatrix& a, const Vector& means, const MeanVarianceRelation& relation,
                                   int n, Rng& gen, SeedProvenance provenance = {}) {
  relation.validate();
  if (means.size() != a.cols()) throw PreconditionError("one mean per OD pair required");
  if (!(means.array() > 0.0).all()) throw PreconditionError("OD means must be positive");
  if (n < 2) throw PreconditionError("need at least two samples");
  const Vector sd = means.unaryExpr([&](double m) { return std::sqrt(relation.variance(m)); });
  Matrix x = rng::standard_normal(n, a.cols(), gen);
  x = x * sd.asDiagonal();
  x.rowwise() += means.transpose();
  Matrix y = x * a.matrix().transpose();
  return {SampleBlock(std::move(x), provenance), SampleBlock(std::move(y), provenance)};
}

/// Delays with P(X = 0) = 1 - u and an Exp(mean v) positive part.
inline Vector sample_mm1_delay(double u, double v, int n, Rng& gen) {
  if (!(u > 0.0 && u < 1.0) || !(v > 0.0)) throw PreconditionError("M/M/1 delay needs 0 < u < 1 and v > 0");
  if (n < 1) throw PreconditionError("need at least one delay sample");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0 / v);
  Vector out(n);
  for (int k = 0; k < n; ++k) out(k) = unif(gen) < u ? expo(gen) : 0.0;
  return out;
}

// ------------------------------------------------------- asymptotic study

struct AsymptoticStudyResult {
  std::vector<std::string> columns;  // theta, mle, one_d_opt, two_d, rand_K...
  Matrix table;                      // I x columns
  std::map<int, int> failed_draws;   // K -> non-identifiable random draws
};

/// Limit standard deviations of sqrt(n)(theta_hat - theta): MLE, optimal 1D,
/// 2D and, for each K, the per-parameter median over random K-projection draws.
inline AsymptoticStudyResult run_asymptotic_study(const RoutingMatrix& a, const Vector& theta,
                                                  const std::vector<int>& k_list, int n_replicates,
                                                  std::uint64_t seed, int threads = 1) {
  if (n_replicates < 1 && !k_list.empty()) throw PreconditionError("need at least one replicate");
  const GaussianModel model(theta);
  const Matrix sigma = model_covariance(a, model);
  AsymptoticStudyResult res;
  res.columns = {"theta", "mle", "one_d_opt", "two_d"};
  std::vector<Vector> cols = {theta, asymptotic_cov_mle(a, model).limit_std(),
                              asymptotic_cov_1d(a, model, optimal_projections(a, sigma)).limit_std(),
                              asymptotic_cov_2d(a, model).limit_std()};
  for (int k : k_list) {
    if (k < 1) throw PreconditionError("projection counts must be positive");
    Matrix draws(n_replicates, a.cols());
    parallel_for(static_cast<std::size_t>(n_replicates), threads, [&](std::size_t r) {
      Rng gen = rng::make_rng(seed, "random-projections-" + std::to_string(k), r);
      const ProjectionSet p = random_projections(sigma, k, gen);
      try {
        draws.row(static_cast<Eigen::Index>(r)) = asymptotic_cov_1d(a, model, p).limit_std().transpose();
      } catch (const NonIdentifiableDesign&) {
        draws.row(static_cast<Eigen::Index>(r)).setConstant(std::numeric_limits<double>::quiet_NaN());
      }
    });
    int failed = 0;
    for (Eigen::Index r = 0; r < draws.rows(); ++r) failed += std::isnan(draws(r, 0)) ? 1 : 0;
    res.failed_draws[k] = failed;
    res.columns.push_back("rand_" + std::to_string(k));
    cols.push_back(column_medians(draws));
  }
  res.table.resize(a.cols(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) res.table.col(static_cast<Eigen::Index>(c)) = cols[c];
  return res;
}

/// Variances drawn i.i.d. from Exp(mean 1).
inline Vector draw_exponential_theta(Eigen::Index count, std::uint64_t seed) {
  Rng gen = rng::make_rng(seed, "theta");
  std::exponential_distribution<double> expo(1.0);
  Vector t(count);
  for (Eigen::Index i = 0; i < count; ++i) t(i) = expo(gen);
  return t;
}

// ----------------------------------------------------- traffic experiment

inline const std::vector<std::string>& traffic_estimator_names() {
  static const std::vector<std::string> names = {"moment", "two_d", "one_d_opt", "mle"};
  return names;
}

struct TrafficExperimentConfig {
  int n_in = 4;
  int n_out = 4;
  bool drop_last_row = true;
  std::optional<Vector> od_means;  // drawn log-uniformly on [mean_lo, mean_hi] when absent
  double mean_lo = 1.0;
  double mean_hi = 100.0;
  MeanVarianceRelation relation{1.0, 2.0};
  int n_samples = 1000;
  int n_runs = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators = traffic_estimator_names();

  void validate() const {
    if (n_in < 1 || n_out < 1) throw PreconditionError("router needs at least one input and one output");
    if (n_samples < 2) throw PreconditionError("n_samples must be at least 2");
    if (n_runs < 1) throw PreconditionError("n_runs must be at least 1");
    if (!(mean_lo > 0.0) || !(mean_hi >= mean_lo)) throw PreconditionError("need 0 < mean_lo <= mean_hi");
    relation.validate();
    if (estimators.empty()) throw PreconditionError("no estimators selected");
    for (const auto& e : estimators)
      if (std::find(traffic_estimator_names().begin(), traffic_estimator_names().end(), e) ==
          traffic_estimator_names().end())
        throw PreconditionError("unknown traffic estimator '" + e + "'");
  }
};

inline Vector draw_log_uniform_means(Eigen::Index count, double lo, double hi, std::uint64_t seed) {
  Rng gen = rng::make_rng(seed, "od-means");
  std::uniform_real_distribution<double> unif(std::log(lo), std::log(hi));
  Vector m(count);
  for (Eigen::Index i = 0; i < count; ++i) m(i) = std::exp(unif(gen));
  return m;
}

struct TrafficExperimentResult {
  Vector od_means;
  std::vector<std::string> estimators;
  std::vector<Matrix> errors;  // per estimator: runs x I table of |log mu_hat - log mu|, NaN on failure
  Matrix medians;              // I x estimators
  std::map<std::string, int> failures;
};

inline TrafficExperimentResult run_traffic_experiment(const TrafficExperimentConfig& config, int threads = 1) {
  config.validate();
  const RoutingMatrix a = build_router_routing(config.n_in, config.n_out, config.drop_last_row);
  TrafficExperimentResult res;
  res.od_means = config.od_means ? *config.od_means
                                 : draw_log_uniform_means(a.cols(), config.mean_lo, config.mean_hi, config.seed);
  if (res.od_means.size() != a.cols())
    throw PreconditionError("od_means has " + std::to_string(res.od_means.size()) + " entries, router has " +
                            std::to_string(a.cols()) + " OD pairs");
  res.estimators = config.estimators;
  const auto ne = res.estimators.size();
  const auto runs = static_cast<std::size_t>(config.n_runs);
  res.errors.assign(ne, Matrix::Constant(config.n_runs, a.cols(), std::numeric_limits<double>::quiet_NaN()));

  EstimateOptions opts;
  opts.relation = config.relation;
  parallel_for(runs, threads, [&](std::size_t r) {
    Rng gen = rng::make_rng(config.seed, "traffic-run", r);
    const OdSample s = sample_gaussian_od(a, res.od_means, config.relation, config.n_samples, gen,
                                          {config.seed, "traffic-run", r});
    const EstimateReport mm = estimate_moment(a, s.y, config.relation);
    const Vector& init = *mm.mu_hat;
    for (std::size_t e = 0; e < ne; ++e) {
      const std::string& name = res.estimators[e];
      std::optional<EstimateReport> rep;
      try {
        if (name == "moment") {
          rep = mm;
        } else if (name == "mle") {
          rep = estimate_mle(a, s.y, init, opts);
        } else if (name == "one_d_opt") {
          rep = estimate_1d(a, s.y, plugin_optimal_projections(a, s.y).projections, init, opts);
        } else if (name == "two_d") {
          rep = estimate_2d(a, s.y, init, opts);
        }
      } catch (const Error&) {
        rep.reset();
      }
      if (rep && (name == "moment" || rep->converged) && rep->mu_hat) {
        // Estimates driven to the boundary may underflow; they count as huge errors.
        const Vector m = rep->mu_hat->cwiseMax(std::numeric_limits<double>::min());
        res.errors[e].row(static_cast<Eigen::Index>(r)) = log_abs_error(m, res.od_means).transpose();
      }
    }
  });

  res.medians.resize(a.cols(), static_cast<Eigen::Index>(ne));
  for (std::size_t e = 0; e < ne; ++e) {
    res.medians.col(static_cast<Eigen::Index>(e)) = column_medians(res.errors[e]);
    int failed = 0;
    for (Eigen::Index r = 0; r < config.n_runs; ++r) failed += std::isnan(res.errors[e](r, 0)) ? 1 : 0;
    res.failures[res.estimators[e]] = failed;
  }
  return res;
}

// ------------------------------------------------------- delay experiment

inline const std::vector<std::string>& delay_mode_names() {
  static const std::vector<std::string> names = {"two_d", "one_d_cor", "one_d_rand"};
  return names;
}

struct DelayExperimentConfig {
  Tree tree = four_leaf_tree();
  double u_lo = 0.3;
  double u_hi = 0.7;
  double v_mean = 3.0;
  int n_samples = 1000;
  int n_runs = 100;
  int bins = 10;
  CFWeightSpec weight;  // seed is replaced by a per-run stream
  CfFitOptions fit;
  std::vector<std::string> modes = delay_mode_names();
  bool redraw_link_params = false;
  std::uint64_t seed = 1;
  std::vector<int> keep_runs = {0};  // runs whose fitted models are retained for CDF export

  void validate() const {
    if (!(u_lo > 0.0 && u_lo <= u_hi && u_hi < 1.0)) throw PreconditionError("need 0 < u_lo <= u_hi < 1");
    if (!(v_mean > 0.0)) throw PreconditionError("v_mean must be positive");
    if (n_samples < 2) throw PreconditionError("n_samples must be at least 2");
    if (n_runs < 1) throw PreconditionError("n_runs must be at least 1");
    if (bins < 0) throw PreconditionError("bin count must be nonnegative");
    weight.validate();
    if (modes.empty()) throw PreconditionError("no projection modes selected");
    for (const auto& m : modes)
      if (std::find(delay_mode_names().begin(), delay_mode_names().end(), m) == delay_mode_names().end())
        throw PreconditionError("unknown delay mode '" + m + "'");
  }
};

struct LinkParams {
  Vector u;
  Vector v;
};

inline LinkParams draw_link_params(Eigen::Index links, double u_lo, double u_hi, double v_mean, std::uint64_t seed,
                                   std::uint64_t index) {
  Rng gen = rng::make_rng(seed, "link-params", index);
  std::uniform_real_distribution<double> unif(u_lo, u_hi);
  std::exponential_distribution<double> expo(1.0 / v_mean);
  LinkParams p{Vector(links), Vector(links)};
  for (Eigen::Index i = 0; i < links; ++i) {
    p.u(i) = u_lo == u_hi ? u_lo : unif(gen);
    p.v(i) = expo(gen);
  }
  return p;
}

struct DelayRunModels {
  int run = 0;
  LinkParams params;
  std::map<std::string, std::vector<MixtureLinkModel>> fits;
};

struct DelayExperimentResult {
  std::vector<std::string> modes;
  std::vector<std::string> link_labels;
  std::vector<Matrix> distances;  // per mode: runs x I normalized Mallows, NaN on failure
  Matrix medians;                 // I x modes
  std::map<std::string, int> failures;
  std::map<std::string, int> unconverged;  // fits that hit max_sweeps (kept in the medians)
  std::vector<DelayRunModels> kept;
};

inline DelayExperimentResult run_delay_experiment(const DelayExperimentConfig& config, int threads = 1) {
  config.validate();
  const RoutingMatrix a = build_tree_routing(config.tree);
  const Eigen::Index links = a.cols();
  const auto nm = config.modes.size();
  DelayExperimentResult res;
  res.modes = config.modes;
  res.link_labels = a.component_labels();
  res.distances.assign(nm, Matrix::Constant(config.n_runs, links, std::numeric_limits<double>::quiet_NaN()));
  std::vector<std::vector<int>> unconverged(nm, std::vector<int>(static_cast<std::size_t>(config.n_runs), 0));
  std::vector<std::optional<DelayRunModels>> kept(static_cast<std::size_t>(config.n_runs));

  parallel_for(static_cast<std::size_t>(config.n_runs), threads, [&](std::size_t r) {
    const LinkParams lp = draw_link_params(links, config.u_lo, config.u_hi, config.v_mean, config.seed,
                                           config.redraw_link_params ? r : 0);
    Rng gen = rng::make_rng(config.seed, "delay-run", r);
    Matrix x(config.n_samples, links);
    for (Eigen::Index i = 0; i < links; ++i) x.col(i) = sample_mm1_delay(lp.u(i), lp.v(i), config.n_samples, gen);
    const SampleBlock y(x * a.matrix().transpose(), {config.seed, "delay-run", r});

    std::vector<BinSpec> bins;
    std::vector<MixtureLinkModel> init;
    std::vector<CdfCurve> truth;
    for (Eigen::Index i = 0; i < links; ++i) {
      bins.push_back(quantile_bin_spec(lp.u(i), lp.v(i), config.bins));
      init.emplace_back(bins.back());
      truth.push_back(mm1_cdf_curve(lp.u(i), lp.v(i)));
    }
    CFWeightSpec weight = config.weight;
    weight.seed = rng::derive_seed(config.seed, "cf-weight", r);

    const bool keep = std::find(config.keep_runs.begin(), config.keep_runs.end(), static_cast<int>(r)) !=
                      config.keep_runs.end();
    DelayRunModels record{static_cast<int>(r), lp, {}};
    for (std::size_t m = 0; m < nm; ++m) {
      const std::string& mode = res.modes[m];
      try {
        FrequencyDesign design;
        if (mode == "two_d") {
          design = pair_frequencies(y, weight);
        } else if (mode == "one_d_cor") {
          design = projection_frequencies(y, plugin_optimal_projections(a, y).projections, weight);
        } else {
          Rng pgen = rng::make_rng(config.seed, "random-projections", r);
          design = projection_frequencies(y, random_projections(y.covariance(), links, pgen), weight);
        }
        const CfFitResult fit = fit_cf_gmm(a, design, init, config.fit);
        if (!fit.converged) unconverged[m][r] = 1;
        for (Eigen::Index i = 0; i < links; ++i) {
          const auto& model = fit.models[static_cast<std::size_t>(i)];
          CdfCurve est;
          est.quantile = [model](double p) { return mixture_quantile(model, p); };
          res.distances[m](static_cast<Eigen::Index>(r), i) =
              normalized_mallows(truth[static_cast<std::size_t>(i)], est);
        }
        if (keep) record.fits[mode] = fit.models;
      } catch (const Error&) {
        // counted below through the NaN row
      }
    }
    if (keep) kept[r] = std::move(record);
  });

  res.medians.resize(links, static_cast<Eigen::Index>(nm));
  for (std::size_t m = 0; m < nm; ++m) {
    res.medians.col(static_cast<Eigen::Index>(m)) = column_medians(res.distances[m]);
    int failed = 0, slow = 0;
    for (Eigen::Index r = 0; r < config.n_runs; ++r) {
      failed += std::isnan(res.distances[m](r, 0)) ? 1 : 0;
      slow += unconverged[m][static_cast<std::size_t>(r)];
    }
    res.failures[res.modes[m]] = failed;
    res.unconverged[res.modes[m]] = slow;
  }
  for (auto& k : kept)
    if (k) res.kept.push_back(std::move(*k));
  return res;
}

}  // namespace tomo
