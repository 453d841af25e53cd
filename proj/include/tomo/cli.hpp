#pragma once

// Command-line front end: config loading, experiment dispatch, CSV and
// manifest output.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tomo/config.hpp"
#include "tomo/errors.hpp"
#include "tomo/identifiability.hpp"
#include "tomo/io.hpp"
#include "tomo/simulate.hpp"
#include "tomo/topology.hpp"
#include "tomo/version.hpp"

namespace tomo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::chrono::system_clock::time_point started = std::chrono::system_clock::now();
  std::chrono::system_clock::time_point finished = started;
  std::vector<std::string> outputs;  // file names relative to the output directory
  std::map<std::string, int> failures;

  json to_json() const {
    return json{{"command", command},
                {"config", config},
                {"seed", seed},
                {"version", version},
                {"started_at", utc_timestamp(started)},
                {"finished_at", utc_timestamp(finished)},
                {"wall_seconds", std::chrono::duration<double>(finished - started).count()},
                {"outputs", outputs},
                {"failures", failures}};
  }

  /// Writes manifest.json into `dir` after checking every listed output exists.
  void write(const fs::path& dir) {
    finished = std::chrono::system_clock::now();
    for (const auto& o : outputs)
      if (!fs::exists(dir / o)) throw Error("output '" + o + "' was not written");
    std::ofstream out(dir / "manifest.json");
    out << to_json().dump(2) << '\n';
    if (!out) throw Error("cannot write manifest in '" + dir.string() + "'");
  }
};

inline std::string file_label(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.compare(i, 2, "->") == 0) {
      out += '-';
      ++i;
    } else {
      const char c = s[i];
      out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    }
  }
  return out;
}

inline std::ofstream open_output(const fs::path& dir, const std::string& name, RunManifest& manifest) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
  manifest.outputs.push_back(name);
  return out;
}

inline Tree resolve_tree(const std::string& spec) {
  if (spec == "four_leaf") return four_leaf_tree();
  if (spec == "two_leaf") return two_leaf_tree();
  return read_adjacency_file(spec);
}

// ------------------------------------------------------------ config schemas

struct AsymptoticJob {
  RoutingMatrix a;
  Vector theta;
  std::vector<int> k_list;
  int n_replicates = 100;
  std::uint64_t seed = 1;
  json echo = json::object();
};

/// topology = router | four_leaf | two_leaf | <adjacency file>
inline AsymptoticJob load_asymptotic(const Config& c) {
  AsymptoticJob job;
  const std::string topology = c.get_string("topology", "router");
  const int n_in = c.get_int("n_in", 4), n_out = c.get_int("n_out", 4);
  const bool drop = c.get_bool("drop_last_row", true);
  job.a = topology == "router" ? build_router_routing(n_in, n_out, drop) : build_tree_routing(resolve_tree(topology));
  job.seed = c.get_u64("seed", 1);
  job.k_list = c.get_int_list("k_list", {2 * static_cast<int>(job.a.cols()), 10 * static_cast<int>(job.a.cols())});
  job.n_replicates = c.get_int("n_replicates", 100);
  const std::vector<double> theta = c.get_double_list("theta", {});
  if (theta.empty()) {
    job.theta = draw_exponential_theta(job.a.cols(), job.seed);
  } else {
    job.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    if (job.theta.size() != job.a.cols())
      throw PreconditionError("theta has " + std::to_string(job.theta.size()) + " entries, topology has " +
                              std::to_string(job.a.cols()) + " components");
  }
  c.reject_unused();
  job.echo = {{"topology", topology}, {"n_in", n_in},       {"n_out", n_out},
              {"drop_last_row", drop}, {"seed", job.seed},  {"k_list", job.k_list},
              {"n_replicates", job.n_replicates},
              {"theta", std::vector<double>(job.theta.data(), job.theta.data() + job.theta.size())}};
  return job;
}

inline TrafficExperimentConfig load_traffic(const Config& c, json& echo) {
  TrafficExperimentConfig t;
  t.n_in = c.get_int("n_in", t.n_in);
  t.n_out = c.get_int("n_out", t.n_out);
  t.drop_last_row = c.get_bool("drop_last_row", t.drop_last_row);
  const std::vector<double> means = c.get_double_list("od_means", {});
  if (!means.empty()) t.od_means = Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(means.size()));
  t.mean_lo = c.get_double("mean_lo", t.mean_lo);
  t.mean_hi = c.get_double("mean_hi", t.mean_hi);
  t.relation.phi = c.get_double("phi", t.relation.phi);
  t.relation.c = c.get_double("c", t.relation.c);
  t.n_samples = c.get_int("n_samples", t.n_samples);
  t.n_runs = c.get_int("n_runs", t.n_runs);
  t.seed = c.get_u64("seed", t.seed);
  t.estimators = c.get_list("estimators", t.estimators);
  c.reject_unused();
  t.validate();
  echo = {{"n_in", t.n_in},       {"n_out", t.n_out},           {"drop_last_row", t.drop_last_row},
          {"mean_lo", t.mean_lo}, {"mean_hi", t.mean_hi},       {"phi", t.relation.phi},
          {"c", t.relation.c},    {"n_samples", t.n_samples},   {"n_runs", t.n_runs},
          {"seed", t.seed},       {"estimators", t.estimators}};
  if (t.od_means) echo["od_means"] = means;
  return t;
}

struct DelayJob {
  DelayExperimentConfig config;
  int cdf_points = 201;
  json echo = json::object();
};

inline DelayJob load_delay(const Config& c) {
  DelayJob job;
  DelayExperimentConfig& d = job.config;
  const std::string tree = c.get_string("tree", "four_leaf");
  d.tree = resolve_tree(tree);
  d.u_lo = c.get_double("u_lo", d.u_lo);
  d.u_hi = c.get_double("u_hi", d.u_hi);
  d.v_mean = c.get_double("v_mean", d.v_mean);
  d.n_samples = c.get_int("n_samples", d.n_samples);
  d.n_runs = c.get_int("n_runs", d.n_runs);
  d.bins = c.get_int("bins", d.bins);
  d.weight.std = c.get_double("weight_std", d.weight.std);
  d.weight.n_nodes = c.get_int("weight_nodes", d.weight.n_nodes);
  d.fit.tol = c.get_double("fit_tol", d.fit.tol);
  d.fit.max_sweeps = c.get_int("max_sweeps", d.fit.max_sweeps);
  d.modes = c.get_list("modes", d.modes);
  d.redraw_link_params = c.get_bool("redraw_link_params", d.redraw_link_params);
  d.seed = c.get_u64("seed", d.seed);
  d.keep_runs = c.get_int_list("keep_runs", d.keep_runs);
  job.cdf_points = c.get_int("cdf_points", job.cdf_points);
  c.reject_unused();
  d.validate();
  if (job.cdf_points < 2) throw PreconditionError("cdf_points must be at least 2");
  job.echo = {{"tree", tree},
              {"u_lo", d.u_lo},
              {"u_hi", d.u_hi},
              {"v_mean", d.v_mean},
              {"n_samples", d.n_samples},
              {"n_runs", d.n_runs},
              {"bins", d.bins},
              {"weight_std", d.weight.std},
              {"weight_nodes", d.weight.n_nodes},
              {"fit_tol", d.fit.tol},
              {"max_sweeps", d.fit.max_sweeps},
              {"modes", d.modes},
              {"redraw_link_params", d.redraw_link_params},
              {"seed", d.seed},
              {"keep_runs", d.keep_runs},
              {"cdf_points", job.cdf_points}};
  return job;
}

// ------------------------------------------------------------------ commands

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out_dir = ".";
};

inline Config load_config(const CommonOptions& o) {
  Config c = o.config_path.empty() ? Config() : Config::load(o.config_path);
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  return c;
}

inline fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

struct IdentifiabilityOptions {
  std::string matrix_file;
  std::string projections_file;
  bool adjacency = false;
  int max_order = 20;
  double tol = 1e-9;
  std::string out_dir;  // empty: stdout only
};

inline int cmd_identifiability(const IdentifiabilityOptions& o, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "identifiability";
  const RoutingMatrix a =
      o.adjacency ? build_tree_routing(read_adjacency_file(o.matrix_file)) : read_routing_csv_file(o.matrix_file);
  const ProjectionSet p(io::read_matrix_csv_file(o.projections_file));
  json report = check_identifiability(p, a, o.max_order, o.tol);
  auto pairs = json::array();
  for (const auto& [k, l] : p.proportional_pairs()) pairs.push_back({k, l});
  report["proportional_projections"] = std::move(pairs);
  out << report.dump(2) << '\n';
  if (!o.out_dir.empty()) {
    const fs::path dir = prepare_out_dir(o.out_dir);
    open_output(dir, "identifiability.json", manifest) << report.dump(2) << '\n';
    manifest.config = {{"matrix_file", o.matrix_file},
                       {"projections_file", o.projections_file},
                       {"adjacency", o.adjacency},
                       {"max_order", o.max_order},
                       {"tol", o.tol}};
    manifest.write(dir);
  }
  return kExitOk;
}

inline int cmd_asymptotic(const CommonOptions& o, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "asymptotic";
  const AsymptoticJob job = load_asymptotic(load_config(o));
  manifest.config = job.echo;
  manifest.seed = job.seed;
  const AsymptoticStudyResult res =
      run_asymptotic_study(job.a, job.theta, job.k_list, job.n_replicates, job.seed, o.threads);
  const fs::path dir = prepare_out_dir(o.out_dir);
  {
    auto f = open_output(dir, "asymptotic.csv", manifest);
    std::vector<std::string> header = {"parameter"};
    header.insert(header.end(), res.columns.begin(), res.columns.end());
    io::CsvWriter w(f, header);
    for (Eigen::Index i = 0; i < res.table.rows(); ++i) {
      std::vector<std::string> row = {job.a.component_labels().empty() ? std::to_string(i)
                                                                        : job.a.component_labels()[i]};
      for (Eigen::Index c = 0; c < res.table.cols(); ++c) row.push_back(io::format_double(res.table(i, c)));
      w.row(row);
    }
  }
  for (const auto& [k, n] : res.failed_draws) manifest.failures["rand_" + std::to_string(k)] = n;
  manifest.write(dir);
  out << "wrote " << (dir / "asymptotic.csv").string() << '\n';
  return kExitOk;
}

inline int cmd_traffic(const CommonOptions& o, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "traffic";
  const TrafficExperimentConfig cfg = load_traffic(load_config(o), manifest.config);
  manifest.seed = cfg.seed;
  const TrafficExperimentResult res = run_traffic_experiment(cfg, o.threads);
  const RoutingMatrix a = build_router_routing(cfg.n_in, cfg.n_out, cfg.drop_last_row);
  const auto& labels = a.component_labels();
  const fs::path dir = prepare_out_dir(o.out_dir);
  {
    auto f = open_output(dir, "traffic_medians.csv", manifest);
    std::vector<std::string> header = {"od", "od_mean"};
    header.insert(header.end(), res.estimators.begin(), res.estimators.end());
    io::CsvWriter w(f, header);
    for (Eigen::Index i = 0; i < res.medians.rows(); ++i) {
      std::vector<std::string> row = {labels[static_cast<std::size_t>(i)], io::format_double(res.od_means(i))};
      for (Eigen::Index e = 0; e < res.medians.cols(); ++e) row.push_back(io::format_double(res.medians(i, e)));
      w.row(row);
    }
  }
  {
    auto f = open_output(dir, "traffic_errors.csv", manifest);
    std::vector<std::string> header = {"run", "od"};
    header.insert(header.end(), res.estimators.begin(), res.estimators.end());
    io::CsvWriter w(f, header);
    for (int r = 0; r < cfg.n_runs; ++r)
      for (Eigen::Index i = 0; i < a.cols(); ++i) {
        std::vector<std::string> row = {std::to_string(r), labels[static_cast<std::size_t>(i)]};
        for (const Matrix& err : res.errors) row.push_back(io::format_double(err(r, i)));
        w.row(row);
      }
  }
  manifest.failures = res.failures;
  manifest.write(dir);
  out << "wrote " << (dir / "traffic_medians.csv").string() << '\n';
  return kExitOk;
}

inline int cmd_delay(const CommonOptions& o, bool emit_cdf, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "delay";
  const DelayJob job = load_delay(load_config(o));
  const DelayExperimentConfig& cfg = job.config;
  manifest.config = job.echo;
  manifest.config["emit_cdf"] = emit_cdf;
  manifest.seed = cfg.seed;
  const DelayExperimentResult res = run_delay_experiment(cfg, o.threads);
  const fs::path dir = prepare_out_dir(o.out_dir);
  {
    auto f = open_output(dir, "delay_medians.csv", manifest);
    std::vector<std::string> header = {"link"};
    header.insert(header.end(), res.modes.begin(), res.modes.end());
    io::CsvWriter w(f, header);
    for (Eigen::Index i = 0; i < res.medians.rows(); ++i) {
      std::vector<std::string> row = {res.link_labels[static_cast<std::size_t>(i)]};
      for (Eigen::Index m = 0; m < res.medians.cols(); ++m) row.push_back(io::format_double(res.medians(i, m)));
      w.row(row);
    }
  }
  {
    auto f = open_output(dir, "delay_distances.csv", manifest);
    std::vector<std::string> header = {"run", "link"};
    header.insert(header.end(), res.modes.begin(), res.modes.end());
    io::CsvWriter w(f, header);
    for (int r = 0; r < cfg.n_runs; ++r)
      for (std::size_t i = 0; i < res.link_labels.size(); ++i) {
        std::vector<std::string> row = {std::to_string(r), res.link_labels[i]};
        for (const Matrix& d : res.distances) row.push_back(io::format_double(d(r, static_cast<Eigen::Index>(i))));
        w.row(row);
      }
  }
  if (emit_cdf) {
    for (const DelayRunModels& k : res.kept) {
      for (std::size_t i = 0; i < res.link_labels.size(); ++i) {
        const auto li = static_cast<Eigen::Index>(i);
        const double u = k.params.u(li), v = k.params.v(li);
        const std::string name = "cdf_run" + std::to_string(k.run) + "_" + file_label(res.link_labels[i]) + ".csv";
        auto f = open_output(dir, name, manifest);
        std::vector<std::string> header = {"x", "true"};
        std::vector<const MixtureLinkModel*> models;
        for (const auto& mode : res.modes) {
          auto it = k.fits.find(mode);
          if (it == k.fits.end()) continue;  // failed fit
          header.push_back(mode);
          models.push_back(&it->second[i]);
        }
        io::CsvWriter w(f, header);
        for (double x : linear_grid(0.0, mm1_quantile(u, v, 1.0 - 1e-4), job.cdf_points)) {
          std::vector<std::string> row = {io::format_double(x), io::format_double(mm1_cdf(u, v, x))};
          for (const auto* m : models) row.push_back(io::format_double(mixture_cdf(*m, x)));
          w.row(row);
        }
      }
    }
  }
  manifest.failures = res.failures;
  for (const auto& [mode, n] : res.unconverged) manifest.failures["unconverged_" + mode] = n;
  manifest.write(dir);
  out << "wrote " << (dir / "delay_medians.csv").string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- driver

/// Parses arguments and runs one subcommand. Exit codes: 0 success, 1
/// computation failure, 2 bad input (usage, missing file, config or parse
/// error).
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Network tomography from 1D and 2D projections", "tomo"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  IdentifiabilityOptions io_opts;
  auto* ident = app.add_subcommand("identifiability", "Rank test of the power matrices for a projection design");
  ident->add_option("matrix_file", io_opts.matrix_file, "Routing matrix CSV (or adjacency list with --adjacency)")
      ->required();
  ident->add_option("projections_file", io_opts.projections_file, "K x J projection directions CSV")->required();
  ident->add_flag("--adjacency", io_opts.adjacency, "Read matrix_file as a `child parent` adjacency list");
  ident->add_option("--max-order", io_opts.max_order, "Highest power order examined")->capture_default_str();
  ident->add_option("--tol", io_opts.tol, "Relative singular-value tolerance")->capture_default_str();
  ident->add_option("--out-dir", io_opts.out_dir, "Also write the report and a manifest here");

  CommonOptions common;
  std::uint64_t seed = 0;
  bool emit_cdf = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Flat key = value config file");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();
  };
  auto* asym = app.add_subcommand("asymptotic", "Limit standard deviations of the estimators");
  add_common(asym);
  auto* traffic = app.add_subcommand("traffic", "Gaussian traffic-matrix simulation study");
  add_common(traffic);
  auto* delay = app.add_subcommand("delay", "Link delay distribution simulation study");
  add_common(delay);
  delay->add_flag("--emit-cdf", emit_cdf, "Write per-link CDF curves for the kept runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  for (auto* sub : {asym, traffic, delay})
    if (sub->parsed() && sub->count("--seed")) common.seed = seed;

  try {
    if (ident->parsed()) return cmd_identifiability(io_opts, out);
    if (asym->parsed()) return cmd_asymptotic(common, out);
    if (traffic->parsed()) return cmd_traffic(common, out);
    if (delay->parsed()) return cmd_delay(common, emit_cdf, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const MalformedTopology& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitInput;
}

}  // namespace tomo::cli
