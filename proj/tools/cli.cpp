#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "memvr/bench.hpp"
#include "memvr/config.hpp"
#include "memvr/errors.hpp"
#include "memvr/neighbors.hpp"
#include "memvr/theory.hpp"

namespace memvr::cli {

namespace {

namespace fs = std::filesystem;

fs::path default_out_dir(const std::string& sub) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  return fs::path("memvr_out") / fmt::format("{}-{}", sub, stamp);
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write '{}'", path.string()));
  f << text;
}

ConfigMap build_config(const std::string& file, const std::vector<std::string>& overrides) {
  ConfigMap m;
  if (!file.empty()) m.merge_file(file);
  for (const auto& o : overrides) m.set(o);
  return m;
}

void print_summary(std::ostream& out, const MetricsTrace& trace) {
  for (const auto& name : trace.algorithms()) {
    const auto agg = trace.aggregate(name);
    if (agg.empty()) continue;
    const auto& last = agg.back();
    fmt::print(out, "  {:<28} datapoint evals {:>10}  gradient evals {:>12.0f}  mean suboptimality {:.3e}\n", name,
               last.datapoint_evals, last.gradient_evals, last.mean);
  }
}

int cmd_run(const std::string& config_file, const std::vector<std::string>& overrides, fs::path out_dir,
            std::ostream& out, std::ostream& err) {
  const ConfigMap map = build_config(config_file, overrides);
  const RunConfig config = to_run_config(map);
  if (out_dir.empty()) out_dir = default_out_dir("run");
  make_dir(out_dir);
  write_text(out_dir / "config.txt", map.to_text());

  const MetricsTrace trace = run_experiment(config);
  write_trace(trace, out_dir / "trace.csv");
  write_svg(trace, config.x_axis, out_dir / "trace.svg",
            fmt::format("{} on {} (mu = {})", config.label.empty() ? default_label(config) : config.label,
                        to_string(config.loss), config.mu));
  fmt::print(out, "wrote {}\n", (out_dir / "trace.csv").string());
  print_summary(out, trace);
  if (trace.diverged) {
    fmt::print(err, "error: divergence: {}\n", trace.divergence_message);
    return numerical_error;
  }
  return ok;
}

int cmd_rates(std::size_t n, double mu, double l, std::size_t q, double gamma, std::ostream& out) {
  const double k = theory::regime_k(mu, l, n, q);
  const double gs = theory::gamma_star(k, l);
  const double gu = theory::universal_gamma(l);
  fmt::print(out, "n = {}, mu = {:g}, L = {:g}, q = {}\n", n, mu, l, q);
  fmt::print(out, "{:<24}{:.10g}\n", "K", k);
  fmt::print(out, "{:<24}{:.10g}\n", "a*", theory::a_star(k));
  fmt::print(out, "{:<24}{:.10g}\n", "gamma*", gs);
  fmt::print(out, "{:<24}{:.10g}\n", "rho*", theory::rho_star(k, mu, l, q, n));
  fmt::print(out, "{:<24}{:.10g}\n", "gamma~", theory::gamma_tilde(k, l));
  fmt::print(out, "{:<24}{:.10g}\n", "gamma universal", gu);
  fmt::print(out, "{:<24}{:.10g}\n", "rho(gamma universal)", theory::rho_of_gamma(gu, mu, l, n, q));
  fmt::print(out, "{:<24}{:.10g}\n", "ratio to rho*", theory::universal_ratio_check(k));
  if (gamma > 0) fmt::print(out, "{:<24}{:.10g}\n", fmt::format("rho({:g})", gamma), theory::rho_of_gamma(gamma, mu, l, n, q));
  return ok;
}

int cmd_neighbors(const std::string& config_file, const std::vector<std::string>& overrides, std::size_t q,
                  const std::string& cache_dir, std::ostream& out) {
  const RunConfig config = to_run_config(build_config(config_file, overrides));
  const ProblemInstance inst = load_problem(config);
  const std::size_t k = q > 0 ? q : config.q;
  const fs::path dir = !cache_dir.empty() ? fs::path(cache_dir) : config.graph_cache_dir;
  const NeighborGraph g = dir.empty() ? build_knn_graph(inst, k, worker_count()) : cached_knn_graph(inst, k, dir);
  const UniformityReport r = verify_uniformity(g);
  fmt::print(out, "n = {}, q = {}, edges = {}, max out-degree = {}\n", inst.n(), k, g.edge_count(), g.max_out_degree());
  if (!dir.empty()) fmt::print(out, "cache: {}\n", dir.string());
  fmt::print(out, "in-degree audit: {}\n", r.pass ? "every node has exactly q parents" : r.message);
  return r.pass ? ok : data_error;
}

struct ReplicateArgs {
  std::string dataset = "synthetic";
  std::size_t n = 10000;
  double epochs = 15;
  std::size_t seeds = 5;
  std::size_t q = 20;
  std::vector<double> eps;
  std::vector<double> mus{1e-1, 1e-3};
  std::vector<std::string> overrides;
  std::string config_file;
  fs::path out_dir;
};

// Synthetic stand-in for a binary classification dataset: clustered
// logistic data so that nearest neighbors share gradients meaningfully.
ConfigMap replicate_defaults(const ReplicateArgs& a) {
  ConfigMap m;
  m.set("problem.loss", "logistic");
  m.set("run.epochs", fmt::format("{}", a.epochs));
  std::vector<std::string> seeds;
  for (std::size_t s = 0; s < a.seeds; ++s) seeds.push_back(std::to_string(s));
  m.set("run.seeds", fmt::format("{}", fmt::join(seeds, ",")));
  if (a.dataset == "synthetic") {
    m.set("dataset.source", "synthetic");
    m.set("dataset.n", std::to_string(a.n));
    m.set("dataset.d", "20");
    m.set("dataset.clusters", "200");
    m.set("dataset.cluster_spread", "0.01");
    m.set("dataset.scale", "0.1");
    m.set("dataset.seed", "7");
  } else {
    m.set("dataset.source", "libsvm");
    m.set("dataset.path", a.dataset);
    m.set("dataset.subsample", std::to_string(a.n));
  }
  return m;
}

int cmd_replicate(const ReplicateArgs& a, std::ostream& out, std::ostream& err) {
  ConfigMap map = replicate_defaults(a);
  if (!a.config_file.empty()) map.merge_file(a.config_file);
  for (const auto& o : a.overrides) map.set(o);
  ReplicateOptions opts;
  opts.base = to_run_config(map);
  opts.q = a.q;
  opts.mus = a.mus;
  if (!a.eps.empty()) opts.eps = a.eps;
  const fs::path dir = a.out_dir.empty() ? default_out_dir("replicate") : a.out_dir;
  make_dir(dir);
  write_text(dir / "config.txt", map.to_text() + fmt::format("# replicate: q = {}, mu = {}, eps = {}\n", opts.q,
                                                            fmt::join(opts.mus, ","), fmt::join(opts.eps, ",")));

  const auto panels = replicate(opts);
  bool diverged = false;
  std::string notes;
  for (const auto& p : panels) {
    const std::string stem = fmt::format("panel_mu{:g}", p.mu);
    write_trace(p.trace, dir / (stem + ".csv"));
    const std::string title = fmt::format("mu = {:g}, n = {}", p.mu, p.n);
    write_svg(p.trace, XAxis::datapoint_evals, dir / (stem + "_datapoint.svg"), title);
    write_svg(p.trace, XAxis::gradient_evals, dir / (stem + "_gradient.svg"), title);
    fmt::print(out, "panel mu = {:g} ({} curves) -> {}\n", p.mu, p.trace.algorithms().size(),
               (dir / (stem + ".csv")).string());
    print_summary(out, p.trace);
    for (const auto& note : p.notes) {
      fmt::print(out, "  note: {}\n", note);
      notes += fmt::format("mu {:g}: {}\n", p.mu, note);
    }
    if (p.trace.diverged) {
      diverged = true;
      fmt::print(err, "error: divergence in panel mu = {:g}: {}\n", p.mu, p.trace.divergence_message);
    }
  }
  write_text(dir / "notes.txt", notes);
  return diverged ? numerical_error : ok;
}

}  // namespace

int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variance-reduced SGD with uniform q-memorization"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run one configuration over its seeds; writes trace.csv and trace.svg");
  run->add_option("-c,--config", config_file, "Config file of `key = value` lines");
  run->add_option("-s,--set", overrides, "Override, key=value (repeatable)");
  run->add_option("-o,--out", out_dir, "Output directory");

  std::size_t rn = 0, rq = 1;
  double rmu = 0, rl = 0, rgamma = 0;
  auto* rates = app.add_subcommand("rates", "Step sizes and guaranteed rates for (n, mu, L, q)");
  rates->add_option("--n", rn, "Number of datapoints")->required();
  rates->add_option("--mu", rmu, "Strong convexity")->required();
  rates->add_option("--L", rl, "Lipschitz constant of the gradients")->required();
  rates->add_option("--q", rq, "Expected memory refreshes per step");
  rates->add_option("--gamma", rgamma, "Also evaluate rho at this step size");

  std::size_t nq = 0;
  std::string cache_dir;
  auto* neigh = app.add_subcommand("neighbors", "Build or load the q-nearest-neighbor graph and audit in-degrees");
  neigh->add_option("-c,--config", config_file, "Config file (dataset keys)");
  neigh->add_option("-s,--set", overrides, "Override, key=value (repeatable)");
  neigh->add_option("--q", nq, "Neighborhood size (default algorithm.q)");
  neigh->add_option("--cache-dir", cache_dir, "Graph cache directory");

  ReplicateArgs ra;
  auto* rep = app.add_subcommand("replicate", "Preset grid of methods at two regularization strengths");
  rep->add_option("--dataset", ra.dataset, "`synthetic` or a LIBSVM file");
  rep->add_option("--n", ra.n, "Datapoints (subsample size for files)");
  rep->add_option("--epochs", ra.epochs, "Epochs per run");
  rep->add_option("--seeds", ra.seeds, "Seeds per curve");
  rep->add_option("--q", ra.q, "q for q-SAGA and eps-N-SAGA");
  rep->add_option("--eps", ra.eps, "eps values for eps-N-SAGA (repeatable)");
  rep->add_option("--mu", ra.mus, "Regularization strengths (repeatable)");
  rep->add_option("-c,--config", ra.config_file, "Config file applied over the preset");
  rep->add_option("-s,--set", ra.overrides, "Override, key=value (repeatable)");
  rep->add_option("-o,--out", out_dir, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*run) return cmd_run(config_file, overrides, out_dir, out, err);
    if (*rates) return cmd_rates(rn, rmu, rl, rq, rgamma, out);
    if (*neigh) return cmd_neighbors(config_file, overrides, nq, cache_dir, out);
    if (*rep) {
      if (!ra.eps.empty() && std::any_of(ra.eps.begin(), ra.eps.end(), [](double e) { return !(e >= 0); }))
        throw ConfigError("--eps: values must be >= 0");
      ra.out_dir = out_dir;
      return cmd_replicate(ra, out, err);
    }
  } catch (const ConfigError& e) {
    fmt::print(err, "error: config: {}\n", e.what());
    return config_error;
  } catch (const DataError& e) {
    fmt::print(err, "error: data: {}\n", e.what());
    return data_error;
  } catch (const NumericalError& e) {
    fmt::print(err, "error: numerical: {}\n", e.what());
    return numerical_error;
  } catch (const std::invalid_argument& e) {
    fmt::print(err, "error: config: {}\n", e.what());
    return config_error;
  }
  return config_error;
}

}  // namespace memvr::cli
