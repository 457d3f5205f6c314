#pragma once

// Experiment harness: builds the (sub)problem, computes the reference
// optimum once, runs every seed of a configuration and records f(w) - f(w*)
// against both work counters.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memvr/config.hpp"
#include "memvr/neighbors.hpp"
#include "memvr/problem.hpp"

namespace memvr {

struct TraceRow {
  std::uint64_t seed = 0;
  std::string algorithm;
  std::uint64_t datapoint_evals = 0;
  std::uint64_t gradient_evals = 0;
  double suboptimality = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const TraceRow&) const = default;
};

struct AggregatePoint {
  std::uint64_t datapoint_evals = 0;
  double gradient_evals = 0.0;  // mean over seeds
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

struct MetricsTrace {
  std::vector<TraceRow> rows;
  /// Set when some run produced a non-finite iterate; its rows stop at the
  /// last finite checkpoint.
  bool diverged = false;
  std::string divergence_message;

  /// Sorts rows by (seed, datapoint_evals, algorithm).
  void sort();
  void append(const MetricsTrace& other);
  std::vector<std::string> algorithms() const;
  /// Per-checkpoint mean/min/max across seeds for one curve.
  std::vector<AggregatePoint> aggregate(const std::string& algorithm) const;
};

/// Problem, reference optimum and neighbor graph shared by the seeds of one
/// configuration (and by configurations on the same data).
struct PreparedProblem {
  std::shared_ptr<const LossModel> model;
  ReferenceOptimum reference;
  std::shared_ptr<const NeighborGraph> graph;  // set once requested
  std::size_t graph_q = 0;
};

/// Loads or synthesizes the dataset and subsamples it as configured.
ProblemInstance load_problem(const RunConfig& config);
PreparedProblem prepare_problem(const RunConfig& config);
/// Same data at a different regularization strength.
PreparedProblem with_mu(const PreparedProblem& prepared, double mu);
/// Builds (or loads from graph.cache_dir) the q-nearest-neighbor graph.
void ensure_graph(PreparedProblem& prepared, std::size_t q, const std::filesystem::path& cache_dir = {});

/// f(w) - f(w*), floored at 0 within 1e-12. Throws ConfigError for a
/// reference from another problem and NumericalError for a gap below -1e-12.
double suboptimality(const LossModel& model, const Vector& w, const ReferenceOptimum& reference);

/// Step size selected by config.gamma_rule (for sgd_decay: gamma_0).
double resolve_gamma(const RunConfig& config, const LossModel& model);

/// One seed. Rows at datapoint evals 0, trace_every, 2 trace_every, ... and
/// at the final step.
MetricsTrace run_seed(const PreparedProblem& prepared, const RunConfig& config, std::uint64_t seed);

/// Every seed, run in parallel worker slots (MEMVR_WORKERS, default hardware
/// concurrency). Result rows are sorted.
MetricsTrace run_experiment(const PreparedProblem& prepared, const RunConfig& config);
MetricsTrace run_experiment(const RunConfig& config);

/// Preset grid mirroring the paper's convergence panels: SAGA, q-SAGA,
/// eps-N-SAGA for each eps, constant-step SGD and SGD with gamma_0 / t, on
/// the same data at each mu.
struct ReplicateOptions {
  RunConfig base;  // dataset, epochs, seeds, storage and growing-n settings
  std::vector<double> mus{1e-1, 1e-3};
  std::size_t q = 20;
  std::vector<double> eps{1e-1};
  /// SGD step candidates as multiples of 1/L; the best final mean wins.
  std::vector<double> sgd_scales{0.1, 1.0, 10.0};
};

struct ReplicatePanel {
  double mu = 0;
  std::size_t n = 0;
  MetricsTrace trace;
  std::vector<std::string> notes;  // selected SGD steps, dropped candidates
};

std::vector<ReplicatePanel> replicate(const ReplicateOptions& options);

/// Worker slot count from MEMVR_WORKERS.
unsigned worker_count();

void write_trace(const MetricsTrace& trace, const std::filesystem::path& path);
std::string format_trace(const MetricsTrace& trace);
MetricsTrace read_trace(const std::filesystem::path& path);
MetricsTrace parse_trace(const std::string& text);

/// Log-scale line chart of per-curve mean suboptimality against the chosen
/// counter. Uses nothing but the trace rows.
std::string render_svg(const MetricsTrace& trace, XAxis x_axis, const std::string& title = {});
void write_svg(const MetricsTrace& trace, XAxis x_axis, const std::filesystem::path& path,
               const std::string& title = {});

}  // namespace memvr
