#pragma once

// Neighborhood systems N_i for gradient sharing, and the per-edge bounds on
// how far a shared memory entry can be from the exact one.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memvr/problem.hpp"

namespace memvr {

/// Directed graph on datapoints. children(i) is N_i, the set of memory slots
/// refreshed when i is sampled; parents(j) = {i : j in N_i}.
class NeighborGraph {
 public:
  /// `children[i]` and `child_dist[i]` are parallel lists; they are stored
  /// sorted by child index.
  NeighborGraph(std::size_t q, std::vector<std::vector<std::size_t>> children,
                std::vector<std::vector<double>> child_dist, std::vector<double> row_norms);

  std::size_t n() const { return children_.size(); }
  std::size_t q() const { return q_; }
  std::span<const std::size_t> children(std::size_t i) const { return children_[i]; }
  std::span<const double> child_dist(std::size_t i) const { return child_dist_[i]; }
  std::span<const std::size_t> parents(std::size_t j) const { return parents_[j]; }
  double row_norm(std::size_t j) const { return row_norms_[j]; }
  std::size_t edge_count() const { return edges_; }
  std::size_t max_out_degree() const;

  /// Position of j inside children(i), if (i, j) is an edge.
  std::optional<std::size_t> edge_slot(std::size_t i, std::size_t j) const;

 private:
  std::size_t q_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<double>> child_dist_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<double> row_norms_;
  std::size_t edges_ = 0;
};

/// Each j gets as parents its q nearest datapoints (Euclidean), itself first.
/// For logistic loss only same-label points qualify. Ties break by index.
/// `workers` = 0 uses the hardware concurrency.
NeighborGraph build_knn_graph(const ProblemInstance& instance, std::size_t q, unsigned workers = 0);

struct UniformityReport {
  bool pass = false;
  std::size_t q = 0;
  std::vector<std::size_t> in_degree;
  std::vector<std::size_t> failing;
  std::string message;
};

UniformityReport verify_uniformity(const NeighborGraph& graph);

/// Text edge list: header "n q", then one "i j delta_ij" line per edge.
void save_graph(const NeighborGraph& graph, const std::filesystem::path& path);
/// Reads an edge list and checks it against `instance` (size and distances).
NeighborGraph load_graph(const std::filesystem::path& path, const ProblemInstance& instance);

/// Loads `cache_dir/<name>` when present and consistent, else builds and saves.
NeighborGraph cached_knn_graph(const ProblemInstance& instance, std::size_t q,
                               const std::filesystem::path& cache_dir, unsigned workers = 0);

/// Precomputed per-edge quantities (delta_ij, |x_j|, |y_i - y_j|) for the
/// shared-memory error bounds eps_ij(w). Only |w| and <x_i, w> are needed at
/// query time.
class EpsBoundTable {
 public:
  EpsBoundTable(const ProblemInstance& instance, const NeighborGraph& graph);

  LossKind loss() const { return instance_.loss(); }
  std::size_t n() const { return offsets_.size() - 1; }

  /// eps_ij(w) for an edge (i, j); throws std::out_of_range on a non-edge.
  double eps_bound(std::size_t i, std::size_t j, const Vector& w) const;

  /// Hot-path form: `slot` indexes children(i), `margin_i` = <x_i, w>.
  double edge_bound(std::size_t i, std::size_t slot, double w_norm, double margin_i) const;

  std::size_t out_degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
  std::size_t child(std::size_t i, std::size_t slot) const { return child_[offsets_[i] + slot]; }

  struct NormBallBounds {
    std::vector<double> per_node;  // eps_j(r)
    double mean = 0.0;             // eps(r)
  };
  /// Upper bounds on eps_ij(w) over all incoming edges of j and all |w| <= r.
  NormBallBounds norm_ball_eps(double r) const;

 private:
  ProblemInstance instance_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> child_;
  std::vector<double> delta_;
  std::vector<double> child_norm_;
  std::vector<double> label_gap_;
  std::vector<double> parent_norm_;  // |x_i| per node, for the logistic norm-ball bound
};

}  // namespace memvr
