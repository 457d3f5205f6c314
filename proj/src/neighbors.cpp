#include "memvr/neighbors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "memvr/errors.hpp"

namespace memvr {

namespace {

double logistic_sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

std::vector<double> compute_row_norms(const ProblemInstance& instance) {
  std::vector<double> norms(instance.n());
  for (std::size_t j = 0; j < instance.n(); ++j) norms[j] = instance.row(j).norm();
  return norms;
}

}  // namespace

NeighborGraph::NeighborGraph(std::size_t q, std::vector<std::vector<std::size_t>> children,
                             std::vector<std::vector<double>> child_dist, std::vector<double> row_norms)
    : q_(q), children_(std::move(children)), child_dist_(std::move(child_dist)), row_norms_(std::move(row_norms)) {
  const std::size_t n = children_.size();
  if (child_dist_.size() != n || row_norms_.size() != n)
    throw std::invalid_argument("neighbor graph: children, distances and norms must have n entries");
  parents_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = children_[i];
    auto& dist = child_dist_[i];
    if (dist.size() != c.size()) throw std::invalid_argument("neighbor graph: distance list length mismatch");
    std::vector<std::size_t> perm(c.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
    std::vector<std::size_t> c2(c.size());
    std::vector<double> d2(c.size());
    for (std::size_t k = 0; k < perm.size(); ++k) {
      c2[k] = c[perm[k]];
      d2[k] = dist[perm[k]];
      if (c2[k] >= n) throw std::invalid_argument(fmt::format("neighbor graph: child {} out of range", c2[k]));
      if (k > 0 && c2[k] == c2[k - 1]) throw std::invalid_argument(fmt::format("neighbor graph: duplicate edge {} -> {}", i, c2[k]));
    }
    c = std::move(c2);
    dist = std::move(d2);
    for (std::size_t j : c) parents_[j].push_back(i);
    edges_ += c.size();
  }
}

std::size_t NeighborGraph::max_out_degree() const {
  std::size_t m = 0;
  for (auto& c : children_) m = std::max(m, c.size());
  return m;
}

std::optional<std::size_t> NeighborGraph::edge_slot(std::size_t i, std::size_t j) const {
  if (i >= n()) return std::nullopt;
  const auto& c = children_[i];
  auto it = std::lower_bound(c.begin(), c.end(), j);
  if (it == c.end() || *it != j) return std::nullopt;
  return static_cast<std::size_t>(it - c.begin());
}

NeighborGraph build_knn_graph(const ProblemInstance& instance, std::size_t q, unsigned workers) {
  const std::size_t n = instance.n();
  if (q < 1 || q > n) throw ConfigError(fmt::format("neighbor count q = {} must be in [1, n = {}]", q, n));
  const bool same_label = instance.loss() == LossKind::logistic;
  if (same_label) {
    std::size_t pos = 0;
    for (std::size_t j = 0; j < n; ++j) pos += instance.label(j) > 0 ? 1 : 0;
    for (std::size_t count : {pos, n - pos}) {
      if (count > 0 && count < q)
        throw ConfigError(fmt::format("q = {} exceeds the size of a label class ({} points)", q, count));
    }
  }

  const Matrix& x = instance.features();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  const double slack = 1e-9 * (1.0 + sq.maxCoeff());

  // parents_of[j] = the q nearest qualifying points to j, computed per block of
  // query rows with a Gram product and then confirmed with exact distances.
  std::vector<std::vector<std::pair<std::size_t, double>>> parents_of(n);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    std::vector<std::pair<double, std::size_t>> approx;
    std::vector<std::tuple<double, bool, std::size_t>> exact;
    for (std::size_t b = next++; b < blocks; b = next++) {
      const std::size_t lo = b * kBlock;
      const std::size_t hi = std::min(n, lo + kBlock);
      const auto rows = static_cast<Eigen::Index>(hi - lo);
      const Eigen::MatrixXd gram = x * x.middleRows(static_cast<Eigen::Index>(lo), rows).transpose();
      for (std::size_t j = lo; j < hi; ++j) {
        const auto col = static_cast<Eigen::Index>(j - lo);
        approx.clear();
        for (std::size_t i = 0; i < n; ++i) {
          if (same_label && instance.label(i) != instance.label(j)) continue;
          const auto ii = static_cast<Eigen::Index>(i);
          approx.emplace_back(sq[ii] + sq[static_cast<Eigen::Index>(j)] - 2.0 * gram(ii, col), i);
        }
        std::nth_element(approx.begin(), approx.begin() + static_cast<std::ptrdiff_t>(q - 1), approx.end());
        const double cutoff = approx[q - 1].first + slack;
        exact.clear();
        bool has_self = false;
        for (auto [a, i] : approx) {
          if (a > cutoff && i != j) continue;
          has_self |= (i == j);
          const double d2 = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm();
          exact.emplace_back(d2, i != j, i);
        }
        if (!has_self) exact.emplace_back(0.0, false, j);
        std::partial_sort(exact.begin(), exact.begin() + static_cast<std::ptrdiff_t>(q), exact.end());
        auto& out = parents_of[j];
        out.reserve(q);
        for (std::size_t k = 0; k < q; ++k) out.emplace_back(std::get<2>(exact[k]), std::sqrt(std::get<0>(exact[k])));
      }
    }
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, blocks));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<std::vector<std::size_t>> children(n);
  std::vector<std::vector<double>> dist(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (auto [i, d] : parents_of[j]) {
      children[i].push_back(j);
      dist[i].push_back(d);
    }
  }
  return NeighborGraph(q, std::move(children), std::move(dist), compute_row_norms(instance));
}

UniformityReport verify_uniformity(const NeighborGraph& graph) {
  UniformityReport r;
  r.q = graph.q();
  r.in_degree.resize(graph.n());
  for (std::size_t j = 0; j < graph.n(); ++j) {
    r.in_degree[j] = graph.parents(j).size();
    if (r.in_degree[j] != graph.q()) r.failing.push_back(j);
  }
  r.pass = r.failing.empty();
  if (r.pass) {
    r.message = fmt::format("all {} nodes have in-degree {}", graph.n(), graph.q());
  } else {
    const std::size_t j = r.failing.front();
    r.message = fmt::format("{} node(s) violate in-degree {}; first is node {} with in-degree {}", r.failing.size(),
                            graph.q(), j, r.in_degree[j]);
  }
  return r;
}

void save_graph(const NeighborGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write graph file '{}'", path.string()));
  out << fmt::format("{} {}\n", graph.n(), graph.q());
  for (std::size_t i = 0; i < graph.n(); ++i) {
    auto c = graph.children(i);
    auto d = graph.child_dist(i);
    for (std::size_t k = 0; k < c.size(); ++k) out << fmt::format("{} {} {:.17g}\n", i, c[k], d[k]);
  }
  if (!out) throw DataError(fmt::format("failed writing graph file '{}'", path.string()));
}

NeighborGraph load_graph(const std::filesystem::path& path, const ProblemInstance& instance) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open graph file '{}'", path.string()));
  std::size_t n = 0, q = 0;
  std::string line;
  if (!std::getline(in, line) || !(std::istringstream(line) >> n >> q))
    throw DataError(fmt::format("{}: missing 'n q' header", path.string()));
  if (n != instance.n())
    throw DataError(fmt::format("{}: graph has {} nodes, problem has {}", path.string(), n, instance.n()));
  std::vector<std::vector<std::size_t>> children(n);
  std::vector<std::vector<double>> dist(n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::size_t i = 0, j = 0;
    double d = 0.0;
    if (!(ls >> i >> j >> d) || i >= n || j >= n)
      throw DataError(fmt::format("{}:{}: malformed edge '{}'", path.string(), line_no, line));
    const double actual = (instance.row(i) - instance.row(j)).norm();
    if (std::abs(actual - d) > 1e-12 * std::max(1.0, actual))
      throw DataError(fmt::format("{}:{}: stored distance {} does not match data ({})", path.string(), line_no, d, actual));
    children[i].push_back(j);
    dist[i].push_back(d);
  }
  try {
    return NeighborGraph(q, std::move(children), std::move(dist), compute_row_norms(instance));
  } catch (const std::invalid_argument& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

NeighborGraph cached_knn_graph(const ProblemInstance& instance, std::size_t q, const std::filesystem::path& cache_dir,
                               unsigned workers) {
  const auto file = cache_dir / fmt::format("knn_{:016x}_q{}.txt", instance.fingerprint(), q);
  if (std::filesystem::exists(file)) {
    try {
      NeighborGraph g = load_graph(file, instance);
      if (g.q() == q && verify_uniformity(g).pass) return g;
    } catch (const DataError&) {
      // stale or damaged cache entry; rebuild below
    }
  }
  NeighborGraph g = build_knn_graph(instance, q, workers);
  std::filesystem::create_directories(cache_dir);
  save_graph(g, file);
  return g;
}

EpsBoundTable::EpsBoundTable(const ProblemInstance& instance, const NeighborGraph& graph) : instance_(instance) {
  const std::size_t n = graph.n();
  if (n != instance.n()) throw ConfigError("eps table: graph and problem sizes differ");
  offsets_.assign(n + 1, 0);
  parent_norm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    offsets_[i + 1] = offsets_[i] + graph.children(i).size();
    parent_norm_[i] = graph.row_norm(i);
  }
  child_.reserve(offsets_[n]);
  delta_.reserve(offsets_[n]);
  child_norm_.reserve(offsets_[n]);
  label_gap_.reserve(offsets_[n]);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = graph.children(i);
    auto d = graph.child_dist(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double gap = std::abs(instance.label(i) - instance.label(c[k]));
      if (instance.loss() == LossKind::logistic && gap != 0.0)
        throw ConfigError(fmt::format("logistic neighbor edge {} -> {} joins different labels", i, c[k]));
      child_.push_back(c[k]);
      delta_.push_back(d[k]);
      child_norm_.push_back(graph.row_norm(c[k]));
      label_gap_.push_back(gap);
    }
  }
}

double EpsBoundTable::edge_bound(std::size_t i, std::size_t slot, double w_norm, double margin_i) const {
  const std::size_t e = offsets_[i] + slot;
  if (instance_.loss() == LossKind::ridge) return (delta_[e] * w_norm + label_gap_[e]) * child_norm_[e];
  // |s_j - s_i| <= (exp(delta |w|) - 1) * sigmoid(y_i <x_i, w>) for y_i = y_j.
  return std::expm1(delta_[e] * w_norm) * logistic_sigmoid(instance_.label(i) * margin_i) * child_norm_[e];
}

double EpsBoundTable::eps_bound(std::size_t i, std::size_t j, const Vector& w) const {
  if (i >= n()) throw std::out_of_range(fmt::format("eps_bound: node {} out of range", i));
  const auto first = child_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
  const auto last = child_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
  auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) throw std::out_of_range(fmt::format("eps_bound: ({}, {}) is not a graph edge", i, j));
  const double margin = instance_.row(i).dot(w);
  return edge_bound(i, static_cast<std::size_t>(it - first), w.norm(), margin);
}

EpsBoundTable::NormBallBounds EpsBoundTable::norm_ball_eps(double r) const {
  if (!(r >= 0.0)) throw ConfigError("norm-ball radius must be >= 0");
  NormBallBounds out;
  out.per_node.assign(n(), 0.0);
  for (std::size_t i = 0; i < n(); ++i) {
    // sup over |w| <= r of sigmoid(y_i <x_i, w>) is attained at <x_i, w> = y_i |x_i| r.
    const double factor = logistic_sigmoid(parent_norm_[i] * r);
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      const double b = instance_.loss() == LossKind::ridge ? (delta_[e] * r + label_gap_[e]) * child_norm_[e]
                                                           : std::expm1(delta_[e] * r) * factor * child_norm_[e];
      out.per_node[child_[e]] = std::max(out.per_node[child_[e]], b);
    }
  }
  double sum = 0.0;
  for (double v : out.per_node) sum += v;
  out.mean = n() ? sum / static_cast<double>(n()) : 0.0;
  return out;
}

}  // namespace memvr
