#include "memvr/problem.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "memvr/errors.hpp"
#include "memvr/rng.hpp"

namespace memvr {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < len; ++k) {
    h ^= p[k];
    h *= kFnvPrime;
  }
}

std::uint64_t hash_problem(const Matrix& x, const Vector& y, LossKind loss, double mu) {
  std::uint64_t h = kFnvOffset;
  const std::uint64_t dims[3] = {static_cast<std::uint64_t>(x.rows()), static_cast<std::uint64_t>(x.cols()),
                                 static_cast<std::uint64_t>(loss)};
  fnv_bytes(h, dims, sizeof(dims));
  fnv_bytes(h, &mu, sizeof(mu));
  fnv_bytes(h, x.data(), sizeof(double) * static_cast<std::size_t>(x.size()));
  fnv_bytes(h, y.data(), sizeof(double) * static_cast<std::size_t>(y.size()));
  return h;
}

// log(1 + exp(-u)) without overflow.
double log1p_exp_neg(double u) {
  if (u > 0) return std::log1p(std::exp(-u));
  return -u + std::log1p(std::exp(u));
}

// 1 / (1 + exp(u)) without overflow.
double inv_one_plus_exp(double u) {
  if (u >= 0) {
    const double e = std::exp(-u);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(u));
}

}  // namespace

std::string_view to_string(LossKind kind) {
  return kind == LossKind::ridge ? "ridge" : "logistic";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "ridge") return LossKind::ridge;
  if (text == "logistic") return LossKind::logistic;
  throw ConfigError(fmt::format("unknown loss kind '{}'", text));
}

ProblemInstance::ProblemInstance(Matrix features, Vector labels, LossKind loss, double mu) {
  if (features.rows() < 1 || features.cols() < 1)
    throw DataError("problem needs n >= 1 and d >= 1");
  if (labels.size() != features.rows())
    throw DataError(fmt::format("label count {} does not match row count {}", labels.size(), features.rows()));
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError(fmt::format("mu must be finite and >= 0, got {}", mu));
  if (!features.allFinite() || !labels.allFinite()) throw DataError("non-finite feature or label value");
  if (loss == LossKind::logistic) {
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0 && labels[i] != -1.0)
        throw DataError(fmt::format("logistic label at row {} is {}, expected +1 or -1", i, labels[i]));
    }
  }
  const std::uint64_t fp = hash_problem(features, labels, loss, mu);
  data_ = std::make_shared<const Data>(Data{std::move(features), std::move(labels), loss, mu, fp});
}

ProblemInstance ProblemInstance::with_mu(double mu) const {
  return ProblemInstance(data_->features, data_->labels, data_->loss, mu);
}

double lipschitz_constant(const ProblemInstance& instance) {
  const double max_sq = instance.features().rowwise().squaredNorm().maxCoeff();
  const double curvature = instance.loss() == LossKind::ridge ? max_sq : 0.25 * max_sq;
  return curvature + instance.mu();
}

LossModel::LossModel(ProblemInstance instance)
    : instance_(std::move(instance)), lipschitz_(lipschitz_constant(instance_)) {}

LossModel::LossModel(ProblemInstance instance, double lipschitz)
    : instance_(std::move(instance)), lipschitz_(lipschitz) {
  if (!(lipschitz_ > 0.0) || lipschitz_ < instance_.mu())
    throw ConfigError(fmt::format("Lipschitz constant {} must be positive and >= mu", lipschitz_));
}

double LossModel::scalar_from_margin(std::size_t i, double margin) const {
  const double y = instance_.label(i);
  if (instance_.loss() == LossKind::ridge) return margin - y;
  return -y * inv_one_plus_exp(y * margin);
}

double LossModel::loss_from_margin(std::size_t i, double margin) const {
  const double y = instance_.label(i);
  return instance_.loss() == LossKind::ridge ? 0.5 * (margin - y) * (margin - y) : log1p_exp_neg(y * margin);
}

double LossModel::point_value(std::size_t i, const Vector& w) const {
  return loss_from_margin(i, margin(i, w)) + 0.5 * instance_.mu() * w.squaredNorm();
}

PointGradient point_gradient(const LossModel& model, std::size_t i, const Vector& w) {
  if (i >= model.n()) throw std::out_of_range(fmt::format("datapoint index {} out of range [0, {})", i, model.n()));
  if (static_cast<std::size_t>(w.size()) != model.d())
    throw std::invalid_argument(fmt::format("weight dimension {} != problem dimension {}", w.size(), model.d()));
  const double s = model.xi_prime(i, w);
  Vector g = s * model.instance().row(i).transpose() + model.mu() * w;
  return {std::move(g), s};
}

ObjectiveValue full_objective_and_gradient(const LossModel& model, const Vector& w) {
  if (static_cast<std::size_t>(w.size()) != model.d())
    throw std::invalid_argument(fmt::format("weight dimension {} != problem dimension {}", w.size(), model.d()));
  const auto& inst = model.instance();
  const std::size_t n = model.n();
  double loss_sum = 0.0;
  Vector g = Vector::Zero(w.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double m = model.margin(i, w);
    loss_sum += model.loss_from_margin(i, m);
    g.noalias() += model.scalar_from_margin(i, m) * inst.row(i).transpose();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  ObjectiveValue out;
  out.value = loss_sum * inv_n + 0.5 * model.mu() * w.squaredNorm();
  out.gradient = g * inv_n + model.mu() * w;
  return out;
}

double objective(const LossModel& model, const Vector& w) {
  return full_objective_and_gradient(model, w).value;
}

ProblemInstance load_libsvm(const std::filesystem::path& path, LossKind loss, double mu,
                            const LibsvmOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));

  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::vector<double> labels;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;

  auto fail = [&](const std::string& what) {
    throw DataError(fmt::format("{}:{}: {}", path.string(), line_no, what));
  };
  auto parse_double = [&](std::string_view tok) {
    double v = 0.0;
    // libsvm labels are often written "+1"; from_chars rejects a leading plus.
    std::string_view digits = tok;
    if (digits.size() > 1 && digits.front() == '+' && digits[1] != '-') digits.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) fail(fmt::format("bad number '{}'", tok));
    return v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::vector<std::string_view> tokens;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t\r");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t\r");
      tokens.push_back(rest.substr(0, end));
      rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    }
    if (tokens.empty()) continue;

    double label = parse_double(tokens[0]);
    if (options.label_map) {
      auto it = options.label_map->find(label);
      if (it == options.label_map->end()) fail(fmt::format("label {} not in label map", label));
      label = it->second;
    }
    if (loss == LossKind::logistic && label != 1.0 && label != -1.0)
      fail(fmt::format("label {} is not +1/-1 for logistic loss", label));

    std::vector<std::pair<std::size_t, double>> entries;
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      const auto colon = tokens[k].find(':');
      if (colon == std::string_view::npos) fail(fmt::format("expected index:value, got '{}'", tokens[k]));
      const auto idx_tok = tokens[k].substr(0, colon);
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
      if (ec != std::errc() || ptr != idx_tok.data() + idx_tok.size() || idx == 0)
        fail(fmt::format("bad feature index '{}'", idx_tok));
      if (options.expected_dim && idx > *options.expected_dim)
        fail(fmt::format("feature index {} exceeds expected dimension {}", idx, *options.expected_dim));
      entries.emplace_back(idx - 1, parse_double(tokens[k].substr(colon + 1)));
      max_index = std::max(max_index, idx);
    }
    rows.push_back(std::move(entries));
    labels.push_back(label);
  }
  if (rows.empty()) throw DataError(fmt::format("'{}' contains no data lines", path.string()));

  const std::size_t d = options.expected_dim.value_or(max_index);
  if (d == 0) throw DataError(fmt::format("'{}' has no features", path.string()));
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (auto [j, v] : rows[i]) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
  Vector y = Eigen::Map<Vector>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  return ProblemInstance(std::move(x), std::move(y), loss, mu);
}

SyntheticProblem synthesize_problem(std::size_t n, std::size_t d, LossKind loss, double mu, std::uint64_t seed,
                                    double noise) {
  SyntheticSpec spec;
  spec.n = n;
  spec.d = d;
  spec.loss = loss;
  spec.mu = mu;
  spec.seed = seed;
  spec.noise = noise;
  return synthesize_problem(spec);
}

SyntheticProblem synthesize_problem(const SyntheticSpec& spec) {
  if (spec.n < 1 || spec.d < 1) throw ConfigError("synthetic problem needs n >= 1 and d >= 1");
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);
  Rng rng(spec.seed);

  // Planted weights first so that they do not depend on n.
  Vector planted(d);
  const double wscale = 1.0 / std::sqrt(static_cast<double>(spec.d));
  for (Eigen::Index k = 0; k < d; ++k) planted[k] = wscale * rng.normal();

  Matrix centers;
  if (spec.clusters > 0) {
    centers.resize(static_cast<Eigen::Index>(spec.clusters), d);
    for (Eigen::Index c = 0; c < centers.rows(); ++c)
      for (Eigen::Index k = 0; k < d; ++k) centers(c, k) = rng.normal();
  }

  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (spec.clusters > 0) {
      const auto c = static_cast<Eigen::Index>(rng.index(spec.clusters));
      for (Eigen::Index k = 0; k < d; ++k) x(i, k) = centers(c, k) + spec.cluster_spread * rng.normal();
    } else {
      for (Eigen::Index k = 0; k < d; ++k) x(i, k) = rng.normal();
    }
  }
  x *= spec.feature_scale;

  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double signal = x.row(i).dot(planted) + spec.noise * rng.normal();
    y[i] = spec.loss == LossKind::ridge ? signal : (signal >= 0.0 ? 1.0 : -1.0);
  }
  return {ProblemInstance(std::move(x), std::move(y), spec.loss, spec.mu), std::move(planted)};
}

ProblemInstance subsample(const ProblemInstance& instance, std::size_t m, std::uint64_t seed) {
  const std::size_t n = instance.n();
  if (m == 0 || m > n) throw ConfigError(fmt::format("subsample size {} must be in [1, {}]", m, n));
  if (m == n) return instance;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t k = 0; k < m; ++k) std::swap(idx[k], idx[k + rng.index(n - k)]);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  Matrix x(static_cast<Eigen::Index>(m), instance.features().cols());
  Vector y(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k) {
    x.row(static_cast<Eigen::Index>(k)) = instance.row(idx[k]);
    y[static_cast<Eigen::Index>(k)] = instance.label(idx[k]);
  }
  return ProblemInstance(std::move(x), std::move(y), instance.loss(), instance.mu());
}

ProblemInstance standardize_targets(const ProblemInstance& instance) {
  if (instance.loss() != LossKind::ridge) throw ConfigError("target standardization applies to regression only");
  Vector y = instance.labels();
  const double mean = y.mean();
  y.array() -= mean;
  const double sd = std::sqrt(y.squaredNorm() / static_cast<double>(y.size()));
  if (sd > 0.0) y /= sd;
  return ProblemInstance(instance.features(), std::move(y), instance.loss(), instance.mu());
}

double default_reference_tolerance(LossKind loss) {
  return loss == LossKind::ridge ? 1e-10 : 1e-9;
}

ReferenceOptimum reference_optimum(const LossModel& model, std::optional<double> tol_opt, std::size_t max_iter) {
  const auto& inst = model.instance();
  const double tol = tol_opt.value_or(default_reference_tolerance(inst.loss()));
  if (!(tol > 0.0)) throw ConfigError("reference tolerance must be positive");
  const auto d = static_cast<Eigen::Index>(model.d());
  const double inv_n = 1.0 / static_cast<double>(model.n());
  const Matrix& x = inst.features();

  Vector w = Vector::Zero(d);
  ObjectiveValue current = full_objective_and_gradient(model, w);

  if (inst.loss() == LossKind::ridge) {
    Eigen::MatrixXd a = (x.transpose() * x) * inv_n;
    a.diagonal().array() += model.mu();
    Eigen::LDLT<Eigen::MatrixXd> solver(a);
    // Newton on a quadratic converges in one solve; the extra passes refine
    // away rounding in the Gram product.
    for (std::size_t it = 0; it < 6 && current.gradient.norm() > 0.0; ++it) {
      const Vector next_w = w - solver.solve(current.gradient);
      ObjectiveValue next = full_objective_and_gradient(model, next_w);
      if (!(next.gradient.norm() < current.gradient.norm())) break;
      w = next_w;
      current = std::move(next);
    }
  } else {
    // Newton keeps going past tol while the gradient still shrinks, so the
    // reference is as accurate as rounding allows; tol only gates success.
    std::size_t polish = 0;
    for (std::size_t it = 0; it < max_iter && polish < 3 && current.gradient.norm() > 0.0; ++it) {
      if (current.gradient.norm() <= tol) ++polish;
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
      for (std::size_t i = 0; i < model.n(); ++i) {
        const double u = inst.label(i) * model.margin(i, w);
        const double p = inv_one_plus_exp(u);
        h.selfadjointView<Eigen::Lower>().rankUpdate(x.row(static_cast<Eigen::Index>(i)).transpose(),
                                                      p * (1.0 - p));
      }
      h = h.selfadjointView<Eigen::Lower>();
      h *= inv_n;
      h.diagonal().array() += model.mu();
      const Vector dir = h.ldlt().solve(current.gradient);
      const double slope = current.gradient.dot(dir);
      double step = 1.0;
      ObjectiveValue trial = full_objective_and_gradient(model, w - dir);
      // Near the optimum objective differences drown in rounding, so a full
      // step that halves the gradient is accepted without the Armijo test.
      const bool gradient_halved = trial.gradient.norm() <= 0.5 * current.gradient.norm();
      while (!gradient_halved && trial.value > current.value - 1e-4 * step * slope && step > 1e-12) {
        step *= 0.5;
        trial = full_objective_and_gradient(model, w - step * dir);
      }
      if (trial.gradient.norm() >= current.gradient.norm() && trial.value >= current.value) break;
      w -= step * dir;
      current = std::move(trial);
    }
  }

  const double gnorm = current.gradient.norm();
  if (!(gnorm <= tol))
    throw NumericalError(fmt::format("reference optimum did not reach |f'(w)| <= {} (achieved {})", tol, gnorm));
  return {std::move(w), current.value, gnorm, inst.fingerprint()};
}

}  // namespace memvr
