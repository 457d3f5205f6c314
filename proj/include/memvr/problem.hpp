#pragma once

// Regularized empirical risk problems: ridge and L2-regularized logistic
// regression, f(w) = 1/n sum_i f_i(w) with f_i(w) = l(<x_i, w>, y_i) + mu/2 |w|^2.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

namespace memvr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class LossKind { ridge, logistic };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

/// Immutable dataset plus loss and regularization strength. Copies share the
/// underlying storage.
class ProblemInstance {
 public:
  ProblemInstance(Matrix features, Vector labels, LossKind loss, double mu);

  std::size_t n() const { return static_cast<std::size_t>(data_->features.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(data_->features.cols()); }
  const Matrix& features() const { return data_->features; }
  const Vector& labels() const { return data_->labels; }
  auto row(std::size_t i) const { return data_->features.row(static_cast<Eigen::Index>(i)); }
  double label(std::size_t i) const { return data_->labels[static_cast<Eigen::Index>(i)]; }
  LossKind loss() const { return data_->loss; }
  double mu() const { return data_->mu; }
  /// Content hash over (n, d, loss, mu, features, labels).
  std::uint64_t fingerprint() const { return data_->fingerprint; }

  ProblemInstance with_mu(double mu) const;

 private:
  struct Data {
    Matrix features;
    Vector labels;
    LossKind loss;
    double mu;
    std::uint64_t fingerprint;
  };
  std::shared_ptr<const Data> data_;
};

/// Upper bound on the gradient Lipschitz constant shared by every f_i:
/// ridge max|x_i|^2 + mu, logistic max|x_i|^2/4 + mu.
double lipschitz_constant(const ProblemInstance& instance);

/// f_i'(w) = xi_prime * x_i + mu * w.
struct PointGradient {
  Vector gradient;
  double xi_prime;
};

class LossModel {
 public:
  explicit LossModel(ProblemInstance instance);
  LossModel(ProblemInstance instance, double lipschitz);

  const ProblemInstance& instance() const { return instance_; }
  double lipschitz() const { return lipschitz_; }
  double mu() const { return instance_.mu(); }
  std::size_t n() const { return instance_.n(); }
  std::size_t d() const { return instance_.d(); }

  double margin(std::size_t i, const Vector& w) const { return instance_.row(i).dot(w); }
  /// Loss-part derivative as a function of the margin <x_i, w>.
  double scalar_from_margin(std::size_t i, double margin) const;
  double xi_prime(std::size_t i, const Vector& w) const { return scalar_from_margin(i, margin(i, w)); }
  /// Loss part of f_i as a function of the margin (no regularizer).
  double loss_from_margin(std::size_t i, double margin) const;
  /// f_i(w) including the regularizer.
  double point_value(std::size_t i, const Vector& w) const;

 private:
  ProblemInstance instance_;
  double lipschitz_;
};

PointGradient point_gradient(const LossModel& model, std::size_t i, const Vector& w);

struct ObjectiveValue {
  double value;
  Vector gradient;
};

/// f(w) and f'(w), summed in ascending i.
ObjectiveValue full_objective_and_gradient(const LossModel& model, const Vector& w);
double objective(const LossModel& model, const Vector& w);

struct LibsvmOptions {
  std::optional<std::size_t> expected_dim;
  /// Raw label -> mapped label. Every label in the file must have an entry.
  std::optional<std::map<double, double>> label_map;
};

ProblemInstance load_libsvm(const std::filesystem::path& path, LossKind loss, double mu,
                            const LibsvmOptions& options = {});

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t d = 20;
  LossKind loss = LossKind::ridge;
  double mu = 0.1;
  std::uint64_t seed = 0;
  double noise = 0.0;
  /// 0 draws i.i.d. standard normal rows; k > 0 draws rows around k normal
  /// centers with per-coordinate spread `cluster_spread`.
  std::size_t clusters = 0;
  double cluster_spread = 0.1;
  /// Multiplies every feature after drawing.
  double feature_scale = 1.0;
};

struct SyntheticProblem {
  ProblemInstance instance;
  Vector planted;
};

SyntheticProblem synthesize_problem(std::size_t n, std::size_t d, LossKind loss, double mu,
                                    std::uint64_t seed, double noise);
SyntheticProblem synthesize_problem(const SyntheticSpec& spec);

/// Uniform subsample of m rows without replacement, in ascending row order.
ProblemInstance subsample(const ProblemInstance& instance, std::size_t m, std::uint64_t seed);
/// Shifts and scales regression targets to zero mean and unit variance.
ProblemInstance standardize_targets(const ProblemInstance& instance);

struct ReferenceOptimum {
  Vector w_star;
  double f_star;
  double grad_norm;
  std::uint64_t fingerprint;
};

double default_reference_tolerance(LossKind loss);

/// Ridge: direct solve of (X^T X / n + mu I) w = X^T y / n with iterative
/// refinement. Logistic: damped Newton with backtracking. Throws
/// NumericalError if |f'(w)| > tol on exit.
ReferenceOptimum reference_optimum(const LossModel& model, std::optional<double> tol = std::nullopt,
                                   std::size_t max_iter = 500);

}  // namespace memvr
