#pragma once

// Closed-form step sizes and guaranteed rates for uniform q-memorization
// methods, and exact-expectation audits of the one-step inequalities they
// rest on.
//
// Notation: K = 4qL/(n mu) separates the big-data regime (K small) from the
// ill-conditioned regime (K large); a = 4 L gamma.

#include <cstddef>
#include <span>
#include <vector>

#include "memvr/problem.hpp"
#include "memvr/sampler.hpp"

namespace memvr::theory {

double regime_k(double mu, double lipschitz, std::size_t n, std::size_t q);

/// a*(K) = 2K / (1 + K + sqrt(1 + K^2)).
double a_star(double k);
double gamma_star(double k, double lipschitz);

/// Step-size patch for inexact memory:
/// a~(K) = 2K / (1 + 3K/2 + sqrt(1 + K + (3K/2)^2)).
double a_tilde(double k);
double gamma_tilde(double k, double lipschitz);

/// K-agnostic step size (2 - sqrt 2) / (4L).
double universal_gamma(double lipschitz);
/// rho(universal gamma) / rho*(K); at least 2 - sqrt 2 for every K.
double universal_ratio_check(double k);

struct RateParams {
  double mu = 0;
  double lipschitz = 0;
  std::size_t n = 0;
  std::size_t q = 0;
  double k = 0;
  double gamma = 0;
  double a = 0;      // 4 L gamma
  double c = 0;      // rate multiplier, rho = c mu gamma
  double sigma = 0;  // Lyapunov weight 1 - 2 L gamma
  double rho = 0;
};

/// All quantities of the rate guarantee at step size gamma in (0, 1/(4L)).
RateParams rate_params(double mu, double lipschitz, std::size_t n, std::size_t q, double gamma);

/// Guaranteed per-step rate: (q/n)(1-a)/(1-a/2) for gamma >= gamma*(K),
/// mu * gamma below it.
double rho_of_gamma(double gamma, const RateParams& params);
double rho_of_gamma(double gamma, double mu, double lipschitz, std::size_t n, std::size_t q);

/// rho*(K) = (q/n) * 2 / (1 + K + sqrt(1 + K^2)); `k` must match the other
/// arguments.
double rho_star(double k, double mu, double lipschitz, std::size_t q, std::size_t n);

/// Largest admissible step for the Lyapunov contraction with parameters
/// (c, sigma). Evaluates both algebraic forms of the bound and throws
/// std::logic_error if they disagree.
double admissible_step(double c, double sigma, double k, double lipschitz);

/// s(gamma) = 4 gamma / (K mu) * (1 - 2 L gamma).
double s_gamma(double gamma, double k, double mu, double lipschitz);

struct ApproxRateParams {
  double eps = 0;
  double gamma = 0;
  double l0 = 0;
  double s_gamma = 0;
};

/// L0 = |w0 - w*|^2 + s(gamma) * mean_i |f_i'(w*)|^2.
ApproxRateParams approx_rate_params(double eps, double gamma, double k, double mu, double lipschitz,
                                    double w0_dist_sq, double mean_sq_grad_at_opt);

/// (1 - mu gamma)^t L0 + 4 gamma eps / mu.
double approx_bound(double t, double gamma, double mu, double eps, double l0);

/// Constant-step SGD as the alpha = 0 special case: eps = mean_i |f_i'(w*)|^2.
ApproxRateParams sgd_preset(const LossModel& model, const ReferenceOptimum& ref, double gamma, std::size_t q,
                            const Vector& w0);

/// h_i(w) = f_i(w) - f_i(w*) - <w - w*, f_i'(w*)>, evaluated as a Bregman
/// divergence so that it is nonnegative.
double h_point(const LossModel& model, const ReferenceOptimum& ref, const Vector& w, std::size_t i);
/// f(w) - f(w*).
double f_delta(const LossModel& model, const ReferenceOptimum& ref, const Vector& w);
/// Mean of |f_i'(w*)|^2.
double mean_sq_grad_at_opt(const LossModel& model, const ReferenceOptimum& ref);

/// Bounds H_i >= |alpha_i - f_i'(w*)|^2, refreshed in lockstep with memory:
/// H_j <- 2 L h_j(w) whenever slot j is written at iterate w.
class LyapunovTracker {
 public:
  LyapunovTracker(const LossModel& model, const ReferenceOptimum& ref);

  void on_update(std::span<const std::size_t> slots, const Vector& w_pre);
  const std::vector<double>& h_bounds() const { return h_; }
  double h_mean() const;
  /// |w - w*|^2 + weight * mean(H); weight is S sigma (or s(gamma)).
  double value(const Vector& w, double weight) const;

 private:
  const LossModel* model_;
  const ReferenceOptimum* ref_;
  std::vector<double> h_;
};

/// Memory and H state for exact one-step audits on small problems.
struct AuditState {
  Vector w;
  Matrix alpha;           // n x d, full gradient memory
  std::vector<double> h;  // H_i
};

struct LemmaOneSides {
  double lhs;  // |w - w*|^2 - E|w+ - w*|^2
  double rhs;  // gamma mu |w - w*|^2 - 2 gamma^2 E|alpha_i - f_i'(w*)|^2 + (2 gamma - 4 gamma^2 L) f_delta
};

/// Exact expectation over the sampled index.
LemmaOneSides lemma_one(const LossModel& model, const ReferenceOptimum& ref, const AuditState& state, double gamma);

struct CorrectionIdentity {
  double centered;    // E|alpha_i - mean(alpha) - f_i'(w*)|^2
  double uncentered;  // E|alpha_i - f_i'(w*)|^2 - |mean(alpha)|^2
};
CorrectionIdentity correction_identity(const LossModel& model, const ReferenceOptimum& ref, const AuditState& state);

struct AuditResult {
  double expected_h_mean;   // E mean(H+) by enumeration
  double predicted_h_mean;  // ((n-q)/n) mean(H) + (2Lq/n) f_delta(w)
  double lyapunov_before;   // L_sigma(w, H)
  double lyapunov_after;    // E L_sigma(w+, H+)
  double contraction;       // (1 - c mu gamma) L_sigma(w, H)
  bool h_dominates;         // H_i >= |alpha_i - f_i'(w*)|^2 for all i
  bool pass;                // lyapunov_after <= contraction + 1e-12 scale slack
};

/// Enumerates every (i, J) outcome of `sampler` (n <= 12). Throws
/// ConfigError if gamma exceeds admissible_step(c, sigma, K, L).
AuditResult lyapunov_step_audit(const LossModel& model, const SamplerSpec& sampler, const AuditState& state,
                                double gamma, double sigma, double c, const ReferenceOptimum& ref);

}  // namespace memvr::theory
