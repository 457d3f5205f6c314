#include "memvr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "memvr/errors.hpp"

namespace memvr::theory {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("{} must be positive and finite, got {}", name, v));
}

void require_same_problem(const LossModel& model, const ReferenceOptimum& ref) {
  if (ref.fingerprint != model.instance().fingerprint())
    throw ConfigError("reference optimum was computed for a different problem");
}

Vector grad_at_opt(const LossModel& model, const ReferenceOptimum& ref, std::size_t i) {
  return model.xi_prime(i, ref.w_star) * model.instance().row(i).transpose() + model.mu() * ref.w_star;
}

Vector alpha_mean(const AuditState& s) {
  return s.alpha.colwise().sum().transpose() / static_cast<double>(s.alpha.rows());
}

}  // namespace

double regime_k(double mu, double lipschitz, std::size_t n, std::size_t q) {
  require_positive(mu, "mu");
  require_positive(lipschitz, "L");
  if (n == 0 || q == 0) throw ConfigError("K needs n >= 1 and q >= 1");
  return 4.0 * static_cast<double>(q) * lipschitz / (static_cast<double>(n) * mu);
}

double a_star(double k) {
  require_positive(k, "K");
  return 2.0 * k / (1.0 + k + std::sqrt(1.0 + k * k));
}

double gamma_star(double k, double lipschitz) {
  require_positive(lipschitz, "L");
  return a_star(k) / (4.0 * lipschitz);
}

double a_tilde(double k) {
  require_positive(k, "K");
  const double t = 1.5 * k;
  return 2.0 * k / (1.0 + t + std::sqrt(1.0 + k + t * t));
}

double gamma_tilde(double k, double lipschitz) {
  require_positive(lipschitz, "L");
  return a_tilde(k) / (4.0 * lipschitz);
}

double universal_gamma(double lipschitz) {
  require_positive(lipschitz, "L");
  return (2.0 - std::sqrt(2.0)) / (4.0 * lipschitz);
}

double universal_ratio_check(double k) {
  const double a = 2.0 - std::sqrt(2.0);
  const double as = a_star(k);
  if (a >= as) return k * (1.0 - a) / ((1.0 - 0.5 * a) * as);
  return a / as;
}

RateParams rate_params(double mu, double lipschitz, std::size_t n, std::size_t q, double gamma) {
  RateParams p;
  p.mu = mu;
  p.lipschitz = lipschitz;
  p.n = n;
  p.q = q;
  p.k = regime_k(mu, lipschitz, n, q);
  p.gamma = gamma;
  p.rho = rho_of_gamma(gamma, p);
  p.a = 4.0 * lipschitz * gamma;
  p.sigma = 1.0 - 2.0 * lipschitz * gamma;
  p.c = p.rho / (mu * gamma);
  return p;
}

double rho_of_gamma(double gamma, const RateParams& p) {
  require_positive(gamma, "gamma");
  if (gamma >= 1.0 / (4.0 * p.lipschitz))
    throw ConfigError(fmt::format("gamma = {} outside (0, 1/(4L) = {})", gamma, 1.0 / (4.0 * p.lipschitz)));
  const double k = regime_k(p.mu, p.lipschitz, p.n, p.q);
  const double a = 4.0 * p.lipschitz * gamma;
  if (gamma >= gamma_star(k, p.lipschitz))
    return static_cast<double>(p.q) / static_cast<double>(p.n) * (1.0 - a) / (1.0 - 0.5 * a);
  return p.mu * gamma;
}

double rho_of_gamma(double gamma, double mu, double lipschitz, std::size_t n, std::size_t q) {
  RateParams p;
  p.mu = mu;
  p.lipschitz = lipschitz;
  p.n = n;
  p.q = q;
  return rho_of_gamma(gamma, p);
}

double rho_star(double k, double mu, double lipschitz, std::size_t q, std::size_t n) {
  const double expected = regime_k(mu, lipschitz, n, q);
  require_positive(k, "K");
  if (std::abs(k - expected) > 1e-12 * expected)
    throw ConfigError(fmt::format("K = {} inconsistent with 4qL/(n mu) = {}", k, expected));
  return static_cast<double>(q) / static_cast<double>(n) * 2.0 / (1.0 + k + std::sqrt(1.0 + k * k));
}

double admissible_step(double c, double sigma, double k, double lipschitz) {
  if (!(c > 0.0 && c <= 1.0)) throw ConfigError(fmt::format("c must lie in (0, 1], got {}", c));
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError(fmt::format("sigma must lie in [0, 1], got {}", sigma));
  require_positive(k, "K");
  require_positive(lipschitz, "L");
  const double main_form = std::min(k * sigma / (k + 2.0 * c * sigma), 1.0 - sigma) / (2.0 * lipschitz);
  const double appendix_form = std::min(k * sigma / (2.0 * k + 4.0 * c * sigma), 0.5 * (1.0 - sigma)) / lipschitz;
  if (std::abs(main_form - appendix_form) > 1e-12 * std::max(main_form, 1e-300))
    throw std::logic_error(fmt::format("admissible step forms disagree: {} vs {}", main_form, appendix_form));
  return main_form;
}

double s_gamma(double gamma, double k, double mu, double lipschitz) {
  require_positive(k, "K");
  require_positive(mu, "mu");
  return 4.0 * gamma / (k * mu) * (1.0 - 2.0 * lipschitz * gamma);
}

ApproxRateParams approx_rate_params(double eps, double gamma, double k, double mu, double lipschitz,
                                    double w0_dist_sq, double mean_sq_grad) {
  if (!(eps >= 0.0)) throw ConfigError("eps must be >= 0");
  ApproxRateParams p;
  p.eps = eps;
  p.gamma = gamma;
  p.s_gamma = s_gamma(gamma, k, mu, lipschitz);
  p.l0 = w0_dist_sq + p.s_gamma * mean_sq_grad;
  return p;
}

double approx_bound(double t, double gamma, double mu, double eps, double l0) {
  const double mg = mu * gamma;
  if (!(mg > 0.0 && mg < 1.0)) throw ConfigError(fmt::format("approx_bound needs 0 < mu*gamma < 1, got {}", mg));
  if (!(eps >= 0.0) || !(t >= 0.0)) throw ConfigError("approx_bound needs t >= 0 and eps >= 0");
  return std::pow(1.0 - mg, t) * l0 + 4.0 * gamma * eps / mu;
}

ApproxRateParams sgd_preset(const LossModel& model, const ReferenceOptimum& ref, double gamma, std::size_t q,
                            const Vector& w0) {
  require_same_problem(model, ref);
  const double msg = mean_sq_grad_at_opt(model, ref);
  const double k = regime_k(model.mu(), model.lipschitz(), model.n(), q);
  return approx_rate_params(msg, gamma, k, model.mu(), model.lipschitz(), (w0 - ref.w_star).squaredNorm(), msg);
}

double h_point(const LossModel& model, const ReferenceOptimum& ref, const Vector& w, std::size_t i) {
  require_same_problem(model, ref);
  const double m = model.margin(i, w);
  const double m_star = model.margin(i, ref.w_star);
  const double dm = m - m_star;
  double loss_part = 0.0;
  if (model.instance().loss() == LossKind::ridge) {
    loss_part = 0.5 * dm * dm;
  } else {
    loss_part = model.loss_from_margin(i, m) - model.loss_from_margin(i, m_star) -
                model.scalar_from_margin(i, m_star) * dm;
    loss_part = std::max(loss_part, 0.0);
  }
  return loss_part + 0.5 * model.mu() * (w - ref.w_star).squaredNorm();
}

double f_delta(const LossModel& model, const ReferenceOptimum& ref, const Vector& w) {
  require_same_problem(model, ref);
  return objective(model, w) - ref.f_star;
}

double mean_sq_grad_at_opt(const LossModel& model, const ReferenceOptimum& ref) {
  require_same_problem(model, ref);
  double s = 0.0;
  for (std::size_t i = 0; i < model.n(); ++i) s += grad_at_opt(model, ref, i).squaredNorm();
  return s / static_cast<double>(model.n());
}

LyapunovTracker::LyapunovTracker(const LossModel& model, const ReferenceOptimum& ref) : model_(&model), ref_(&ref) {
  require_same_problem(model, ref);
  h_.resize(model.n());
  for (std::size_t i = 0; i < model.n(); ++i) h_[i] = grad_at_opt(model, ref, i).squaredNorm();
}

void LyapunovTracker::on_update(std::span<const std::size_t> slots, const Vector& w_pre) {
  const double two_l = 2.0 * model_->lipschitz();
  for (std::size_t j : slots) h_[j] = two_l * h_point(*model_, *ref_, w_pre, j);
}

double LyapunovTracker::h_mean() const {
  double s = 0.0;
  for (double v : h_) s += v;
  return s / static_cast<double>(h_.size());
}

double LyapunovTracker::value(const Vector& w, double weight) const {
  return (w - ref_->w_star).squaredNorm() + weight * h_mean();
}

LemmaOneSides lemma_one(const LossModel& model, const ReferenceOptimum& ref, const AuditState& s, double gamma) {
  require_same_problem(model, ref);
  const std::size_t n = model.n();
  const Vector mean = alpha_mean(s);
  const double dist_sq = (s.w - ref.w_star).squaredNorm();
  double next_dist = 0.0;
  double mem_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector g = point_gradient(model, i, s.w).gradient - s.alpha.row(static_cast<Eigen::Index>(i)).transpose() + mean;
    next_dist += (s.w - gamma * g - ref.w_star).squaredNorm();
    mem_err += (s.alpha.row(static_cast<Eigen::Index>(i)).transpose() - grad_at_opt(model, ref, i)).squaredNorm();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  next_dist *= inv_n;
  mem_err *= inv_n;
  const double fd = f_delta(model, ref, s.w);
  const double l = model.lipschitz();
  return {dist_sq - next_dist,
          gamma * model.mu() * dist_sq - 2.0 * gamma * gamma * mem_err + (2.0 * gamma - 4.0 * gamma * gamma * l) * fd};
}

CorrectionIdentity correction_identity(const LossModel& model, const ReferenceOptimum& ref, const AuditState& s) {
  require_same_problem(model, ref);
  const std::size_t n = model.n();
  const Vector mean = alpha_mean(s);
  double centered = 0.0, uncentered = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector diff = s.alpha.row(static_cast<Eigen::Index>(i)).transpose() - grad_at_opt(model, ref, i);
    centered += (diff - mean).squaredNorm();
    uncentered += diff.squaredNorm();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return {centered * inv_n, uncentered * inv_n - mean.squaredNorm()};
}

AuditResult lyapunov_step_audit(const LossModel& model, const SamplerSpec& sampler, const AuditState& s, double gamma,
                                double sigma, double c, const ReferenceOptimum& ref) {
  require_same_problem(model, ref);
  if (sampler.q == 0) throw ConfigError("Lyapunov audit needs a q-memorization sampler (q >= 1)");
  const std::size_t n = model.n();
  if (sampler.n != n || s.h.size() != n || static_cast<std::size_t>(s.alpha.rows()) != n)
    throw ConfigError("audit state does not match the problem size");
  const double l = model.lipschitz();
  const double mu = model.mu();
  const double k = regime_k(mu, l, n, sampler.q);
  const double gmax = admissible_step(c, sigma, k, l);
  if (gamma > gmax * (1.0 + 1e-12)) {
    const double first = k * sigma / (k + 2.0 * c * sigma) / (2.0 * l);
    const double second = (1.0 - sigma) / (2.0 * l);
    throw ConfigError(fmt::format("gamma = {} exceeds the admissible bound {} ({} term {} violated)", gamma, gmax,
                                  first <= second ? "K sigma/(K + 2 c sigma)" : "1 - sigma",
                                  std::min(first, second)));
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const Vector mean = alpha_mean(s);
  std::vector<Vector> next_w(n);
  std::vector<double> refreshed(n);
  double h_sum = 0.0;
  bool dominates = true;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector g = point_gradient(model, i, s.w).gradient - s.alpha.row(static_cast<Eigen::Index>(i)).transpose() + mean;
    next_w[i] = s.w - gamma * g;
    refreshed[i] = 2.0 * l * h_point(model, ref, s.w, i);
    h_sum += s.h[i];
    const double err = (s.alpha.row(static_cast<Eigen::Index>(i)).transpose() - grad_at_opt(model, ref, i)).squaredNorm();
    if (s.h[i] < err - 1e-12 * std::max(1.0, err)) dominates = false;
  }

  double e_dist = 0.0, e_h = 0.0;
  for (const auto& o : enumerate_step_outcomes(sampler)) {
    const double p = boost::rational_cast<double>(o.probability);
    double h_next = h_sum;
    for (std::size_t j : o.set) h_next += refreshed[j] - s.h[j];
    e_h += p * h_next * inv_n;
    e_dist += p * (next_w[o.index] - ref.w_star).squaredNorm();
  }

  AuditResult r;
  const double q = static_cast<double>(sampler.q);
  const double weight = gamma * static_cast<double>(n) / (l * q) * sigma;
  r.expected_h_mean = e_h;
  r.predicted_h_mean = (static_cast<double>(n) - q) * inv_n * h_sum * inv_n + 2.0 * l * q * inv_n * f_delta(model, ref, s.w);
  r.lyapunov_before = (s.w - ref.w_star).squaredNorm() + weight * h_sum * inv_n;
  r.lyapunov_after = e_dist + weight * e_h;
  r.contraction = (1.0 - c * mu * gamma) * r.lyapunov_before;
  r.h_dominates = dominates;
  r.pass = r.lyapunov_after <= r.contraction + 1e-12 * std::max(1.0, r.lyapunov_before);
  return r;
}

}  // namespace memvr::theory
