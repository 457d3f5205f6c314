#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "memvr/engine.hpp"
#include "memvr/errors.hpp"
#include "memvr/theory.hpp"
#include "oracles.hpp"

using namespace memvr;
using namespace memvr::theory;

namespace {

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g;
  for (int k = 0; k < points; ++k) g.push_back(lo * std::pow(hi / lo, k / double(points - 1)));
  return g;
}

struct SmallProblem {
  LossModel model;
  ReferenceOptimum ref;
};

SmallProblem small_problem(std::mt19937_64& gen, LossKind loss, std::size_t n = 6, std::size_t d = 3) {
  LossModel model(oracle::random_instance(gen, n, d, loss, 0.3));
  auto ref = reference_optimum(model);
  return {std::move(model), std::move(ref)};
}

AuditState random_state(std::mt19937_64& gen, const SmallProblem& p) {
  AuditState s;
  const std::size_t n = p.model.n(), d = p.model.d();
  s.w = p.ref.w_star + oracle::random_vector(gen, d, 0.5);
  s.alpha = Matrix(n, d);
  s.h.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector g_star = oracle::point_gradient(p.model.instance(), i, p.ref.w_star);
    const Vector a = g_star + oracle::random_vector(gen, d, 0.3);
    s.alpha.row(static_cast<Eigen::Index>(i)) = a.transpose();
    // H_i must dominate |alpha_i - f_i'(w*)|^2.
    s.h[i] = (a - g_star).squaredNorm() * (1.0 + std::uniform_real_distribution<double>(0, 1)(gen));
  }
  return s;
}

}  // namespace

TEST(Theory, AStarAnchorsAndQuadraticOracle) {
  EXPECT_NEAR(a_star(1.0), 2.0 / (2.0 + std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(a_star(1.0), 0.585786, 1e-6);
  for (double k : log_grid(1e-6, 1e6, 60)) EXPECT_NEAR(a_star(k), oracle::a_star_quadratic(k), 1e-9 * std::max(1.0, k) * a_star(k) + 1e-15);
  EXPECT_NEAR(a_star(1e-12) / 1e-12, 1.0, 1e-6);
  EXPECT_NEAR(a_star(1e12), 1.0, 1e-11);
  EXPECT_THROW(a_star(0.0), ConfigError);
  EXPECT_THROW(a_star(-1.0), ConfigError);
}

TEST(Theory, RhoStarIsTheMaximumOverStepSizes) {
  for (double k : log_grid(1e-3, 1e3, 25)) {
    const double q_over_n = 0.02;
    const auto [a_opt, rho_opt] = oracle::maximize_rate(k, q_over_n);
    // Consistent (mu, L, q, n) for this K: q = 2, n = 100, L = 1, mu = 4qL/(nK).
    const double mu = 4 * 2 * 1.0 / (100 * k);
    EXPECT_NEAR(rho_star(k, mu, 1.0, 2, 100), rho_opt, 1e-9 * rho_opt);
    EXPECT_NEAR(a_star(k), a_opt, 1e-7);
  }
}

TEST(Theory, RhoOfGammaBranchesAndContinuity) {
  const double mu = 0.01, l = 2.0;
  const std::size_t n = 1000, q = 5;
  const double k = regime_k(mu, l, n, q);
  const double gs = gamma_star(k, l);
  const double left = rho_of_gamma(gs * (1 - 1e-13), mu, l, n, q);
  const double right = rho_of_gamma(gs, mu, l, n, q);
  EXPECT_NEAR(left, right, 1e-12);
  EXPECT_NEAR(right, rho_star(k, mu, l, q, n), 1e-15);
  EXPECT_DOUBLE_EQ(rho_of_gamma(gs / 2, mu, l, n, q), mu * gs / 2);
  EXPECT_THROW(rho_of_gamma(1.0 / (4 * l), mu, l, n, q), ConfigError);
  EXPECT_THROW(rho_of_gamma(0.0, mu, l, n, q), ConfigError);
  EXPECT_THROW(rho_star(k * 1.01, mu, l, q, n), ConfigError);
}

TEST(Theory, FifthOfInverseLStepSize) {
  for (double mu : {1e-4, 1e-2, 0.5}) {
    for (std::size_t q : {1, 5, 20}) {
      const double l = 1.5;
      const std::size_t n = 200;
      const double rho = rho_of_gamma(1.0 / (5 * l), mu, l, n, q);
      EXPECT_NEAR(rho, std::min(q / (3.0 * n), mu / (5 * l)), 1e-12);
    }
  }
}

TEST(Theory, UniversalStepRatio) {
  const double floor = 2 - std::sqrt(2.0);
  for (double k : log_grid(1e-4, 1e4, 100)) EXPECT_GE(universal_ratio_check(k), floor - 1e-12) << k;
  // Where a* equals the universal a, the universal step is optimal.
  const double a_u = 2 - std::sqrt(2.0);
  const double k_switch = a_u * (1 - a_u / 2) / (1 - a_u);  // solves a*(K) = a_u
  EXPECT_NEAR(a_star(k_switch), a_u, 1e-12);
  EXPECT_NEAR(universal_ratio_check(k_switch), 1.0, 1e-10);
  EXPECT_NEAR(universal_ratio_check(1e-9), floor, 1e-6);
  EXPECT_NEAR(universal_ratio_check(1e9), floor, 1e-6);
  EXPECT_DOUBLE_EQ(universal_gamma(2.0), (2 - std::sqrt(2.0)) / 8);
}

TEST(Theory, InexactStepRatioFallsFromOneToTwoThirds) {
  double prev = 1.0 + 1e-12;
  for (double k : log_grid(1e-6, 1e6, 100)) {
    const double r = a_tilde(k) / a_star(k);
    EXPECT_LE(r, prev + 1e-12);
    EXPECT_GE(r, 2.0 / 3.0 - 1e-12);
    prev = r;
  }
  EXPECT_NEAR(a_tilde(1e-8) / a_star(1e-8), 1.0, 1e-6);
  EXPECT_NEAR(a_tilde(1e8) / a_star(1e8), 2.0 / 3.0, 1e-6);
}

TEST(Theory, AdmissibleStep) {
  const double k = 0.8, l = 1.0;
  for (double c : {0.1, 0.5, 1.0})
    for (double sigma : {0.0, 0.3, 0.5, 1.0}) {
      const double g = admissible_step(c, sigma, k, l);
      EXPECT_NEAR(g, std::min(k * sigma / (k + 2 * c * sigma), 1 - sigma) / (2 * l), 1e-15);
    }
  EXPECT_EQ(admissible_step(1.0, 0.0, k, l), 0.0);
  EXPECT_THROW(admissible_step(0.0, 0.5, k, l), ConfigError);
  EXPECT_THROW(admissible_step(1.5, 0.5, k, l), ConfigError);
  EXPECT_THROW(admissible_step(0.5, 1.5, k, l), ConfigError);
}

TEST(Theory, RateTableExample) {
  const double k = regime_k(1e-3, 1.0, 100000, 20);
  EXPECT_NEAR(k, 0.8, 1e-15);
  EXPECT_NEAR(gamma_star(k, 1.0), oracle::a_star_quadratic(0.8) / 4, 1e-15);
  const auto p = rate_params(1e-3, 1.0, 100000, 20, gamma_star(k, 1.0));
  EXPECT_NEAR(p.sigma, 1 - 2 * p.gamma, 1e-15);
  EXPECT_NEAR(p.rho, p.c * p.mu * p.gamma, 1e-18);
}

TEST(Theory, ApproxBoundAndSGamma) {
  EXPECT_DOUBLE_EQ(s_gamma(0.1, 2.0, 0.5, 1.0), 4 * 0.1 / (2.0 * 0.5) * (1 - 0.2));
  EXPECT_NEAR(approx_bound(0, 0.1, 0.5, 0.2, 3.0), 3.0 + 4 * 0.1 * 0.2 / 0.5, 1e-15);
  EXPECT_NEAR(approx_bound(10, 0.1, 0.5, 0.0, 1.0), std::pow(0.95, 10), 1e-15);
  EXPECT_THROW(approx_bound(1, 2.0, 0.5, 0.1, 1.0), ConfigError);
  const auto p = approx_rate_params(0.3, 0.1, 2.0, 0.5, 1.0, 4.0, 2.0);
  EXPECT_DOUBLE_EQ(p.l0, 4.0 + s_gamma(0.1, 2.0, 0.5, 1.0) * 2.0);
}

TEST(Theory, HPointIsBregmanDivergence) {
  std::mt19937_64 gen(4);
  for (LossKind loss : {LossKind::ridge, LossKind::logistic}) {
    const auto p = small_problem(gen, loss);
    for (int t = 0; t < 20; ++t) {
      const Vector w = oracle::random_vector(gen, 3);
      for (std::size_t i = 0; i < p.model.n(); ++i) {
        const double direct = p.model.point_value(i, w) - p.model.point_value(i, p.ref.w_star) -
                              (w - p.ref.w_star).dot(oracle::point_gradient(p.model.instance(), i, p.ref.w_star));
        EXPECT_NEAR(h_point(p.model, p.ref, w, i), direct, 1e-10);
        EXPECT_GE(h_point(p.model, p.ref, w, i), 0.0);
      }
    }
    EXPECT_EQ(h_point(p.model, p.ref, p.ref.w_star, 0), 0.0);
    // Mean of h_i equals f_delta up to <w - w*, f'(w*)>, which is ~0.
    const Vector w = oracle::random_vector(gen, 3);
    double mean = 0;
    for (std::size_t i = 0; i < p.model.n(); ++i) mean += h_point(p.model, p.ref, w, i) / double(p.model.n());
    EXPECT_NEAR(mean, f_delta(p.model, p.ref, w), 1e-9);
  }
}

TEST(Theory, ReferenceFromOtherProblemIsRejected) {
  std::mt19937_64 gen(5);
  const auto a = small_problem(gen, LossKind::ridge);
  const auto b = small_problem(gen, LossKind::ridge);
  EXPECT_THROW(f_delta(a.model, b.ref, Vector::Zero(3)), ConfigError);
}

TEST(Theory, FirstLemmaInequalityAndCorrectionIdentity) {
  std::mt19937_64 gen(6);
  for (LossKind loss : {LossKind::ridge, LossKind::logistic}) {
    for (int t = 0; t < 50; ++t) {
      const auto p = small_problem(gen, loss);
      const auto s = random_state(gen, p);
      const double gamma = std::uniform_real_distribution<double>(0.01, 1.0)(gen) / (4 * p.model.lipschitz());
      const auto sides = lemma_one(p.model, p.ref, s, gamma);
      EXPECT_GE(sides.lhs, sides.rhs - 1e-12);
      const auto id = correction_identity(p.model, p.ref, s);
      EXPECT_NEAR(id.centered, id.uncentered, 1e-12 * std::max(1.0, id.uncentered));
    }
  }
}

TEST(Theory, ExpectedMemoryBoundMatchesPrediction) {
  std::mt19937_64 gen(7);
  for (int t = 0; t < 30; ++t) {
    const auto p = small_problem(gen, t % 2 ? LossKind::logistic : LossKind::ridge);
    const auto s = random_state(gen, p);
    for (std::size_t q : {1, 2, 4}) {
      for (SamplerKind kind : {SamplerKind::q_saga, SamplerKind::svrg}) {
        const auto sampler = make_sampler(kind, p.model.n(), q);
        const auto r = lyapunov_step_audit(p.model, sampler, s, 1e-3, 0.5, 0.1, p.ref);
        EXPECT_NEAR(r.expected_h_mean, r.predicted_h_mean, 1e-12);
      }
    }
  }
}

TEST(Theory, ContractionHoldsAtAdmissibleSteps) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    const auto p = small_problem(gen, t % 2 ? LossKind::logistic : LossKind::ridge);
    const auto s = random_state(gen, p);
    const std::size_t q = 1 + t % 3;
    const auto sampler = make_sampler(SamplerKind::q_saga, p.model.n(), q);
    const double k = regime_k(p.model.mu(), p.model.lipschitz(), p.model.n(), q);
    const double c = 0.05 + 0.95 * u(gen);
    const double sigma = 0.05 + 0.9 * u(gen);
    const double gamma = admissible_step(c, sigma, k, p.model.lipschitz()) * (0.05 + 0.95 * u(gen));
    const auto r = lyapunov_step_audit(p.model, sampler, s, gamma, sigma, c, p.ref);
    EXPECT_TRUE(r.h_dominates);
    EXPECT_TRUE(r.pass) << r.lyapunov_after << " > " << r.contraction;
  }
}

TEST(Theory, AuditRejectsInadmissibleStep) {
  std::mt19937_64 gen(9);
  const auto p = small_problem(gen, LossKind::ridge);
  const auto s = random_state(gen, p);
  const auto sampler = make_sampler(SamplerKind::q_saga, p.model.n(), 2);
  const double k = regime_k(p.model.mu(), p.model.lipschitz(), p.model.n(), 2);
  const double g = admissible_step(0.5, 0.5, k, p.model.lipschitz());
  EXPECT_THROW(lyapunov_step_audit(p.model, sampler, s, 1.01 * g, 0.5, 0.5, p.ref), ConfigError);
  EXPECT_THROW(lyapunov_step_audit(p.model, make_sampler(SamplerKind::sgd, p.model.n()), s, g, 0.5, 0.5, p.ref),
               ConfigError);
}

TEST(Theory, TrackerDominatesMemoryErrorAlongARun) {
  const LossModel model(synthesize_problem(50, 4, LossKind::ridge, 0.1, 3, 0.3).instance);
  const auto ref = reference_optimum(model);
  const auto sampler = make_sampler(SamplerKind::q_saga, 50, 3);
  OptState st = make_state(model, sampler, {StorageMode::full_vectors, false}, 2);
  // Memory starts at zero, so the initial H_i = |f_i'(w*)|^2 is tight.
  LyapunovTracker tracker(model, ref);
  const double gamma = 0.5 / model.lipschitz() / 4;
  for (int t = 0; t < 2000; ++t) {
    const Vector w_pre = st.w;
    step(st, model, sampler, gamma);
    tracker.on_update(st.update_set, w_pre);
    if (t % 100 == 0) {
      for (std::size_t i = 0; i < 50; ++i) {
        const double err =
            (st.memory.slot(i).transpose() - oracle::point_gradient(model.instance(), i, ref.w_star)).squaredNorm();
        ASSERT_LE(err, tracker.h_bounds()[i] * (1 + 1e-9) + 1e-15);
      }
    }
  }
}
