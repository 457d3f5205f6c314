#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "memvr/errors.hpp"
#include "memvr/problem.hpp"
#include "oracles.hpp"

using namespace memvr;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST(Problem, PointGradientMatchesLoopOracle) {
  std::mt19937_64 gen(1);
  for (LossKind loss : {LossKind::ridge, LossKind::logistic}) {
    const auto inst = oracle::random_instance(gen, 15, 6, loss, 0.3);
    const LossModel model(inst);
    for (int trial = 0; trial < 5; ++trial) {
      const Vector w = oracle::random_vector(gen, 6);
      for (std::size_t i = 0; i < inst.n(); ++i) {
        const auto pg = point_gradient(model, i, w);
        EXPECT_LT((pg.gradient - oracle::point_gradient(inst, i, w)).norm(), 1e-12);
      }
    }
  }
}

TEST(Problem, FullGradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(2);
  for (LossKind loss : {LossKind::ridge, LossKind::logistic}) {
    const auto inst = oracle::random_instance(gen, 20, 4, loss, 0.1);
    const LossModel model(inst);
    const Vector w = oracle::random_vector(gen, 4, 0.5);
    const auto fg = full_objective_and_gradient(model, w);
    EXPECT_NEAR(fg.value, oracle::objective(inst, w), 1e-12);
    EXPECT_LT((fg.gradient - oracle::numeric_gradient(inst, w)).norm(), 1e-7);
    EXPECT_LT((fg.gradient - oracle::full_gradient(inst, w)).norm(), 1e-12);
  }
}

TEST(Problem, LogisticIsStableAtExtremeMargins) {
  Matrix x(2, 1);
  x << 1.0, 1.0;
  Vector y(2);
  y << 1.0, -1.0;
  const LossModel model(ProblemInstance(x, y, LossKind::logistic, 0.0));
  Vector w(1);
  w << 1000.0;
  // y = +1 with margin 1000: derivative underflows to 0; y = -1: derivative 1.
  EXPECT_EQ(model.xi_prime(0, w), -0.0);
  EXPECT_DOUBLE_EQ(model.xi_prime(1, w), 1.0);
  EXPECT_DOUBLE_EQ(model.point_value(1, w), 1000.0);
  EXPECT_TRUE(std::isfinite(model.point_value(0, w)));
}

TEST(Problem, LipschitzConstantByHand) {
  Matrix x(2, 2);
  x << 3.0, 4.0, 1.0, 0.0;  // squared norms 25 and 1
  Vector y(2);
  y << 1.0, -1.0;
  EXPECT_DOUBLE_EQ(lipschitz_constant(ProblemInstance(x, y, LossKind::ridge, 0.5)), 25.5);
  EXPECT_DOUBLE_EQ(lipschitz_constant(ProblemInstance(x, y, LossKind::logistic, 0.5)), 6.75);
}

TEST(Problem, ValidationErrors) {
  Matrix x = Matrix::Ones(3, 2);
  Vector y = Vector::Ones(2);
  EXPECT_THROW(ProblemInstance(x, y, LossKind::ridge, 0.1), DataError);
  Vector y3 = Vector::Ones(3);
  EXPECT_THROW(ProblemInstance(x, y3, LossKind::ridge, -1.0), ConfigError);
  y3[1] = 0.0;
  EXPECT_THROW(ProblemInstance(x, y3, LossKind::logistic, 0.1), DataError);
  y3[1] = 1.0;
  x(0, 0) = std::nan("");
  EXPECT_THROW(ProblemInstance(x, y3, LossKind::ridge, 0.1), DataError);
  EXPECT_THROW(ProblemInstance(Matrix(0, 2), Vector(0), LossKind::ridge, 0.1), DataError);
}

TEST(Problem, PointGradientRejectsBadArguments) {
  std::mt19937_64 gen(3);
  const LossModel model(oracle::random_instance(gen, 4, 3, LossKind::ridge, 0.1));
  EXPECT_THROW(point_gradient(model, 4, Vector::Zero(3)), std::out_of_range);
  EXPECT_THROW(point_gradient(model, 0, Vector::Zero(2)), std::invalid_argument);
}

TEST(Problem, LibsvmParsesSparseRowsAndComments) {
  const auto dir = oracle::temp_dir("libsvm_ok");
  write_file(dir / "a.txt", "# header comment\n+1 1:0.5 3:2\n\n-1 2:-1 # trailing\n");
  const auto inst = load_libsvm(dir / "a.txt", LossKind::logistic, 0.1);
  ASSERT_EQ(inst.n(), 2u);
  ASSERT_EQ(inst.d(), 3u);
  EXPECT_EQ(inst.features()(0, 0), 0.5);
  EXPECT_EQ(inst.features()(0, 1), 0.0);
  EXPECT_EQ(inst.features()(0, 2), 2.0);
  EXPECT_EQ(inst.features()(1, 1), -1.0);
  EXPECT_EQ(inst.label(1), -1.0);

  LibsvmOptions opts;
  opts.expected_dim = 5;
  opts.label_map = std::map<double, double>{{1.0, 1.0}, {-1.0, -1.0}};
  EXPECT_EQ(load_libsvm(dir / "a.txt", LossKind::logistic, 0.1, opts).d(), 5u);
}

TEST(Problem, LibsvmErrorsNameFileAndLine) {
  const auto dir = oracle::temp_dir("libsvm_bad");
  write_file(dir / "bad.txt", "1 1:0.5\n1 2:abc\n");
  try {
    load_libsvm(dir / "bad.txt", LossKind::ridge, 0.1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.txt:2"), std::string::npos) << e.what();
  }
  write_file(dir / "zero.txt", "1 0:1\n");
  EXPECT_THROW(load_libsvm(dir / "zero.txt", LossKind::ridge, 0.1), DataError);
  write_file(dir / "empty.txt", "# nothing\n");
  EXPECT_THROW(load_libsvm(dir / "empty.txt", LossKind::ridge, 0.1), DataError);
  write_file(dir / "label.txt", "2 1:1\n");
  EXPECT_THROW(load_libsvm(dir / "label.txt", LossKind::logistic, 0.1), DataError);
  EXPECT_THROW(load_libsvm(dir / "missing.txt", LossKind::ridge, 0.1), DataError);
}

TEST(Problem, SyntheticIsDeterministicPerSeed) {
  const auto a = synthesize_problem(50, 5, LossKind::ridge, 0.1, 9, 0.1);
  const auto b = synthesize_problem(50, 5, LossKind::ridge, 0.1, 9, 0.1);
  const auto c = synthesize_problem(50, 5, LossKind::ridge, 0.1, 10, 0.1);
  EXPECT_EQ(a.instance.fingerprint(), b.instance.fingerprint());
  EXPECT_NE(a.instance.fingerprint(), c.instance.fingerprint());
  EXPECT_NE(a.instance.fingerprint(), a.instance.with_mu(0.2).fingerprint());
}

TEST(Problem, SyntheticLogisticLabelsFollowPlantedSign) {
  SyntheticSpec spec;
  spec.n = 200;
  spec.d = 4;
  spec.loss = LossKind::logistic;
  spec.clusters = 5;
  const auto p = synthesize_problem(spec);
  for (std::size_t i = 0; i < spec.n; ++i)
    EXPECT_EQ(p.instance.label(i), p.instance.row(i).dot(p.planted) >= 0 ? 1.0 : -1.0);
}

TEST(Problem, SubsampleIsSortedDeterministicAndWithoutReplacement) {
  const auto inst = synthesize_problem(100, 3, LossKind::ridge, 0.1, 1, 0.0).instance;
  const auto s1 = subsample(inst, 30, 5);
  const auto s2 = subsample(inst, 30, 5);
  EXPECT_EQ(s1.n(), 30u);
  EXPECT_EQ(s1.fingerprint(), s2.fingerprint());
  // Each kept row appears once in the original, in increasing position.
  long last = -1;
  for (std::size_t k = 0; k < s1.n(); ++k) {
    long found = -1;
    for (std::size_t i = 0; i < inst.n(); ++i)
      if (inst.row(i) == s1.row(k)) found = static_cast<long>(i);
    ASSERT_GT(found, last);
    last = found;
  }
  EXPECT_THROW(subsample(inst, 101, 0), ConfigError);
}

TEST(Problem, StandardizeTargets) {
  const auto inst = synthesize_problem(80, 3, LossKind::ridge, 0.1, 2, 0.5).instance;
  const auto s = standardize_targets(inst);
  EXPECT_NEAR(s.labels().mean(), 0.0, 1e-12);
  EXPECT_NEAR(s.labels().squaredNorm() / 80.0, 1.0, 1e-12);
}

TEST(Problem, RidgeReferenceMatchesNormalEquations) {
  const auto inst = synthesize_problem(300, 8, LossKind::ridge, 0.05, 4, 0.3).instance;
  const LossModel model(inst);
  const auto ref = reference_optimum(model);
  // Independent solve with a QR factorization of the stacked system.
  const Eigen::MatrixXd x = inst.features();
  const double n = 300;
  Eigen::MatrixXd a = x.transpose() * x / n + 0.05 * Eigen::MatrixXd::Identity(8, 8);
  const Vector b = x.transpose() * inst.labels() / n;
  const Vector w = a.colPivHouseholderQr().solve(b);
  EXPECT_LT((ref.w_star - w).norm(), 1e-10);
  EXPECT_LE(ref.grad_norm, 1e-10);
  EXPECT_EQ(ref.fingerprint, inst.fingerprint());
}

TEST(Problem, LogisticReferenceIsStationaryAndMinimal) {
  SyntheticSpec spec;
  spec.n = 400;
  spec.d = 6;
  spec.loss = LossKind::logistic;
  spec.mu = 1e-3;
  spec.noise = 0.2;
  const auto inst = synthesize_problem(spec).instance;
  const LossModel model(inst);
  const auto ref = reference_optimum(model);
  EXPECT_LE(oracle::full_gradient(inst, ref.w_star).norm(), 1e-9);
  std::mt19937_64 gen(5);
  for (int k = 0; k < 20; ++k) {
    const Vector w = ref.w_star + oracle::random_vector(gen, 6, 1e-3);
    EXPECT_GE(oracle::objective(inst, w), ref.f_star - 1e-15);
  }
}

TEST(Problem, ReferenceFailsLoudlyWhenToleranceUnreachable) {
  SyntheticSpec spec;
  spec.n = 50;
  spec.d = 3;
  spec.loss = LossKind::logistic;
  spec.mu = 1e-3;
  const LossModel model(synthesize_problem(spec).instance);
  EXPECT_THROW(reference_optimum(model, 1e-9, 0), NumericalError);
}
