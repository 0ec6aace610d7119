#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "flgpr/classifiers.hpp"

using namespace flgpr;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  Eigen::MatrixXd m(rows, cols);
  Rng rng(seed);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

Eigen::VectorXd random_labels(int n, std::uint64_t seed) {
  Eigen::VectorXd y(n);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) y[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  // Force both classes.
  y[0] = 1.0;
  y[1] = -1.0;
  return y;
}

/// Ordinary least squares with intercept; the oracle for full-component PLS1.
Eigen::VectorXd ols_predict(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& x_test) {
  Eigen::MatrixXd a(x_train.rows(), x_train.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x_train.cols()) = x_train;
  const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(y);
  Eigen::MatrixXd b(x_test.rows(), x_test.cols() + 1);
  b.col(0).setOnes();
  b.rightCols(x_test.cols()) = x_test;
  return b * beta;
}

}  // namespace

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

TEST(Standardize, SelfApplicationIsZeroMeanUnitStd) {
  const Eigen::MatrixXd x = random_matrix(80, 5, 3).array() * 4.0 + 7.0;
  const StandardizationStats stats = standardize_fit(x);
  const Eigen::MatrixXd z = standardize_apply(stats, x);
  for (int c = 0; c < 5; ++c) {
    EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-10);
    const double var = z.col(c).squaredNorm() / z.rows() - std::pow(z.col(c).mean(), 2);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-10);
  }
}

TEST(Standardize, ConstantColumnFlooredToZero) {
  Eigen::MatrixXd x = random_matrix(20, 3, 4);
  x.col(1).setConstant(2.5);
  const StandardizationStats stats = standardize_fit(x);
  EXPECT_GE(stats.std[1], kStdFloor);
  const Eigen::MatrixXd z = standardize_apply(stats, x);
  for (int r = 0; r < 20; ++r) EXPECT_EQ(z(r, 1), 0.0);
}

TEST(Standardize, TestRowsUseTrainStats) {
  const Eigen::MatrixXd train = random_matrix(50, 2, 5);
  const StandardizationStats stats = standardize_fit(train);
  Eigen::MatrixXd test(1, 2);
  test << 3.0, -1.5;
  const Eigen::MatrixXd z = standardize_apply(stats, test);
  for (int c = 0; c < 2; ++c)
    EXPECT_NEAR(z(0, c), (test(0, c) - stats.mean[c]) / stats.std[c], 1e-14);
}

// ---------------------------------------------------------------------------
// PLSDA
// ---------------------------------------------------------------------------

TEST(Plsda, FullComponentsEqualsLeastSquares) {
  const Eigen::MatrixXd x = random_matrix(40, 8, 11);
  const Eigen::VectorXd y = random_labels(40, 12);
  const Eigen::MatrixXd x_test = random_matrix(15, 8, 13);

  const PlsdaModel model = plsda_fit(x, y, 8);
  ASSERT_EQ(model.n_components, 8);
  const Eigen::VectorXd pls = plsda_predict(model, x_test);
  const Eigen::VectorXd ols = ols_predict(x, y, x_test);
  const double scale = ols.cwiseAbs().maxCoeff();
  for (int i = 0; i < pls.size(); ++i) EXPECT_NEAR(pls[i], ols[i], 1e-6 * scale);
}

TEST(Plsda, SeparatedDataPerfectOrdering) {
  Eigen::MatrixXd x(8, 1);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i < 4 ? -2.0 - i * 0.1 : 2.0 + i * 0.1;
    y[i] = i < 4 ? -1.0 : 1.0;
  }
  const PlsdaModel model = plsda_fit(x, y, 1);
  const Eigen::VectorXd scores = plsda_predict(model, x);
  for (int i = 0; i < 4; ++i)
    for (int j = 4; j < 8; ++j) EXPECT_LT(scores[i], scores[j]);
}

TEST(Plsda, LatentScoresMutuallyOrthogonal) {
  const Eigen::MatrixXd x = random_matrix(60, 10, 21);
  const Eigen::VectorXd y = random_labels(60, 22);
  const PlsdaModel model = plsda_fit(x, y, 5);
  const Eigen::MatrixXd& t = model.training_scores;
  for (int a = 0; a < t.cols(); ++a)
    for (int b = a + 1; b < t.cols(); ++b) {
      const double dot = std::abs(t.col(a).dot(t.col(b)));
      const double scale = t.col(a).norm() * t.col(b).norm();
      EXPECT_LT(dot, 1e-8 * scale);
    }
}

TEST(Plsda, RequiresBothClassesAndValidComponents) {
  const Eigen::MatrixXd x = random_matrix(10, 3, 31);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(10);
  EXPECT_THROW(plsda_fit(x, y, 2), std::invalid_argument);
  y[0] = -1.0;
  EXPECT_THROW(plsda_fit(x, y, 0), std::invalid_argument);
  EXPECT_THROW(plsda_fit(x, y, 4), std::invalid_argument);  // > D
}

TEST(Plsda, OrderingInvariantToFeatureRescalingAfterStandardization) {
  const Eigen::MatrixXd x = random_matrix(40, 6, 41);
  const Eigen::VectorXd y = random_labels(40, 42);
  const Eigen::MatrixXd x_test = random_matrix(10, 6, 43);

  Eigen::VectorXd scale(6);
  Rng rng(44);
  for (int c = 0; c < 6; ++c) scale[c] = rng.uniform(0.2, 5.0);
  const Eigen::MatrixXd x2 = x * scale.asDiagonal();
  const Eigen::MatrixXd x2_test = x_test * scale.asDiagonal();

  const StandardizationStats s1 = standardize_fit(x);
  const StandardizationStats s2 = standardize_fit(x2);
  const PlsdaModel m1 = plsda_fit(standardize_apply(s1, x), y, 3);
  const PlsdaModel m2 = plsda_fit(standardize_apply(s2, x2), y, 3);
  const Eigen::VectorXd p1 = plsda_predict(m1, standardize_apply(s1, x_test));
  const Eigen::VectorXd p2 = plsda_predict(m2, standardize_apply(s2, x2_test));
  for (int i = 0; i < p1.size(); ++i)
    for (int j = 0; j < p1.size(); ++j)
      EXPECT_EQ(p1[i] < p1[j], p2[i] < p2[j]) << i << "," << j;
}

// ---------------------------------------------------------------------------
// SVM
// ---------------------------------------------------------------------------

TEST(Svm, TwoPointHardMargin) {
  Eigen::MatrixXd x(2, 2);
  x << -1.0, 0.0, 1.0, 0.0;
  Eigen::VectorXd y(2);
  y << -1.0, 1.0;
  const SvmModel model = svm_fit(x, y, SvmKind::Linear, 1.0, -1.0, 1e-6);
  const Eigen::VectorXd scores = svm_predict(model, x);
  EXPECT_NEAR(scores[0], -1.0, 1e-4);
  EXPECT_NEAR(scores[1], 1.0, 1e-4);
}

TEST(Svm, XorSeparableOnlyWithRbf) {
  Eigen::MatrixXd x(4, 2);
  x << 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0;
  Eigen::VectorXd y(4);
  y << 1.0, 1.0, -1.0, -1.0;

  const SvmModel linear = svm_fit(x, y, SvmKind::Linear, 1.0);
  const Eigen::VectorXd linear_scores = svm_predict(linear, x);
  int linear_correct = 0;
  for (int i = 0; i < 4; ++i)
    if (linear_scores[i] * y[i] > 0.0) ++linear_correct;
  EXPECT_LE(linear_correct, 3);  // accuracy <= 0.75

  const SvmModel rbf = svm_fit(x, y, SvmKind::Rbf, 10.0, 0.5);
  const Eigen::VectorXd rbf_scores = svm_predict(rbf, x);
  for (int i = 0; i < 4; ++i) EXPECT_GT(rbf_scores[i] * y[i], 0.0);
}

TEST(Svm, DualFeasibilityOnRandomProblems) {
  for (std::uint64_t seed : {51ull, 52ull, 53ull}) {
    const int n = 30;
    const Eigen::MatrixXd x = random_matrix(n, 4, seed);
    const Eigen::VectorXd y = random_labels(n, seed + 100);
    const double c = 1.0;
    const Eigen::MatrixXd kmat = x * x.transpose();
    const SvmDualSolution sol = svm_solve_dual(kmat, y, c, 1e-4);
    double balance = 0.0;
    for (int i = 0; i < n; ++i) {
      EXPECT_GE(sol.alpha[i], -1e-12);
      EXPECT_LE(sol.alpha[i], c + 1e-12);
      balance += sol.alpha[i] * y[i];
    }
    EXPECT_NEAR(balance, 0.0, 1e-6);
    EXPECT_LE(sol.residual, 1e-4);
  }
}

TEST(Svm, DualObjectiveNonDecreasing) {
  const Eigen::MatrixXd x = random_matrix(40, 5, 91);
  const Eigen::VectorXd y = random_labels(40, 92);
  const Eigen::MatrixXd kmat = x * x.transpose();
  std::vector<double> trace;
  svm_solve_dual(kmat, y, 1.0, 1e-4, &trace);
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i)
    EXPECT_GE(trace[i], trace[i - 1] - 1e-10);
}

TEST(Svm, RbfGammaDefaultsToOneOverD) {
  const Eigen::MatrixXd x = random_matrix(20, 8, 61);
  const Eigen::VectorXd y = random_labels(20, 62);
  const SvmModel model = svm_fit(x, y, SvmKind::Rbf, 1.0);
  EXPECT_DOUBLE_EQ(model.gamma, 1.0 / 8.0);
}

TEST(Svm, DeterministicGivenDataOrder) {
  const Eigen::MatrixXd x = random_matrix(25, 3, 71);
  const Eigen::VectorXd y = random_labels(25, 72);
  const SvmModel a = svm_fit(x, y, SvmKind::Rbf, 1.0);
  const SvmModel b = svm_fit(x, y, SvmKind::Rbf, 1.0);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ((a.alpha_y - b.alpha_y).norm(), 0.0);
}

TEST(Svm, ModelPersistenceRoundTrip) {
  const Eigen::MatrixXd x = random_matrix(20, 3, 81);
  const Eigen::VectorXd y = random_labels(20, 82);
  const StandardizationStats stats = standardize_fit(x);
  const SvmModel model = svm_fit(standardize_apply(stats, x), y, SvmKind::Rbf, 1.0);
  const PlsdaModel plsda = plsda_fit(standardize_apply(stats, x), y, 2);

  const std::string dir = std::filesystem::temp_directory_path().string();
  write_svm_model(model, stats, dir + "/flgpr_test.svm");
  write_plsda_model(plsda, stats, dir + "/flgpr_test.plsda");

  SvmModel svm2;
  PlsdaModel plsda2;
  StandardizationStats s2, s3;
  read_svm_model(dir + "/flgpr_test.svm", svm2, s2);
  read_plsda_model(dir + "/flgpr_test.plsda", plsda2, s3);
  EXPECT_EQ(svm2.bias, model.bias);
  EXPECT_EQ((svm2.alpha_y - model.alpha_y).norm(), 0.0);
  EXPECT_EQ((plsda2.coefficients - plsda.coefficients).norm(), 0.0);
  EXPECT_EQ(plsda2.intercept, plsda.intercept);
  EXPECT_EQ((s2.mean - stats.mean).norm(), 0.0);
  // Kind mismatch is a format error.
  EXPECT_THROW(
      [&] {
        SvmModel m;
        StandardizationStats s;
        read_svm_model(dir + "/flgpr_test.plsda", m, s);
      }(),
      FormatError);
}
