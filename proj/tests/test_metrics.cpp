#include <random>

#include <gtest/gtest.h>

#include "bimodec/eval/metrics.hpp"
#include "support.hpp"

using namespace bimodec;

TEST(Fvaf, PerfectPredictionIsHundred) {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd y = testing_support::gaussian(50, 1, rng).col(0);
  EXPECT_NEAR(eval::fvaf(y, y), 100.0, 1e-9);
}

TEST(Fvaf, MeanPredictionIsZero) {
  std::mt19937_64 rng(2);
  const Eigen::VectorXd y = testing_support::gaussian(50, 1, rng).col(0);
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(50, y.mean());
  EXPECT_NEAR(eval::fvaf(y, m), 0.0, 1e-9);
}

TEST(Fvaf, HandComputedCase) {
  // sst = 2, sse = 1
  EXPECT_NEAR(eval::fvaf(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 4)), 50.0, 1e-12);
}

TEST(Fvaf, MatchesDirectFormula) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd y = testing_support::gaussian(30, 1, rng).col(0);
    const Eigen::VectorXd yh = y + testing_support::gaussian(30, 1, rng, 0.5).col(0);
    double sse = 0, sst = 0;
    for (int i = 0; i < 30; ++i) {
      sse += (y[i] - yh[i]) * (y[i] - yh[i]);
      sst += (y[i] - y.mean()) * (y[i] - y.mean());
    }
    EXPECT_NEAR(eval::fvaf(y, yh), 100.0 * (1.0 - sse / sst), 1e-9);
  }
}

TEST(Fvaf, ShiftAndScaleInvariantJointly) {
  std::mt19937_64 rng(4);
  const Eigen::VectorXd y = testing_support::gaussian(40, 1, rng).col(0);
  const Eigen::VectorXd yh = y + testing_support::gaussian(40, 1, rng).col(0);
  const double f = eval::fvaf(y, yh);
  EXPECT_NEAR(eval::fvaf((3.0 * y).array() + 7.0, (3.0 * yh).array() + 7.0), f, 1e-9);
}

TEST(Fvaf, Errors) {
  EXPECT_THROW(eval::fvaf(Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, 2, 3)), DataError);
  EXPECT_THROW(eval::fvaf(Eigen::Vector3d(1, 2, 3), Eigen::Vector2d(1, 2)), ShapeError);
  EXPECT_THROW(eval::fvaf(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), DataError);
  EXPECT_THROW(eval::fvaf(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, NAN, 3)), NumericError);
}

TEST(Specificity, DiagonalIsOwnHand) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd y = testing_support::gaussian(60, 2, rng);
  const Eigen::MatrixXd yh = y + testing_support::gaussian(60, 2, rng, 0.3);
  const Eigen::Matrix2d s = eval::specificity_matrix(yh.col(0), yh.col(1), y.col(0), y.col(1));
  const Eigen::Vector2d own = eval::fvaf_hands(y, yh);
  EXPECT_DOUBLE_EQ(s(0, 0), own[0]);
  EXPECT_DOUBLE_EQ(s(1, 1), own[1]);
  EXPECT_DOUBLE_EQ(s(0, 1), eval::fvaf(y.col(1), yh.col(0)));
  EXPECT_DOUBLE_EQ(s(1, 0), eval::fvaf(y.col(0), yh.col(1)));
  // independent hands: predicting the other one is worse than the mean
  EXPECT_LT(s(0, 1), 0.0);
  EXPECT_LT(s(1, 0), 0.0);
}
