#pragma once

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"

namespace bimodec::eval {

/// Fraction of variance accounted for, in percent:
/// 100 * (1 - sum (y - yhat)^2 / sum (y - mean y)^2).
inline double fvaf(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& yhat) {
  if (y.size() != yhat.size()) throw ShapeError("fvaf: y has " + std::to_string(y.size()) + " samples, yhat " + std::to_string(yhat.size()));
  if (y.size() < 2) throw DataError("fvaf: need at least 2 samples");
  if (!y.allFinite() || !yhat.allFinite()) throw NumericError("fvaf: non-finite input");
  const double mean = y.mean();
  const double sst = (y.array() - mean).square().sum();
  if (!(sst > 0.0)) throw DataError("fvaf: y is constant, FVAF undefined");
  const double sse = (y - yhat).squaredNorm();
  return 100.0 * (1.0 - sse / sst);
}

/// Per-hand FVAF for N x 2 matrices (columns left, right).
inline Eigen::Vector2d fvaf_hands(const Eigen::MatrixXd& y, const Eigen::MatrixXd& yhat) {
  if (y.cols() != 2 || yhat.cols() != 2) throw ShapeError("fvaf_hands: expected N x 2 inputs");
  return {fvaf(y.col(0), yhat.col(0)), fvaf(y.col(1), yhat.col(1))};
}

/// Rows = decoded hand, columns = real hand: entry (i, j) is the FVAF of
/// prediction i against truth j. The diagonal is own-hand performance.
inline Eigen::Matrix2d specificity_matrix(const Eigen::VectorXd& pred_left, const Eigen::VectorXd& pred_right,
                                          const Eigen::VectorXd& true_left, const Eigen::VectorXd& true_right) {
  Eigen::Matrix2d m;
  m(0, 0) = fvaf(true_left, pred_left);
  m(0, 1) = fvaf(true_right, pred_left);
  m(1, 0) = fvaf(true_left, pred_right);
  m(1, 1) = fvaf(true_right, pred_right);
  return m;
}

}  // namespace bimodec::eval
