#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"
#include "bimodec/decode/windows.hpp"
#include "bimodec/eval/metrics.hpp"
#include "bimodec/features/features.hpp"

namespace bimodec::decode {

/// Column access needed by coordinate descent. Implementations need not
/// store the design explicitly.
template <class D>
concept LassoDesign = requires(const D& d, Eigen::Index j, const Eigen::VectorXd& r, Eigen::VectorXd& out, double a) {
  { d.rows() } -> std::convertible_to<Eigen::Index>;
  { d.cols() } -> std::convertible_to<Eigen::Index>;
  { d.col_dot(j, r) } -> std::convertible_to<double>;
  { d.col_axpy(j, a, out) };
  { d.col_sum(j) } -> std::convertible_to<double>;
  { d.col_sq_norm(j) } -> std::convertible_to<double>;
};

class DenseDesign {
 public:
  explicit DenseDesign(const Eigen::MatrixXd& x) : x_(x) {}
  Eigen::Index rows() const { return x_.rows(); }
  Eigen::Index cols() const { return x_.cols(); }
  double col_dot(Eigen::Index j, const Eigen::VectorXd& r) const { return x_.col(j).dot(r); }
  void col_axpy(Eigen::Index j, double a, Eigen::VectorXd& out) const { out.noalias() += a * x_.col(j); }
  double col_sum(Eigen::Index j) const { return x_.col(j).sum(); }
  double col_sq_norm(Eigen::Index j) const { return x_.col(j).squaredNorm(); }

 private:
  const Eigen::MatrixXd& x_;
};

/// The lagged window design of a WindowSet without materializing it. Column
/// l * F + f of window i is frame (end_i - K + 1 + l, f).
class LaggedDesign {
 public:
  explicit LaggedDesign(const WindowSet& w) : w_(w), f_(w.features()) {}
  Eigen::Index rows() const { return w_.size(); }
  Eigen::Index cols() const { return w_.width(); }

  double col_dot(Eigen::Index j, const Eigen::VectorXd& r) const {
    double s = 0.0;
    for (const auto& run : w_.runs()) s += column(j, run).dot(r.segment(run.first_window, run.count));
    return s;
  }
  void col_axpy(Eigen::Index j, double a, Eigen::VectorXd& out) const {
    for (const auto& run : w_.runs()) out.segment(run.first_window, run.count).noalias() += a * column(j, run);
  }
  double col_sum(Eigen::Index j) const {
    double s = 0.0;
    for (const auto& run : w_.runs()) s += column(j, run).sum();
    return s;
  }
  double col_sq_norm(Eigen::Index j) const {
    double s = 0.0;
    for (const auto& run : w_.runs()) s += column(j, run).squaredNorm();
    return s;
  }

 private:
  using Strided = Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<>>;
  Strided column(Eigen::Index j, const WindowSet::Run& run) const {
    const Eigen::Index l = j / f_, f = j % f_;
    const Eigen::Index first_row = run.first_end - w_.lag() + 1 + l;
    const auto& frames = w_.block().frames;
    return Strided(frames.data() + f * frames.rows() + first_row, run.count, Eigen::InnerStride<>(w_.stride()));
  }

  const WindowSet& w_;
  Eigen::Index f_;
};

struct LassoOptions {
  int max_iter = 1000;  ///< coordinate sweeps
  double tol = 1e-6;    ///< on the largest coefficient change in a full sweep
};

struct LassoFit {
  Eigen::VectorXd w;
  double bias = 0.0;
  bool converged = false;
  int sweeps = 0;
  std::vector<double> objective;  ///< after every sweep
};

namespace detail {

struct ColumnStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  ///< ||x_j - mean_j||^2 / N
};

template <LassoDesign D>
ColumnStats column_stats(const D& x) {
  const Eigen::Index p = x.cols();
  const auto n = static_cast<double>(x.rows());
  ColumnStats s{Eigen::VectorXd(p), Eigen::VectorXd(p)};
  for (Eigen::Index j = 0; j < p; ++j) {
    s.mean[j] = x.col_sum(j) / n;
    s.scale[j] = std::max(0.0, x.col_sq_norm(j) / n - s.mean[j] * s.mean[j]);
  }
  return s;
}

inline double soft_threshold(double z, double g) { return z > g ? z - g : (z < -g ? z + g : 0.0); }

}  // namespace detail

/// Cyclic coordinate descent for
///   (1/2N) ||y - X w - b||^2 + lambda ||w||_1,  b unpenalized,
/// alternating full sweeps with sweeps over the active set. Converged when a
/// full sweep moves no coefficient by tol or more. The objective is checked
/// after every sweep and must not increase.
template <LassoDesign D>
LassoFit lasso_fit_column(const D& x, const detail::ColumnStats& cs, const Eigen::VectorXd& y, double lambda,
                          const LassoOptions& opt = {}, const Eigen::VectorXd* warm = nullptr) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n < 2) throw DataError("lasso: need at least 2 samples");
  if (y.size() != n) throw ShapeError("lasso: y has " + std::to_string(y.size()) + " rows, X has " + std::to_string(n));
  if (!y.allFinite()) throw NumericError("lasso: non-finite target");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lasso: lambda must be finite and >= 0");
  const auto nd = static_cast<double>(n);

  LassoFit fit;
  fit.w = warm ? *warm : Eigen::VectorXd::Zero(p);
  if (fit.w.size() != p) throw ShapeError("lasso: warm start has wrong length");
  const double y_mean = y.mean();
  // r = y_c - X_c w
  Eigen::VectorXd r = y.array() - y_mean;
  double shift = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (fit.w[j] == 0.0) continue;
    x.col_axpy(j, -fit.w[j], r);
    shift += fit.w[j] * cs.mean[j];
  }
  r.array() += shift;
  if (!r.allFinite()) throw NumericError("lasso: non-finite design");

  auto objective = [&] { return r.squaredNorm() / (2.0 * nd) + lambda * fit.w.lpNorm<1>(); };
  auto update = [&](Eigen::Index j) {
    const double s = cs.scale[j];
    if (!(s > 1e-12)) {
      if (fit.w[j] != 0.0) {
        x.col_axpy(j, fit.w[j], r);
        r.array() -= fit.w[j] * cs.mean[j];
        fit.w[j] = 0.0;
      }
      return 0.0;
    }
    const double r_sum = r.sum();
    const double rho = (x.col_dot(j, r) - cs.mean[j] * r_sum) / nd + s * fit.w[j];
    const double w_new = detail::soft_threshold(rho, lambda) / s;
    const double delta = w_new - fit.w[j];
    if (delta != 0.0) {
      x.col_axpy(j, -delta, r);
      r.array() += delta * cs.mean[j];
      fit.w[j] = w_new;
    }
    return std::abs(delta);
  };
  double prev = objective();
  auto record = [&] {
    const double obj = objective();
    if (!std::isfinite(obj)) throw NumericError("lasso: objective became non-finite");
    if (obj > prev + 1e-10 * std::max(1.0, std::abs(prev))) {
      throw NumericError("lasso: objective increased from " + std::to_string(prev) + " to " + std::to_string(obj));
    }
    fit.objective.push_back(obj);
    prev = obj;
  };

  std::vector<Eigen::Index> active;
  while (fit.sweeps < opt.max_iter) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++fit.sweeps;
    record();
    if (max_change < opt.tol) {
      fit.converged = true;
      break;
    }
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (fit.w[j] != 0.0) active.push_back(j);
    }
    while (fit.sweeps < opt.max_iter) {
      double change = 0.0;
      for (Eigen::Index j : active) change = std::max(change, update(j));
      ++fit.sweeps;
      record();
      if (change < opt.tol) break;
    }
  }
  fit.bias = y_mean - cs.mean.dot(fit.w);
  return fit;
}

/// Sufficient statistics of a centered least-squares problem:
/// gram = Xc' Xc / N and xty = Xc' yc / N, Xc and yc column-centered.
struct GramProblem {
  Eigen::Index n = 0;
  Eigen::VectorXd mean;    ///< column means of X
  Eigen::MatrixXd gram;    ///< P x P
  Eigen::MatrixXd xty;     ///< P x outputs
  Eigen::VectorXd y_mean;  ///< per output
  Eigen::VectorXd yy;      ///< yc' yc / N per output
};

namespace detail {

inline void finish_gram(GramProblem& g, const Eigen::MatrixXd& xty_raw, const Eigen::MatrixXd& y) {
  const auto nd = static_cast<double>(g.n);
  g.gram = (g.gram - nd * g.mean * g.mean.transpose()) / nd;
  g.gram = 0.5 * (g.gram + g.gram.transpose()).eval();
  g.y_mean = y.colwise().mean().transpose();
  g.xty = (xty_raw - nd * g.mean * g.y_mean.transpose()) / nd;
  g.yy = ((y.rowwise() - g.y_mean.transpose()).colwise().squaredNorm() / nd).transpose();
  if (!g.gram.allFinite() || !g.xty.allFinite()) throw NumericError("lasso: non-finite design");
}

}  // namespace detail

inline GramProblem gram_problem(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) throw ShapeError("lasso: X has " + std::to_string(x.rows()) + " rows, Y has " + std::to_string(y.rows()));
  if (x.rows() < 2) throw DataError("lasso: need at least 2 samples");
  if (!x.allFinite() || !y.allFinite()) throw NumericError("lasso: non-finite input");
  GramProblem g;
  g.n = x.rows();
  g.mean = x.colwise().mean().transpose();
  g.gram = x.transpose() * x;
  detail::finish_gram(g, x.transpose() * y, y);
  return g;
}

/// Uncentered X'X of the lagged design of a stride-1 window set. Block
/// (l1, l2) only depends on the shift d = l2 - l1 up to the first and last
/// few frames of each trial, so it is the shift-d frame cross product minus
/// head and tail corrections.
inline Eigen::MatrixXd lagged_gram(const WindowSet& w) {
  if (w.stride() != 1) throw ConfigError("lagged_gram: window stride must be 1");
  const Eigen::Index k = w.lag(), f = w.features(), p = w.width();
  const auto& fr = w.block().frames;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
  std::vector<WindowSet::Run> regular;
  for (const auto& run : w.runs()) {
    const Eigen::Index a = run.first_end - k + 1;
    if (run.count >= k) {
      regular.push_back(run);
      continue;
    }
    for (Eigen::Index l1 = 0; l1 < k; ++l1) {
      for (Eigen::Index l2 = l1; l2 < k; ++l2) {
        g.block(l1 * f, l2 * f, f, f).noalias() += fr.middleRows(a + l1, run.count).transpose() * fr.middleRows(a + l2, run.count);
      }
    }
  }
  if (!regular.empty()) {
    const auto t = static_cast<Eigen::Index>(regular.size());
    // rows at a fixed offset from each trial start (or end) stacked over trials
    auto gather = [&](auto&& row_of) {
      Eigen::MatrixXd r(t, f);
      for (Eigen::Index i = 0; i < t; ++i) r.row(i) = fr.row(row_of(regular[static_cast<std::size_t>(i)]));
      return r;
    };
    for (Eigen::Index d = 0; d < k; ++d) {
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(f, f);
      for (const auto& run : regular) {
        const Eigen::Index a = run.first_end - k + 1, len = run.count + k - 1;
        s.noalias() += fr.middleRows(a, len - d).transpose() * fr.middleRows(a + d, len - d);
      }
      std::vector<Eigen::MatrixXd> head_cum(static_cast<std::size_t>(k), Eigen::MatrixXd::Zero(f, f));
      std::vector<Eigen::MatrixXd> tail_cum(static_cast<std::size_t>(k), Eigen::MatrixXd::Zero(f, f));
      for (Eigen::Index j = 0; j + 1 < k; ++j) {
        const Eigen::MatrixXd h0 = gather([&](const WindowSet::Run& r) { return r.first_end - k + 1 + j; });
        const Eigen::MatrixXd h1 = gather([&](const WindowSet::Run& r) { return r.first_end - k + 1 + j + d; });
        head_cum[static_cast<std::size_t>(j + 1)] = head_cum[static_cast<std::size_t>(j)] + h0.transpose() * h1;
        const Eigen::MatrixXd t0 = gather([&](const WindowSet::Run& r) { return r.first_end + r.count - 1 - d - j; });
        const Eigen::MatrixXd t1 = gather([&](const WindowSet::Run& r) { return r.first_end + r.count - 1 - j; });
        tail_cum[static_cast<std::size_t>(j + 1)] = tail_cum[static_cast<std::size_t>(j)] + t0.transpose() * t1;
      }
      for (Eigen::Index l1 = 0; l1 + d < k; ++l1) {
        const Eigen::Index l2 = l1 + d;
        g.block(l1 * f, l2 * f, f, f) += s - head_cum[static_cast<std::size_t>(l1)] - tail_cum[static_cast<std::size_t>(k - 1 - l2)];
      }
    }
  }
  g.triangularView<Eigen::StrictlyLower>() = g.transpose();
  return g;
}

/// Sums over windows of every lagged column.
inline Eigen::VectorXd lagged_col_sums(const WindowSet& w) {
  const Eigen::Index k = w.lag(), f = w.features();
  const auto& fr = w.block().frames;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(w.width());
  for (const auto& run : w.runs()) {
    const Eigen::Index a = run.first_end - k + 1;
    for (Eigen::Index l = 0; l < k; ++l) {
      for (Eigen::Index i = 0; i < run.count; ++i) s.segment(l * f, f) += fr.row(a + l + i * w.stride()).transpose();
    }
  }
  return s;
}

/// X' y for the lagged design.
inline Eigen::MatrixXd lagged_xty(const WindowSet& w, const Eigen::MatrixXd& y) {
  const Eigen::Index k = w.lag(), f = w.features();
  const auto& fr = w.block().frames;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(w.width(), y.cols());
  for (const auto& run : w.runs()) {
    const Eigen::Index a = run.first_end - k + 1;
    for (Eigen::Index i = 0; i < run.count; ++i) {
      const Eigen::Index row = a + i * w.stride();
      for (Eigen::Index l = 0; l < k; ++l) out.middleRows(l * f, f).noalias() += fr.row(row + l).transpose() * y.row(run.first_window + i);
    }
  }
  return out;
}

inline GramProblem gram_problem(const WindowSet& w, const Eigen::MatrixXd& y) {
  if (w.size() != y.rows()) throw ShapeError("lasso: window count differs from target rows");
  if (w.size() < 2) throw DataError("lasso: need at least 2 samples");
  if (!w.block().frames.allFinite() || !y.allFinite()) throw NumericError("lasso: non-finite input");
  if (w.stride() != 1) return gram_problem(w.dense(), y);
  GramProblem g;
  g.n = w.size();
  g.mean = lagged_col_sums(w) / static_cast<double>(g.n);
  g.gram = lagged_gram(w);
  detail::finish_gram(g, lagged_xty(w, y), y);
  return g;
}

/// Coordinate descent on the same objective as lasso_fit_column, carried out
/// on the Gram matrix: c = xty - gram * w is kept up to date so a coordinate
/// update costs O(P) regardless of N.
inline LassoFit lasso_fit_gram(const GramProblem& g, Eigen::Index output, double lambda, const LassoOptions& opt = {},
                               const Eigen::VectorXd* warm = nullptr) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lasso: lambda must be finite and >= 0");
  if (output < 0 || output >= g.xty.cols()) throw ShapeError("lasso: output index out of range");
  const Eigen::Index p = g.gram.rows();
  LassoFit fit;
  fit.w = warm ? *warm : Eigen::VectorXd::Zero(p);
  if (fit.w.size() != p) throw ShapeError("lasso: warm start has wrong length");
  const Eigen::VectorXd b = g.xty.col(output);
  Eigen::VectorXd c = b - g.gram * fit.w;
  const double yy = g.yy[output];

  // (1/2N)||yc - Xc w||^2 = (yy - w'b - w'c) / 2
  auto objective = [&] { return 0.5 * (yy - fit.w.dot(b) - fit.w.dot(c)) + lambda * fit.w.lpNorm<1>(); };
  auto update = [&](Eigen::Index j) {
    const double s = g.gram(j, j);
    double w_new = 0.0;
    if (s > 1e-12) w_new = detail::soft_threshold(c[j] + s * fit.w[j], lambda) / s;
    const double delta = w_new - fit.w[j];
    if (delta != 0.0) {
      c.noalias() -= delta * g.gram.col(j);
      fit.w[j] = w_new;
    }
    return std::abs(delta);
  };
  double prev = objective();
  auto record = [&] {
    const double obj = objective();
    if (!std::isfinite(obj)) throw NumericError("lasso: objective became non-finite");
    if (obj > prev + 1e-10 * std::max(1.0, std::abs(prev))) {
      throw NumericError("lasso: objective increased from " + std::to_string(prev) + " to " + std::to_string(obj));
    }
    fit.objective.push_back(obj);
    prev = obj;
  };

  // Active-set sweeps keep c current on the active set only; the rest is
  // refreshed from scratch before the next full sweep.
  std::vector<Eigen::Index> active;
  auto update_active = [&](Eigen::Index j) {
    const double s = g.gram(j, j);
    const double w_new = detail::soft_threshold(c[j] + s * fit.w[j], lambda) / s;
    const double delta = w_new - fit.w[j];
    if (delta != 0.0) {
      const double* col = g.gram.col(j).data();
      for (Eigen::Index k : active) c[k] -= delta * col[k];
      fit.w[j] = w_new;
    }
    return std::abs(delta);
  };
  while (fit.sweeps < opt.max_iter) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++fit.sweeps;
    record();
    if (max_change < opt.tol) {
      fit.converged = true;
      break;
    }
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (fit.w[j] != 0.0 && g.gram(j, j) > 1e-12) active.push_back(j);
    }
    const bool sparse = static_cast<Eigen::Index>(active.size()) * 8 < p;
    while (fit.sweeps < opt.max_iter) {
      double change = 0.0;
      for (Eigen::Index j : active) change = std::max(change, sparse ? update_active(j) : update(j));
      ++fit.sweeps;
      record();
      if (change < opt.tol) break;
    }
    if (sparse) {
      c = b;
      for (Eigen::Index k : active) {
        if (fit.w[k] != 0.0) c.noalias() -= fit.w[k] * g.gram.col(k);
      }
    }
  }
  fit.bias = g.y_mean[output] - g.mean.dot(fit.w);
  return fit;
}

/// Decoder y = W vec(window) + b with vec taken frame by frame (oldest first).
struct LinearModel {
  Eigen::Index lag = 1;
  Eigen::Index features = 0;
  Eigen::MatrixXd weights;  ///< 2 x (lag * features)
  Eigen::Vector2d bias = Eigen::Vector2d::Zero();
  double lambda = 0.0;
  bool converged = true;
  std::vector<int> sweeps;  ///< per output

  Eigen::Vector2d predict(const Eigen::MatrixXd& window) const {
    if (window.rows() != lag || window.cols() != features) {
      throw ShapeError("linear predict: window is " + std::to_string(window.rows()) + "x" + std::to_string(window.cols()) +
                       ", model expects K=" + std::to_string(lag) + " x F=" + std::to_string(features));
    }
    Eigen::Vector2d y = bias;
    for (Eigen::Index l = 0; l < lag; ++l) y.noalias() += weights.middleCols(l * features, features) * window.row(l).transpose();
    return y;
  }

  /// N x 2 predictions for every window of the set.
  Eigen::MatrixXd predict(const WindowSet& w) const {
    if (w.lag() != lag || w.features() != features) throw ShapeError("linear predict: window set does not match the model");
    const auto& frames = w.block().frames;
    Eigen::MatrixXd per_lag(frames.rows(), 2 * lag);
    for (Eigen::Index l = 0; l < lag; ++l) per_lag.middleCols(2 * l, 2).noalias() = frames * weights.middleCols(l * features, features).transpose();
    Eigen::MatrixXd out(w.size(), 2);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Eigen::RowVector2d y = bias.transpose();
      const Eigen::Index first = w.ends()[static_cast<std::size_t>(i)] - lag + 1;
      for (Eigen::Index l = 0; l < lag; ++l) y += per_lag.block(first + l, 2 * l, 1, 2);
      out.row(i) = y;
    }
    return out;
  }

  Eigen::Index nonzeros() const { return (weights.array() != 0.0).count(); }
};

template <LassoDesign D>
double lambda_max(const D& x, const detail::ColumnStats& cs, const Eigen::MatrixXd& y) {
  const auto n = static_cast<double>(x.rows());
  double m = 0.0;
  for (Eigen::Index o = 0; o < y.cols(); ++o) {
    const Eigen::VectorXd yc = y.col(o).array() - y.col(o).mean();
    for (Eigen::Index j = 0; j < x.cols(); ++j) m = std::max(m, std::abs(x.col_dot(j, yc) - cs.mean[j] * yc.sum()) / n);
  }
  return m;
}

/// Fits both outputs at one lambda.
template <LassoDesign D>
LinearModel lasso_fit(const D& x, const Eigen::MatrixXd& y, double lambda, Eigen::Index lag, const LassoOptions& opt = {},
                      const LinearModel* warm = nullptr, const detail::ColumnStats* stats = nullptr) {
  if (y.cols() != 2) throw ShapeError("lasso: Y must be N x 2");
  if (x.cols() % lag != 0) throw ShapeError("lasso: design width is not a multiple of the lag");
  const detail::ColumnStats cs = stats ? *stats : detail::column_stats(x);
  LinearModel m;
  m.lag = lag;
  m.features = x.cols() / lag;
  m.weights.resize(2, x.cols());
  m.lambda = lambda;
  for (Eigen::Index o = 0; o < 2; ++o) {
    Eigen::VectorXd start;
    if (warm) start = warm->weights.row(o).transpose();
    const LassoFit f = lasso_fit_column(x, cs, y.col(o), lambda, opt, warm ? &start : nullptr);
    m.weights.row(o) = f.w.transpose();
    m.bias[o] = f.bias;
    m.converged = m.converged && f.converged;
    m.sweeps.push_back(f.sweeps);
  }
  return m;
}

/// Both outputs at one lambda from precomputed sufficient statistics.
inline LinearModel lasso_fit(const GramProblem& g, double lambda, Eigen::Index lag, const LassoOptions& opt = {},
                             const LinearModel* warm = nullptr) {
  if (g.xty.cols() != 2) throw ShapeError("lasso: Y must be N x 2");
  if (g.gram.rows() % lag != 0) throw ShapeError("lasso: design width is not a multiple of the lag");
  LinearModel m;
  m.lag = lag;
  m.features = g.gram.rows() / lag;
  m.weights.resize(2, g.gram.rows());
  m.lambda = lambda;
  for (Eigen::Index o = 0; o < 2; ++o) {
    Eigen::VectorXd start;
    if (warm) start = warm->weights.row(o).transpose();
    const LassoFit f = lasso_fit_gram(g, o, lambda, opt, warm ? &start : nullptr);
    m.weights.row(o) = f.w.transpose();
    m.bias[o] = f.bias;
    m.converged = m.converged && f.converged;
    m.sweeps.push_back(f.sweeps);
  }
  return m;
}

/// Smallest lambda with an all-zero solution.
inline double lambda_max(const GramProblem& g) { return g.xty.cwiseAbs().maxCoeff(); }

/// Descending log-spaced grid from lambda_max down to lambda_max * ratio.
inline std::vector<double> lambda_grid(double lmax, int count = 12, double ratio = 1e-3) {
  if (count < 1 || !(ratio > 0.0 && ratio < 1.0)) throw ConfigError("lambda grid: count >= 1 and 0 < ratio < 1");
  if (!(lmax > 0.0)) return {0.0};
  std::vector<double> g;
  for (int i = 0; i < count; ++i) {
    g.push_back(count == 1 ? lmax : lmax * std::pow(ratio, static_cast<double>(i) / (count - 1)));
  }
  return g;
}

struct LambdaSelection {
  double lambda = 0.0;
  LinearModel model;
  std::vector<double> grid;        ///< descending
  std::vector<double> val_fvaf;    ///< mean over hands, NaN when undefined
  bool warning = false;
  std::string message;
};

/// Picks the lambda with the best mean validation FVAF over a warm-started
/// path. Ties go to the larger lambda. With patience > 0 the path stops after
/// that many consecutive lambdas below the best so far.
template <class FitFn, class ScoreFn>
LambdaSelection select_lambda_with(std::vector<double> grid, FitFn&& fit, ScoreFn&& score, int patience = 0) {
  if (grid.empty()) throw ConfigError("select_lambda: empty grid");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  LambdaSelection sel;
  sel.grid = grid;
  double best = -std::numeric_limits<double>::infinity();
  std::optional<LinearModel> prev;
  bool found = false;
  int worse = 0;
  for (double lambda : grid) {
    if (patience > 0 && worse >= patience) break;
    LinearModel m = fit(lambda, prev ? &*prev : nullptr);
    double v = std::numeric_limits<double>::quiet_NaN();
    try {
      v = score(m);
    } catch (const DataError&) {
    }
    sel.val_fvaf.push_back(v);
    if (std::isfinite(v) && v > best) {
      best = v;
      sel.lambda = lambda;
      sel.model = m;
      found = true;
      worse = 0;
    } else if (found) {
      ++worse;
    }
    prev = std::move(m);
  }
  if (!found) {
    sel.warning = true;
    sel.message = "validation FVAF undefined for every lambda; using the largest";
    sel.lambda = grid.front();
    sel.model = fit(grid.front(), nullptr);
  }
  return sel;
}

inline double mean_val_fvaf(const Eigen::MatrixXd& y, const Eigen::MatrixXd& yhat) {
  const Eigen::Vector2d f = eval::fvaf_hands(y, yhat);
  return f.mean();
}

inline LambdaSelection select_lambda(const GramProblem& g, Eigen::Index lag, const WindowSet& val, std::vector<double> grid,
                                     const LassoOptions& opt = {}, int patience = 0) {
  const Eigen::MatrixXd yv = val.targets();
  return select_lambda_with(
      std::move(grid), [&](double lambda, const LinearModel* warm) { return lasso_fit(g, lambda, lag, opt, warm); },
      [&](const LinearModel& m) { return mean_val_fvaf(yv, m.predict(val)); }, patience);
}

inline LambdaSelection select_lambda(const WindowSet& train, const WindowSet& val, std::vector<double> grid,
                                     const LassoOptions& opt = {}, int patience = 0) {
  return select_lambda(gram_problem(train, train.targets()), train.lag(), val, std::move(grid), opt, patience);
}

}  // namespace bimodec::decode
