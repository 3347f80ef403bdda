#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec::dsp {

struct FastIcaOptions {
  double tol = 1e-6;
  int max_iter = 500;
  std::uint64_t seed = 0x1CA5EED;
  /// Whitening drops directions whose variance is below this fraction of the largest.
  double rank_tol = 1e-10;
};

struct FastIcaResult {
  Eigen::MatrixXd unmixing;  ///< components x channels, applied to centred data
  Eigen::MatrixXd mixing;    ///< channels x components
  Eigen::MatrixXd sources;   ///< components x samples
  Eigen::VectorXd mean;      ///< per channel
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline Eigen::MatrixXd symmetric_decorrelate(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * w;
}

inline double correlation(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double ma = a.mean(), mb = b.mean();
  const auto da = (a.array() - ma), db = (b.array() - mb);
  const double den = std::sqrt((da * da).sum() * (db * db).sum());
  return den > 0.0 ? (da * db).sum() / den : 0.0;
}

}  // namespace detail

/// Symmetric FastICA with the tanh (logcosh) contrast. Whitening is by
/// eigendecomposition of the channel covariance; initial weights come from a
/// fixed seed so repeated runs agree bit for bit.
inline FastIcaResult fastica(const Eigen::MatrixXd& x, FastIcaOptions opt = {}) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index n = x.cols();
  if (channels < 1 || n < 2) throw DataError("fastica: need at least one channel and two samples");

  FastIcaResult r;
  r.mean = x.rowwise().mean();
  const Eigen::MatrixXd centred = x.colwise() - r.mean;
  const Eigen::MatrixXd cov = centred * centred.transpose() / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double top = es.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = channels - 1; i >= 0; --i) {
    if (es.eigenvalues()(i) > opt.rank_tol * top && es.eigenvalues()(i) > 0.0) keep.push_back(i);
  }
  const auto comps = static_cast<Eigen::Index>(keep.size());
  if (comps == 0) {
    r.unmixing = Eigen::MatrixXd::Zero(0, channels);
    r.mixing = Eigen::MatrixXd::Zero(channels, 0);
    r.sources = Eigen::MatrixXd::Zero(0, n);
    r.converged = true;
    return r;
  }
  Eigen::MatrixXd whiten(comps, channels), dewhiten(channels, comps);
  for (Eigen::Index k = 0; k < comps; ++k) {
    const double ev = es.eigenvalues()(keep[static_cast<std::size_t>(k)]);
    const auto vec = es.eigenvectors().col(keep[static_cast<std::size_t>(k)]);
    whiten.row(k) = vec.transpose() / std::sqrt(ev);
    dewhiten.col(k) = vec * std::sqrt(ev);
  }
  const Eigen::MatrixXd z = whiten * centred;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd w(comps, comps);
  for (Eigen::Index i = 0; i < comps; ++i)
    for (Eigen::Index j = 0; j < comps; ++j) w(i, j) = normal(rng);
  w = detail::symmetric_decorrelate(w);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::MatrixXd g = (w * z).array().tanh().matrix();
    const Eigen::VectorXd g_prime_mean = (1.0 - g.array().square()).rowwise().sum().matrix() * inv_n;
    Eigen::MatrixXd w_new = g * z.transpose() * inv_n - g_prime_mean.asDiagonal() * w;
    w_new = detail::symmetric_decorrelate(w_new);
    const double change = (1.0 - (w_new * w.transpose()).diagonal().array().abs()).abs().maxCoeff();
    w = w_new;
    r.iterations = it;
    if (change < opt.tol) {
      r.converged = true;
      break;
    }
  }
  r.unmixing = w * whiten;
  r.mixing = dewhiten * w.transpose();
  r.sources = w * z;
  return r;
}

struct EogCleanOptions {
  double corr_threshold = 0.3;
  int max_reject = 1;
  FastIcaOptions ica;
};

struct EogCleanResult {
  TimeSeries cleaned;
  /// channels x channels spatial projector; cleaned = P (x - mean) + mean.
  Eigen::MatrixXd projector;
  std::vector<int> rejected;
  std::vector<double> correlations;  ///< |corr| of each component with the reference
  bool converged = true;
  bool warning = false;
  std::string message;
};

/// Applies a projector from fastica_eog_clean to another series with the
/// same channels (e.g. a different sampling rate of the same recording).
inline TimeSeries apply_spatial_projector(const Eigen::MatrixXd& projector, const TimeSeries& ts) {
  if (projector.rows() != ts.channels() || projector.cols() != ts.channels()) {
    throw ShapeError("apply_spatial_projector: projector is " + std::to_string(projector.rows()) + "x" +
                     std::to_string(projector.cols()) + " but series has " + std::to_string(ts.channels()) +
                     " channels");
  }
  const Eigen::VectorXd mean = ts.data().rowwise().mean();
  SignalMatrix out = projector * (ts.data().colwise() - mean);
  out.colwise() += mean;
  return ts.with_data(std::move(out));
}

/// Unmixes the EEG with FastICA, zeroes the components most correlated with
/// the EOG reference (|corr| above threshold, at most max_reject of them) and
/// remixes. Below threshold, or when ICA does not converge, the input is
/// returned unchanged.
inline EogCleanResult fastica_eog_clean(const TimeSeries& eeg, const TimeSeries& eog_ref, EogCleanOptions opt = {}) {
  if (eeg.channels() < 2) throw DataError("fastica_eog_clean: need at least 2 EEG channels");
  if (eog_ref.samples() != eeg.samples() || std::abs(eog_ref.rate_hz() - eeg.rate_hz()) > 1e-9 * eeg.rate_hz()) {
    throw DataError("fastica_eog_clean: EOG reference must share rate and length with the EEG");
  }
  if (eog_ref.channels() < 1) throw DataError("fastica_eog_clean: empty EOG reference");

  EogCleanResult res;
  res.cleaned = eeg;
  res.projector = Eigen::MatrixXd::Identity(eeg.channels(), eeg.channels());

  const Eigen::MatrixXd x = eeg.data();
  const FastIcaResult ica = fastica(x, opt.ica);
  res.converged = ica.converged;
  if (!ica.converged) {
    res.warning = true;
    res.message = "FastICA did not converge in " + std::to_string(opt.ica.max_iter) + " iterations; EEG left unchanged";
    return res;
  }

  const Eigen::RowVectorXd ref = eog_ref.data().row(0);
  std::vector<std::pair<double, int>> ranked;
  for (Eigen::Index k = 0; k < ica.sources.rows(); ++k) {
    const double c = std::abs(detail::correlation(ica.sources.row(k), ref));
    res.correlations.push_back(c);
    ranked.emplace_back(c, static_cast<int>(k));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [c, k] : ranked) {
    if (static_cast<int>(res.rejected.size()) >= opt.max_reject || !(c > opt.corr_threshold)) break;
    res.rejected.push_back(k);
  }
  if (res.rejected.empty()) return res;

  for (int k : res.rejected) res.projector -= ica.mixing.col(k) * ica.unmixing.row(k);
  res.cleaned = apply_spatial_projector(res.projector, eeg);
  return res;
}

}  // namespace bimodec::dsp
