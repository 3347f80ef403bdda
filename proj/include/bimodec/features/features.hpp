#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"
#include "bimodec/core/resample.hpp"
#include "bimodec/core/time_series.hpp"
#include "bimodec/dsp/hilbert.hpp"
#include "bimodec/dsp/iir.hpp"

namespace bimodec::features {

struct BandSpec {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

/// delta .. high-gamma, in column order.
inline const std::vector<BandSpec>& standard_bands() {
  static const std::vector<BandSpec> bands{
      {"delta", 1.0, 4.0},       {"theta", 4.0, 8.0},          {"alpha", 8.0, 13.0},
      {"beta", 13.0, 30.0},      {"low-gamma", 30.0, 50.0},    {"mid-gamma", 70.0, 110.0},
      {"high-gamma", 130.0, 200.0}};
  return bands;
}

struct FeatureOptions {
  int bandpass_order = 4;
  dsp::FilterMode mode = dsp::FilterMode::ZeroPhase;
  double feature_rate_hz = 12.5;
  /// A band is extracted from a series only when rate >= factor * hi edge.
  double min_rate_factor = 2.5;
  bool log_power = false;
  /// Encode phase as (sin, cos) instead of the raw wrapped angle.
  bool sincos_phase = false;
};

/// Per-column z-score parameters, always computed from training frames.
struct StandardizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::vector<bool> constant;
};

/// Aligned multi-modal frames (rows = frames, columns = features).
struct FeatureStream {
  Eigen::MatrixXd frames;
  double rate_hz = 12.5;
  double t0_s = 0.0;
  std::vector<std::string> columns;
  std::map<std::string, std::vector<Eigen::Index>> groups;
  std::optional<StandardizationStats> stats;

  Eigen::Index size() const { return frames.rows(); }
  Eigen::Index width() const { return frames.cols(); }
  double time_at(Eigen::Index i) const { return t0_s + static_cast<double>(i) / rate_hz; }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) { parts.push_back(cur); cur.clear(); }
    else cur.push_back(ch);
  }
  parts.push_back(cur);
  return parts;
}

/// Decimate a non-negative trace; ringing from the anti-alias filter is clipped at 0.
inline Eigen::RowVectorXd resample_power(const Eigen::RowVectorXd& p, double rate, double t0, double target) {
  SignalMatrix m = p;
  auto out = resample(TimeSeries(std::move(m), rate, t0, {"p"}, SignalKind::Feature), target);
  return out.data().row(0).cwiseMax(0.0);
}

inline Eigen::RowVectorXd resample_phase(Eigen::RowVectorXd ph, double rate, double t0, double target) {
  dsp::unwrap_phase(ph.data(), ph.size());
  SignalMatrix m = ph;
  auto out = resample(TimeSeries(std::move(m), rate, t0, {"p"}, SignalKind::Feature), target);
  Eigen::RowVectorXd r = out.data().row(0);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = dsp::wrap_phase(r(i));
  return r;
}

inline std::vector<std::string> feature_types(const FeatureOptions& opt) {
  if (opt.sincos_phase) return {"power", "sin", "cos"};
  return {"power", "phase"};
}

}  // namespace detail

/// Band power and phase traces for one series, resampled to the feature rate.
/// Rows are ordered (channel, band, feature type) and labelled
/// "<channel>:<band>:<type>".
inline TimeSeries extract_band_features(const TimeSeries& eeg, const std::vector<BandSpec>& bands,
                                        const FeatureOptions& opt = {}) {
  for (const auto& b : bands) {
    if (!(b.lo_hz < b.hi_hz) || !(b.lo_hz > 0.0)) throw ConfigError("band '" + b.name + "' needs 0 < lo < hi");
    if (b.hi_hz >= eeg.rate_hz() / 2.0) {
      throw ConfigError("band '" + b.name + "' upper edge " + std::to_string(b.hi_hz) + " Hz is at or above Nyquist (" +
                        std::to_string(eeg.rate_hz() / 2.0) + " Hz)");
    }
    if (eeg.rate_hz() < opt.min_rate_factor * b.hi_hz) {
      throw ConfigError("band '" + b.name + "' needs a series sampled at >= " +
                        std::to_string(opt.min_rate_factor * b.hi_hz) + " Hz");
    }
  }
  const auto types = detail::feature_types(opt);
  const auto per_band = static_cast<Eigen::Index>(types.size());
  const auto n_bands = static_cast<Eigen::Index>(bands.size());

  std::optional<Eigen::Index> frames;
  SignalMatrix out;
  std::vector<std::string> labels(static_cast<std::size_t>(eeg.channels() * n_bands * per_band));

  for (Eigen::Index b = 0; b < n_bands; ++b) {
    const auto& band = bands[static_cast<std::size_t>(b)];
    const auto bp = dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Bandpass, opt.bandpass_order,
                                    {band.lo_hz, band.hi_hz}, eeg.rate_hz());
    const auto analytic = dsp::hilbert_analytic(dsp::apply_filter(bp, eeg, opt.mode));
    for (Eigen::Index c = 0; c < eeg.channels(); ++c) {
      Eigen::RowVectorXd power = analytic.envelope.row(c).array().square();
      Eigen::RowVectorXd pw = detail::resample_power(power, eeg.rate_hz(), eeg.t0_s(), opt.feature_rate_hz);
      if (opt.log_power) pw = (pw.array() + 1e-12).log();
      Eigen::RowVectorXd ph = detail::resample_phase(analytic.phase.row(c), eeg.rate_hz(), eeg.t0_s(), opt.feature_rate_hz);
      if (!frames) {
        frames = pw.size();
        out.resize(eeg.channels() * n_bands * per_band, *frames);
      }
      const Eigen::Index row = (c * n_bands + b) * per_band;
      const std::string prefix = eeg.labels()[static_cast<std::size_t>(c)] + ":" + band.name + ":";
      out.row(row) = pw;
      labels[static_cast<std::size_t>(row)] = prefix + types[0];
      if (opt.sincos_phase) {
        out.row(row + 1) = ph.array().sin();
        out.row(row + 2) = ph.array().cos();
        labels[static_cast<std::size_t>(row + 1)] = prefix + types[1];
        labels[static_cast<std::size_t>(row + 2)] = prefix + types[2];
      } else {
        out.row(row + 1) = ph;
        labels[static_cast<std::size_t>(row + 1)] = prefix + types[1];
      }
    }
  }
  return TimeSeries(std::move(out), opt.feature_rate_hz, eeg.t0_s(), std::move(labels), SignalKind::Feature);
}

/// Routes each band to the slowest provided series that can carry it, then
/// merges into (channel, band, type) row order. Both series must cover the
/// same span with the same channel labels.
inline TimeSeries extract_eeg_features(const TimeSeries& eeg, const std::optional<TimeSeries>& eeg_fast,
                                       const std::vector<BandSpec>& bands, const FeatureOptions& opt = {}) {
  std::vector<BandSpec> slow, fast;
  std::vector<std::pair<bool, std::size_t>> route;  // (is_fast, index within its list)
  for (const auto& b : bands) {
    if (eeg.rate_hz() >= opt.min_rate_factor * b.hi_hz && b.hi_hz < eeg.rate_hz() / 2.0) {
      route.emplace_back(false, slow.size());
      slow.push_back(b);
    } else if (eeg_fast && eeg_fast->rate_hz() >= opt.min_rate_factor * b.hi_hz && b.hi_hz < eeg_fast->rate_hz() / 2.0) {
      route.emplace_back(true, fast.size());
      fast.push_back(b);
    } else {
      throw ConfigError("band '" + b.name + "' (" + std::to_string(b.hi_hz) + " Hz) exceeds the Nyquist range of the provided EEG");
    }
  }
  if (fast.empty()) return extract_band_features(eeg, bands, opt);
  if (eeg_fast->channels() != eeg.channels() || std::abs(eeg_fast->t0_s() - eeg.t0_s()) > 1e-9 ||
      std::abs(eeg_fast->duration_s() - eeg.duration_s()) > 1e-9) {
    throw DataError("extract_eeg_features: fast and slow EEG must cover the same span and channels");
  }
  const TimeSeries fs = slow.empty() ? TimeSeries() : extract_band_features(eeg, slow, opt);
  const TimeSeries ff = extract_band_features(*eeg_fast, fast, opt);
  const Eigen::Index frames = ff.samples();
  if (!slow.empty() && fs.samples() != frames) throw DataError("extract_eeg_features: frame count mismatch");

  const auto per_band = static_cast<Eigen::Index>(detail::feature_types(opt).size());
  const auto n_bands = static_cast<Eigen::Index>(bands.size());
  SignalMatrix out(eeg.channels() * n_bands * per_band, frames);
  std::vector<std::string> labels(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index c = 0; c < eeg.channels(); ++c) {
    for (Eigen::Index b = 0; b < n_bands; ++b) {
      const auto [is_fast, idx] = route[static_cast<std::size_t>(b)];
      const TimeSeries& src = is_fast ? ff : fs;
      const auto src_bands = static_cast<Eigen::Index>(is_fast ? fast.size() : slow.size());
      for (Eigen::Index t = 0; t < per_band; ++t) {
        const Eigen::Index from = (c * src_bands + static_cast<Eigen::Index>(idx)) * per_band + t;
        const Eigen::Index to = (c * n_bands + b) * per_band + t;
        out.row(to) = src.data().row(from);
        labels[static_cast<std::size_t>(to)] = src.labels()[static_cast<std::size_t>(from)];
      }
    }
  }
  return TimeSeries(std::move(out), opt.feature_rate_hz, eeg.t0_s(), std::move(labels), SignalKind::Feature);
}

/// Groups derived from column labels: "eeg", "eeg:<band>", "eeg:<band>:<type>",
/// "fnirs", "fnirs:<wavelength>".
inline std::map<std::string, std::vector<Eigen::Index>> build_groups(const std::vector<std::string>& eeg_labels,
                                                                     const std::vector<std::string>& fnirs_labels,
                                                                     Eigen::Index fnirs_offset) {
  std::map<std::string, std::vector<Eigen::Index>> g;
  for (std::size_t i = 0; i < eeg_labels.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const auto parts = detail::split(eeg_labels[i], ':');
    g["eeg"].push_back(idx);
    if (parts.size() >= 3) {
      g["eeg:" + parts[1]].push_back(idx);
      g["eeg:" + parts[1] + ":" + parts[2]].push_back(idx);
    }
  }
  for (std::size_t i = 0; i < fnirs_labels.size(); ++i) {
    const auto idx = fnirs_offset + static_cast<Eigen::Index>(i);
    g["fnirs"].push_back(idx);
    const auto parts = detail::split(fnirs_labels[i], ':');
    if (parts.size() >= 2) g["fnirs:" + parts.back()].push_back(idx);
  }
  return g;
}

/// Puts EEG features and fNIRS dOD on one clock. Frames outside the mutual
/// support are dropped; clocks must share the rate and a frame grid.
inline FeatureStream align_streams(const TimeSeries& eeg_features, const TimeSeries& fnirs_od) {
  const double rate = eeg_features.rate_hz();
  if (std::abs(fnirs_od.rate_hz() - rate) > 1e-9 * rate) {
    throw DataError("align_streams: EEG features at " + std::to_string(rate) + " Hz, fNIRS at " +
                    std::to_string(fnirs_od.rate_hz()) + " Hz; resample first");
  }
  const double offset_frames = (fnirs_od.t0_s() - eeg_features.t0_s()) * rate;
  const double rounded = std::round(offset_frames);
  if (std::abs(offset_frames - rounded) > 1e-3) throw DataError("align_streams: clocks are not on a common frame grid");
  const auto shift = static_cast<Eigen::Index>(rounded);  // fNIRS frame 0 == EEG frame `shift`
  const Eigen::Index eeg_first = std::max<Eigen::Index>(0, shift);
  const Eigen::Index eeg_last = std::min(eeg_features.samples(), shift + fnirs_od.samples());
  if (eeg_last <= eeg_first) throw DataError("align_streams: no overlapping support");
  const Eigen::Index frames = eeg_last - eeg_first;
  const Eigen::Index fe = eeg_features.channels(), ff = fnirs_od.channels();

  FeatureStream s;
  s.rate_hz = rate;
  s.t0_s = eeg_features.time_at(eeg_first);
  s.frames.resize(frames, fe + ff);
  s.frames.leftCols(fe) = eeg_features.data().middleCols(eeg_first, frames).transpose();
  s.frames.rightCols(ff) = fnirs_od.data().middleCols(eeg_first - shift, frames).transpose();
  s.columns = eeg_features.labels();
  s.columns.insert(s.columns.end(), fnirs_od.labels().begin(), fnirs_od.labels().end());
  s.groups = build_groups(eeg_features.labels(), fnirs_od.labels(), fe);
  return s;
}

/// One causal decoding input: the last K frames up to and including t.
struct LagWindow {
  Eigen::MatrixXd x;  ///< K x F, oldest frame first
  double t_s = 0.0;
  Eigen::Vector2d y = Eigen::Vector2d::Zero();  ///< [left, right] %MVC at t
};

inline Eigen::Index lag_frames(double window_ms, double rate_hz) {
  return static_cast<Eigen::Index>(std::llround(window_ms / 1000.0 * rate_hz)) + 1;
}

/// One window per frame with a full history; frame t is the newest row.
inline std::vector<LagWindow> build_lag_windows(const FeatureStream& stream, const TimeSeries& force, double window_ms = 800.0) {
  const Eigen::Index k = lag_frames(window_ms, stream.rate_hz);
  if (force.channels() != 2) throw DataError("build_lag_windows: force must have 2 channels (left, right)");
  if (std::abs(force.rate_hz() - stream.rate_hz) > 1e-9 * stream.rate_hz ||
      std::abs(force.t0_s() - stream.t0_s) > 0.5 / stream.rate_hz || force.samples() != stream.size()) {
    throw DataError("build_lag_windows: force and feature stream do not share a clock");
  }
  if (stream.size() < k) {
    throw DataError("build_lag_windows: stream has " + std::to_string(stream.size()) + " frames, window needs " +
                    std::to_string(k));
  }
  std::vector<LagWindow> out;
  out.reserve(static_cast<std::size_t>(stream.size() - k + 1));
  for (Eigen::Index t = k - 1; t < stream.size(); ++t) {
    LagWindow w;
    w.x = stream.frames.middleRows(t - k + 1, k);
    w.t_s = stream.time_at(t);
    w.y = Eigen::Vector2d(force.data()(0, t), force.data()(1, t));
    out.push_back(std::move(w));
  }
  return out;
}

/// Column mean/std over the given frames. Columns with (near) zero spread are
/// flagged constant.
inline StandardizationStats compute_stats(const Eigen::MatrixXd& train_frames) {
  StandardizationStats s;
  const Eigen::Index n = train_frames.rows();
  if (n < 1) throw DataError("compute_stats: no training frames");
  s.mean = train_frames.colwise().mean().transpose();
  s.std.resize(train_frames.cols());
  s.constant.assign(static_cast<std::size_t>(train_frames.cols()), false);
  for (Eigen::Index c = 0; c < train_frames.cols(); ++c) {
    const double var = (train_frames.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    s.std(c) = sd;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))))) s.constant[static_cast<std::size_t>(c)] = true;
  }
  return s;
}

inline Eigen::MatrixXd apply_stats(const Eigen::MatrixXd& frames, const StandardizationStats& s) {
  if (frames.cols() != s.mean.size()) throw ShapeError("standardize: frame width does not match stats");
  Eigen::MatrixXd out(frames.rows(), frames.cols());
  for (Eigen::Index c = 0; c < frames.cols(); ++c) {
    if (s.constant[static_cast<std::size_t>(c)]) out.col(c).setZero();
    else out.col(c) = (frames.col(c).array() - s.mean(c)) / s.std(c);
  }
  return out;
}

/// z-scores a stream with stats computed elsewhere (the training split).
inline FeatureStream standardize(const FeatureStream& stream, const StandardizationStats& train_stats) {
  FeatureStream out = stream;
  out.frames = apply_stats(stream.frames, train_stats);
  out.stats = train_stats;
  return out;
}

}  // namespace bimodec::features
