#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <tuple>
#include <numbers>
#include <utility>
#include <vector>

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec {

struct ResampleOptions {
  /// Low-pass cutoff as a fraction of min(source, target) rate.
  double cutoff_fraction = 0.45;
  /// Half-width of the transition band, same units.
  double transition_fraction = 0.05;
  double stopband_db = 80.0;
};

namespace detail {

struct Ratio {
  std::int64_t up = 1;
  std::int64_t down = 1;
};

/// Best rational approximation of target/source with bounded terms.
inline Ratio rational_ratio(double source_hz, double target_hz) {
  const double x = target_hz / source_hz;
  // continued fraction expansion
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double v = x;
  for (int iter = 0; iter < 64; ++iter) {
    const auto a = static_cast<std::int64_t>(std::floor(v));
    const std::int64_t h2 = a * h1 + h0;
    const std::int64_t k2 = a * k1 + k0;
    if (k2 > 100000 || h2 > 100000) break;
    h0 = h1; h1 = h2; k0 = k1; k1 = k2;
    const double frac = v - static_cast<double>(a);
    if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) <= 1e-12 * x) break;
    if (frac < 1e-12) break;
    v = 1.0 / frac;
  }
  if (k1 == 0 || h1 == 0 || std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) > 1e-9 * x) {
    throw ConfigError("resample: rate ratio " + std::to_string(x) + " has no small rational form");
  }
  return {h1, k1};
}

/// Index into a signal of length n with mirror extension (edge not repeated).
inline std::int64_t mirror_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Kaiser-windowed sinc, odd length, centred. Gain is L in the passband.
inline std::vector<double> kaiser_lowpass(double cutoff_norm, double transition_norm, double atten_db,
                                          std::int64_t up) {
  const double beta = atten_db > 50.0   ? 0.1102 * (atten_db - 8.7)
                      : atten_db >= 21.0 ? 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0)
                                         : 0.0;
  const double dw = 2.0 * std::numbers::pi * transition_norm;
  auto n = static_cast<std::int64_t>(std::ceil((atten_db - 8.0) / (2.285 * dw))) + 1;
  if (n % 2 == 0) ++n;
  const double centre = static_cast<double>(n - 1) / 2.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    const double m = static_cast<double>(k) - centre;
    const double arg = 2.0 * cutoff_norm * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = m / centre;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(k)] = 2.0 * cutoff_norm * sinc * w * static_cast<double>(up);
  }
  return h;
}

/// Branch p holds taps k with k % up == p, normalized to unit sum and reversed.
inline std::vector<Eigen::VectorXd> polyphase_branches(const std::vector<double>& h, std::int64_t up) {
  std::vector<std::vector<double>> tmp(static_cast<std::size_t>(up));
  for (std::size_t k = 0; k < h.size(); ++k) tmp[k % static_cast<std::size_t>(up)].push_back(h[k]);
  std::vector<Eigen::VectorXd> out;
  for (auto& b : tmp) {
    double s = 0.0;
    for (double v : b) s += v;
    if (s != 0.0) {
      for (double& v : b) v /= s;
    }
    Eigen::VectorXd r(static_cast<Eigen::Index>(b.size()));
    for (std::size_t j = 0; j < b.size(); ++j) r[static_cast<Eigen::Index>(j)] = b[b.size() - 1 - j];
    out.push_back(std::move(r));
  }
  return out;
}

/// Designs are reused across calls; the Bessel evaluations dominate otherwise.
inline std::vector<double> cached_kaiser_lowpass(double cutoff_norm, double transition_norm, double atten_db,
                                                 std::int64_t up) {
  using Key = std::tuple<double, double, double, std::int64_t>;
  static std::mutex mu;
  static std::map<Key, std::vector<double>> cache;
  const Key key{cutoff_norm, transition_norm, atten_db, up};
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, kaiser_lowpass(cutoff_norm, transition_norm, atten_db, up)).first;
  return it->second;
}

}  // namespace detail

/// Polyphase windowed-sinc resampling by a rational factor. The anti-alias
/// filter is zero-phase (offline) and each polyphase branch has exact unit DC
/// gain, so constants pass through unchanged. Output sample n sits at
/// t0 + n / target_rate_hz.
inline TimeSeries resample(const TimeSeries& ts, double target_rate_hz, ResampleOptions opt = {}) {
  if (!(target_rate_hz > 0.0) || !std::isfinite(target_rate_hz)) {
    throw ConfigError("resample: target rate must be positive");
  }
  if (ts.samples() == 0) throw DataError("resample: zero-length series");
  if (target_rate_hz == ts.rate_hz()) return ts;

  const auto ratio = detail::rational_ratio(ts.rate_hz(), target_rate_hz);
  const std::int64_t up = ratio.up, down = ratio.down;
  const double fs_up = ts.rate_hz() * static_cast<double>(up);
  const double base = std::min(ts.rate_hz(), target_rate_hz);
  const auto h = detail::cached_kaiser_lowpass(opt.cutoff_fraction * base / fs_up,
                                        2.0 * opt.transition_fraction * base / fs_up, opt.stopband_db, up);
  const auto taps = static_cast<std::int64_t>(h.size());
  const std::int64_t centre = (taps - 1) / 2;

  // Polyphase branches, stored time-reversed so each output is a contiguous dot product.
  const auto branch = detail::polyphase_branches(h, up);
  const std::int64_t n_in = ts.samples();
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  SignalMatrix out(ts.channels(), n_out);
  for (Eigen::Index c = 0; c < ts.channels(); ++c) {
    const double* x = ts.data().row(c).data();
    double* y = out.row(c).data();
    for (std::int64_t n = 0; n < n_out; ++n) {
      // y[n] = sum_k h[k] * xup[n*down + centre - k], xup nonzero where index % up == 0
      const std::int64_t pos = n * down + centre;
      const std::int64_t phase = ((pos % up) + up) % up;
      const Eigen::VectorXd& b = branch[static_cast<std::size_t>(phase)];
      // tap k = phase + j*up reads input (pos - k) / up; reversed, tap j reads lo + j
      const std::int64_t first_in = (pos - phase) / up;
      double acc = 0.0;
      const auto nb = static_cast<std::int64_t>(b.size());
      const std::int64_t lo = first_in - (nb - 1);
      if (lo >= 0 && first_in < n_in) {
        acc = b.dot(Eigen::Map<const Eigen::VectorXd>(x + lo, nb));
      } else {
        for (std::int64_t j = 0; j < nb; ++j) acc += b[j] * x[detail::mirror_index(lo + j, n_in)];
      }
      y[n] = acc;
    }
  }
  return TimeSeries(std::move(out), target_rate_hz, ts.t0_s(), ts.labels(), ts.kind());
}

}  // namespace bimodec
