#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec::dsp {

struct AnalyticSeries {
  SignalMatrix envelope;  ///< |analytic|, >= 0
  SignalMatrix phase;     ///< arg(analytic) in (-pi, pi]
  double rate_hz = 1.0;
  double t0_s = 0.0;
};

/// Smallest m >= n whose only prime factors are 2, 3 and 5.
inline Eigen::Index fft_friendly_size(Eigen::Index n) {
  for (Eigen::Index m = std::max<Eigen::Index>(n, 1);; ++m) {
    Eigen::Index r = m;
    for (Eigen::Index f : {2, 3, 5}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

/// Analytic signal of one channel via the FFT method (offline). With
/// fft_size > n the input is zero-padded and the result truncated to n.
inline std::vector<std::complex<double>> analytic_signal(const double* x, Eigen::Index n, Eigen::Index fft_size = 0) {
  thread_local Eigen::FFT<double> fft;  // keeps twiddle plans across calls
  const Eigen::Index n_in = n;
  std::vector<double> in(x, x + n);
  if (fft_size > n) {
    in.resize(static_cast<std::size_t>(fft_size), 0.0);
    n = fft_size;
  }
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  // fwd on real input may return the half spectrum; rebuild the full one
  if (static_cast<Eigen::Index>(spec.size()) != n) {
    const auto half = spec.size();
    spec.resize(static_cast<std::size_t>(n));
    for (std::size_t k = half; k < static_cast<std::size_t>(n); ++k) spec[k] = std::conj(spec[static_cast<std::size_t>(n) - k]);
  }
  const Eigen::Index mid = n / 2;
  for (Eigen::Index k = 1; k < n; ++k) {
    auto& s = spec[static_cast<std::size_t>(k)];
    if (k < mid || (n % 2 == 1 && k == mid)) s *= 2.0;
    else if (n % 2 == 0 && k == mid) continue;
    else s = 0.0;
  }
  std::vector<std::complex<double>> out;
  fft.inv(out, spec);
  out.resize(static_cast<std::size_t>(n_in));
  return out;
}

/// Envelope and instantaneous phase of every channel. The transform length is
/// padded to a 2-3-5 smooth size so awkward lengths stay fast.
inline AnalyticSeries hilbert_analytic(const TimeSeries& ts) {
  if (ts.samples() < 8) throw DataError("hilbert_analytic: need at least 8 samples, got " + std::to_string(ts.samples()));
  AnalyticSeries a;
  a.envelope.resize(ts.channels(), ts.samples());
  a.phase.resize(ts.channels(), ts.samples());
  a.rate_hz = ts.rate_hz();
  a.t0_s = ts.t0_s();
  for (Eigen::Index c = 0; c < ts.channels(); ++c) {
    const auto z = analytic_signal(ts.data().row(c).data(), ts.samples(), fft_friendly_size(ts.samples()));
    for (Eigen::Index i = 0; i < ts.samples(); ++i) {
      const auto& v = z[static_cast<std::size_t>(i)];
      a.envelope(c, i) = std::abs(v);
      double ph = std::arg(v);
      if (ph <= -std::numbers::pi) ph = std::numbers::pi;
      a.phase(c, i) = ph;
    }
  }
  return a;
}

/// Removes 2*pi jumps along a phase trace.
inline void unwrap_phase(double* phase, Eigen::Index n) {
  double offset = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double raw = phase[i] + offset;
    double d = raw - phase[i - 1];
    while (d > std::numbers::pi) { offset -= 2.0 * std::numbers::pi; d -= 2.0 * std::numbers::pi; }
    while (d < -std::numbers::pi) { offset += 2.0 * std::numbers::pi; d += 2.0 * std::numbers::pi; }
    phase[i] = phase[i - 1] + d;
  }
}

inline double wrap_phase(double p) {
  double w = std::remainder(p, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

}  // namespace bimodec::dsp
