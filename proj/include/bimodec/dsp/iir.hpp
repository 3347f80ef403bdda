#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec::dsp {

using cplx = std::complex<double>;

enum class FilterFamily { Butterworth, Elliptic, Notch };
enum class BandType { Lowpass, Highpass, Bandpass, Bandstop };
enum class FilterMode { Causal, ZeroPhase };

inline std::string_view to_string(FilterFamily f) {
  switch (f) {
    case FilterFamily::Butterworth: return "butterworth";
    case FilterFamily::Elliptic: return "elliptic";
    case FilterFamily::Notch: return "notch";
  }
  return "?";
}

inline std::string_view to_string(BandType b) {
  switch (b) {
    case BandType::Lowpass: return "lowpass";
    case BandType::Highpass: return "highpass";
    case BandType::Bandpass: return "bandpass";
    case BandType::Bandstop: return "bandstop";
  }
  return "?";
}

/// What was asked for; kept next to the coefficients so a filter can be
/// audited or re-designed.
struct FilterDesign {
  FilterFamily family = FilterFamily::Butterworth;
  BandType band = BandType::Lowpass;
  int order = 1;
  std::vector<double> cutoffs_hz;
  double rate_hz = 1.0;
  double ripple_db = 0.0;
  double atten_db = 0.0;
  double q = 0.0;
};

/// y = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  cplx response(cplx z) const {
    const cplx zi = 1.0 / z;
    return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
  }

  double pole_modulus() const {
    // roots of z^2 + a1 z + a2
    const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
    return std::max(std::abs((-a1 + disc) / 2.0), std::abs((-a1 - disc) / 2.0));
  }

  /// State after an infinitely long unit step (direct form II transposed).
  std::pair<double, double> step_state() const {
    const double g = (b0 + b1 + b2) / (1.0 + a1 + a2);
    return {g - b0, b2 - a2 * g};
  }

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

class IirFilter {
 public:
  IirFilter(std::vector<Biquad> sections, FilterDesign design)
      : sections_(std::move(sections)), design_(std::move(design)) {
    for (const auto& s : sections_) {
      if (!std::isfinite(s.b0) || !std::isfinite(s.b1) || !std::isfinite(s.b2) || !std::isfinite(s.a1) ||
          !std::isfinite(s.a2)) {
        throw NumericError("IirFilter: non-finite coefficient");
      }
    }
    if (max_pole_modulus() >= 1.0 - 1e-9) {
      throw NumericError("IirFilter: unstable design (pole modulus " + std::to_string(max_pole_modulus()) + ")");
    }
  }

  const std::vector<Biquad>& sections() const { return sections_; }
  const FilterDesign& design() const { return design_; }
  double rate_hz() const { return design_.rate_hz; }

  cplx response(double freq_hz) const {
    const cplx z = std::polar(1.0, 2.0 * std::numbers::pi * freq_hz / design_.rate_hz);
    cplx h = 1.0;
    for (const auto& s : sections_) h *= s.response(z);
    return h;
  }

  double magnitude_db(double freq_hz) const { return 20.0 * std::log10(std::max(std::abs(response(freq_hz)), 1e-300)); }

  double max_pole_modulus() const {
    double m = 0.0;
    for (const auto& s : sections_) m = std::max(m, s.pole_modulus());
    return m;
  }

  /// Cascade of two filters designed for the same rate.
  IirFilter then(const IirFilter& other) const {
    if (other.rate_hz() != rate_hz()) throw ConfigError("IirFilter::then: rate mismatch");
    auto s = sections_;
    s.insert(s.end(), other.sections_.begin(), other.sections_.end());
    return IirFilter(std::move(s), design_);
  }

 private:
  std::vector<Biquad> sections_;
  FilterDesign design_;
};

namespace detail {

struct Zpk {
  std::vector<cplx> z, p;
  double k = 1.0;
};

inline Zpk butterworth_prototype(int order) {
  Zpk out;
  for (int m = 0; m < order; ++m) {
    out.p.push_back(std::polar(1.0, std::numbers::pi * (2.0 * m + order + 1) / (2.0 * order)));
  }
  return out;
}

// Jacobi elliptic helpers in normalized arguments (u is in units of K),
// evaluated through descending Landen transformations.
inline std::vector<double> landen(double k) {
  std::vector<double> v;
  for (int n = 0; n < 32 && k > 1e-300; ++n) {
    const double kp = std::sqrt(1.0 - k * k);
    k = std::pow(k / (1.0 + kp), 2);
    v.push_back(k);
    if (k < 1e-18) break;
  }
  return v;
}

inline cplx landen_up(cplx w, const std::vector<double>& v) {
  for (auto it = v.rbegin(); it != v.rend(); ++it) w = (1.0 + *it) * w / (1.0 + *it * w * w);
  return w;
}

/// sn(u*K, k)
inline cplx sne(cplx u, double k) { return landen_up(std::sin(u * std::numbers::pi / 2.0), landen(k)); }
/// cd(u*K, k)
inline cplx cde(cplx u, double k) { return landen_up(std::cos(u * std::numbers::pi / 2.0), landen(k)); }

/// Inverse of cde.
inline cplx acde(cplx w, double k) {
  const auto v = landen(k);
  for (std::size_t n = 0; n < v.size(); ++n) {
    const double v1 = n == 0 ? k : v[n - 1];
    w = w / (1.0 + std::sqrt(1.0 - w * w * v1 * v1)) * 2.0 / (1.0 + v[n]);
  }
  return 2.0 / std::numbers::pi * std::acos(w);
}

inline cplx asne(cplx w, double k) { return 1.0 - acde(w, k); }

/// Selectivity k (passband/stopband edge ratio) reachable with order N at
/// discrimination k1, from the degree equation.
inline double ellip_degree(int order, double k1) {
  const int pairs = order / 2;
  const double k1p = std::sqrt(1.0 - k1 * k1);
  double prod = 1.0;
  for (int i = 1; i <= pairs; ++i) {
    const double ui = (2.0 * i - 1.0) / order;
    prod *= std::pow(std::real(sne(ui, k1p)), 4);
  }
  const double kp = std::pow(k1p, order) * prod;
  return std::sqrt(1.0 - kp * kp);
}

/// Analog elliptic low-pass prototype with passband edge at 1 rad/s.
inline Zpk elliptic_prototype(int order, double ripple_db, double atten_db) {
  const double ep = std::sqrt(std::pow(10.0, ripple_db / 10.0) - 1.0);
  const double es = std::sqrt(std::pow(10.0, atten_db / 10.0) - 1.0);
  const double k1 = ep / es;
  const double k = ellip_degree(order, k1);
  const cplx j(0.0, 1.0);
  const double v0 = std::real(-j * asne(j / ep, k1) / static_cast<double>(order));

  Zpk out;
  const int pairs = order / 2;
  for (int i = 1; i <= pairs; ++i) {
    const double ui = (2.0 * i - 1.0) / order;
    const cplx zero = j / (k * cde(ui, k));
    const cplx pole = j * cde(ui - j * v0, k);
    out.z.push_back(zero);
    out.z.push_back(std::conj(zero));
    out.p.push_back(pole);
    out.p.push_back(std::conj(pole));
  }
  if (order % 2 == 1) out.p.push_back(j * sne(j * v0, k));
  for (auto& p : out.p) {
    if (p.real() > 0.0) p = cplx(-p.real(), p.imag());
  }

  cplx num = 1.0, den = 1.0;
  for (const auto& p : out.p) den *= -p;
  for (const auto& z : out.z) num *= -z;
  const double dc = order % 2 == 1 ? 1.0 : 1.0 / std::sqrt(1.0 + ep * ep);
  out.k = dc * std::real(den / num);
  return out;
}

inline Zpk lp2lp(Zpk in, double wo) {
  const int degree = static_cast<int>(in.p.size() - in.z.size());
  for (auto& z : in.z) z *= wo;
  for (auto& p : in.p) p *= wo;
  in.k *= std::pow(wo, degree);
  return in;
}

inline Zpk lp2hp(const Zpk& in, double wo) {
  Zpk out;
  const auto degree = in.p.size() - in.z.size();
  cplx num = 1.0, den = 1.0;
  for (const auto& z : in.z) { out.z.push_back(wo / z); num *= -z; }
  for (const auto& p : in.p) { out.p.push_back(wo / p); den *= -p; }
  for (std::size_t i = 0; i < degree; ++i) out.z.emplace_back(0.0);
  out.k = in.k * std::real(num / den);
  return out;
}

inline Zpk lp2bp(const Zpk& in, double wo, double bw) {
  Zpk out;
  const auto degree = in.p.size() - in.z.size();
  auto split = [&](const std::vector<cplx>& roots, std::vector<cplx>& dst) {
    for (const auto& r : roots) {
      const cplx s = r * bw / 2.0;
      const cplx d = std::sqrt(s * s - wo * wo);
      dst.push_back(s + d);
      dst.push_back(s - d);
    }
  };
  split(in.z, out.z);
  split(in.p, out.p);
  for (std::size_t i = 0; i < degree; ++i) out.z.emplace_back(0.0);
  out.k = in.k * std::pow(bw, static_cast<double>(degree));
  return out;
}

inline Zpk lp2bs(const Zpk& in, double wo, double bw) {
  Zpk out;
  const auto degree = in.p.size() - in.z.size();
  cplx num = 1.0, den = 1.0;
  auto split = [&](const std::vector<cplx>& roots, std::vector<cplx>& dst, cplx& prod) {
    for (const auto& r : roots) {
      prod *= -r;
      const cplx s = (bw / 2.0) / r;
      const cplx d = std::sqrt(s * s - wo * wo);
      dst.push_back(s + d);
      dst.push_back(s - d);
    }
  };
  split(in.z, out.z, num);
  split(in.p, out.p, den);
  for (std::size_t i = 0; i < degree; ++i) {
    out.z.emplace_back(0.0, wo);
    out.z.emplace_back(0.0, -wo);
  }
  out.k = in.k * std::real(num / den);
  return out;
}

inline Zpk bilinear(const Zpk& in, double fs) {
  const double fs2 = 2.0 * fs;
  Zpk out;
  cplx num = 1.0, den = 1.0;
  for (const auto& z : in.z) { out.z.push_back((fs2 + z) / (fs2 - z)); num *= fs2 - z; }
  for (const auto& p : in.p) { out.p.push_back((fs2 + p) / (fs2 - p)); den *= fs2 - p; }
  while (out.z.size() < out.p.size()) out.z.emplace_back(-1.0);
  out.k = in.k * std::real(num / den);
  return out;
}

struct RootGroup {
  std::vector<cplx> roots;  // one complex representative, or one/two reals
  bool complex_pair = false;

  std::pair<double, double> poly() const {
    if (complex_pair) return {-2.0 * roots[0].real(), std::norm(roots[0])};
    if (roots.size() == 2) return {-(roots[0].real() + roots[1].real()), roots[0].real() * roots[1].real()};
    return {-roots[0].real(), 0.0};
  }

  double distance_to(cplx x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& r : roots) {
      d = std::min(d, std::abs(r - x));
      if (complex_pair) d = std::min(d, std::abs(std::conj(r) - x));
    }
    return d;
  }
};

inline std::vector<RootGroup> group_roots(const std::vector<cplx>& roots) {
  std::vector<RootGroup> groups;
  std::vector<double> reals;
  std::vector<cplx> upper;
  for (const auto& r : roots) {
    const double tol = 1e-10 * std::max(1.0, std::abs(r));
    if (std::abs(r.imag()) <= tol) reals.push_back(r.real());
    else if (r.imag() > 0.0) upper.push_back(r);
  }
  std::sort(upper.begin(), upper.end(), [](cplx a, cplx b) { return std::abs(a) > std::abs(b); });
  for (const auto& r : upper) groups.push_back({{r}, true});
  std::sort(reals.begin(), reals.end());
  std::size_t i = 0;
  for (; i + 1 < reals.size(); i += 2) groups.push_back({{reals[i], reals[i + 1]}, false});
  if (i < reals.size()) groups.push_back({{reals[i]}, false});
  return groups;
}

inline std::vector<Biquad> zpk_to_sos(const Zpk& zpk) {
  auto poles = group_roots(zpk.p);
  auto zeros = group_roots(zpk.z);
  // closest-to-unit-circle poles first
  std::stable_sort(poles.begin(), poles.end(), [](const RootGroup& a, const RootGroup& b) {
    return std::abs(a.roots[0]) > std::abs(b.roots[0]);
  });

  std::vector<Biquad> sections;
  std::vector<bool> used(zeros.size(), false);
  for (const auto& pg : poles) {
    std::optional<std::size_t> pick;
    const bool single = pg.roots.size() == 1 && !pg.complex_pair;
    for (std::size_t zi = 0; zi < zeros.size(); ++zi) {
      if (used[zi]) continue;
      const bool zsingle = zeros[zi].roots.size() == 1 && !zeros[zi].complex_pair;
      if (single != zsingle) continue;
      if (!pick || zeros[zi].distance_to(pg.roots[0]) < zeros[*pick].distance_to(pg.roots[0])) pick = zi;
    }
    if (!pick) {
      for (std::size_t zi = 0; zi < zeros.size(); ++zi) {
        if (used[zi]) continue;
        if (!pick || zeros[zi].distance_to(pg.roots[0]) < zeros[*pick].distance_to(pg.roots[0])) pick = zi;
      }
    }
    Biquad s;
    const auto [a1, a2] = pg.poly();
    s.a1 = a1;
    s.a2 = a2;
    if (pick) {
      used[*pick] = true;
      const auto [c1, c2] = zeros[*pick].poly();
      s.b0 = 1.0;
      s.b1 = c1;
      s.b2 = c2;
    }
    sections.push_back(s);
  }
  for (std::size_t zi = 0; zi < zeros.size(); ++zi) {
    if (used[zi]) continue;
    const auto [c1, c2] = zeros[zi].poly();
    sections.push_back({1.0, c1, c2, 0.0, 0.0});
  }
  if (sections.empty()) sections.push_back({});
  sections.front().b0 *= zpk.k;
  sections.front().b1 *= zpk.k;
  sections.front().b2 *= zpk.k;
  return sections;
}

inline double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs); }

}  // namespace detail

/// Designs a Butterworth or elliptic filter as a biquad cascade (bilinear
/// transform with pre-warped edges). For elliptic designs `cutoffs_hz` are the
/// passband edges and ripple/attenuation bound the pass and stop bands.
inline IirFilter design_iir(FilterFamily family, BandType band, int order, std::vector<double> cutoffs_hz,
                            double rate_hz, double ripple_db = 0.1, double atten_db = 40.0) {
  if (family == FilterFamily::Notch) throw ConfigError("design_iir: use design_notch for notch filters");
  if (order < 1) throw ConfigError("design_iir: order must be >= 1");
  if (!(rate_hz > 0.0)) throw ConfigError("design_iir: rate must be positive");
  const std::size_t expected = (band == BandType::Bandpass || band == BandType::Bandstop) ? 2 : 1;
  if (cutoffs_hz.size() != expected) {
    throw ConfigError("design_iir: " + std::string(to_string(band)) + " needs " + std::to_string(expected) +
                      " cutoff(s)");
  }
  for (double f : cutoffs_hz) {
    if (!(f > 0.0) || f >= rate_hz / 2.0) {
      throw ConfigError("design_iir: cutoff " + std::to_string(f) + " Hz outside (0, Nyquist=" +
                        std::to_string(rate_hz / 2.0) + ")");
    }
  }
  if (expected == 2 && !(cutoffs_hz[0] < cutoffs_hz[1])) throw ConfigError("design_iir: band edges must increase");
  if (family == FilterFamily::Elliptic && !(ripple_db > 0.0 && atten_db > ripple_db)) {
    throw ConfigError("design_iir: elliptic needs 0 < ripple < attenuation");
  }

  detail::Zpk proto = family == FilterFamily::Butterworth ? detail::butterworth_prototype(order)
                                                          : detail::elliptic_prototype(order, ripple_db, atten_db);
  detail::Zpk analog;
  switch (band) {
    case BandType::Lowpass: analog = detail::lp2lp(proto, detail::prewarp(cutoffs_hz[0], rate_hz)); break;
    case BandType::Highpass: analog = detail::lp2hp(proto, detail::prewarp(cutoffs_hz[0], rate_hz)); break;
    case BandType::Bandpass:
    case BandType::Bandstop: {
      const double w1 = detail::prewarp(cutoffs_hz[0], rate_hz);
      const double w2 = detail::prewarp(cutoffs_hz[1], rate_hz);
      analog = band == BandType::Bandpass ? detail::lp2bp(proto, std::sqrt(w1 * w2), w2 - w1)
                                          : detail::lp2bs(proto, std::sqrt(w1 * w2), w2 - w1);
      break;
    }
  }
  FilterDesign d{family, band, order, cutoffs_hz, rate_hz,
                 family == FilterFamily::Elliptic ? ripple_db : 0.0,
                 family == FilterFamily::Elliptic ? atten_db : 0.0, 0.0};
  return IirFilter(detail::zpk_to_sos(detail::bilinear(analog, rate_hz)), std::move(d));
}

/// Second-order IIR notch with unit gain away from f0 and -3 dB width f0/Q.
inline IirFilter design_notch(double f0_hz, double rate_hz, double q = 35.0) {
  if (!(f0_hz > 0.0) || f0_hz >= rate_hz / 2.0) {
    throw ConfigError("design_notch: frequency " + std::to_string(f0_hz) + " Hz outside (0, Nyquist)");
  }
  if (!(q > 0.0)) throw ConfigError("design_notch: Q must be positive");
  const double w0 = 2.0 * std::numbers::pi * f0_hz / rate_hz;
  const double beta = std::tan(w0 / q / 2.0);
  const double gain = 1.0 / (1.0 + beta);
  Biquad s{gain, -2.0 * gain * std::cos(w0), gain, -2.0 * gain * std::cos(w0), 2.0 * gain - 1.0};
  return IirFilter({s}, FilterDesign{FilterFamily::Notch, BandType::Bandstop, 2, {f0_hz}, rate_hz, 0.0, 0.0, q});
}

/// Notches at each fundamental and every harmonic strictly below Nyquist;
/// coincident harmonics are notched once.
inline IirFilter design_notch_comb(const std::vector<double>& fundamentals_hz, double rate_hz, double q = 35.0) {
  std::vector<double> freqs;
  for (double f0 : fundamentals_hz) {
    if (!(f0 > 0.0)) throw ConfigError("design_notch_comb: fundamental must be positive");
    for (int h = 1; f0 * h < rate_hz / 2.0 - 1e-9; ++h) freqs.push_back(f0 * h);
  }
  if (freqs.empty()) throw ConfigError("design_notch_comb: no harmonic below Nyquist");
  std::sort(freqs.begin(), freqs.end());
  freqs.erase(std::unique(freqs.begin(), freqs.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              freqs.end());
  std::vector<Biquad> sections;
  for (double f : freqs) sections.push_back(design_notch(f, rate_hz, q).sections().front());
  return IirFilter(std::move(sections),
                   FilterDesign{FilterFamily::Notch, BandType::Bandstop, 2 * static_cast<int>(freqs.size()), freqs,
                                rate_hz, 0.0, 0.0, q});
}

namespace detail {

inline void sos_filter(const std::vector<Biquad>& sections, double* x, Eigen::Index n,
                       const std::vector<std::pair<double, double>>* initial = nullptr) {
  for (std::size_t si = 0; si < sections.size(); ++si) {
    const auto& s = sections[si];
    double z1 = 0.0, z2 = 0.0;
    if (initial) std::tie(z1, z2) = (*initial)[si];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double in = x[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      x[i] = out;
    }
  }
}

/// Steady-state section states for a constant input of `level`.
inline std::vector<std::pair<double, double>> step_states(const std::vector<Biquad>& sections, double level) {
  std::vector<std::pair<double, double>> st;
  double in = level;
  for (const auto& s : sections) {
    const auto [z1, z2] = s.step_state();
    st.emplace_back(z1 * in, z2 * in);
    in *= s.dc_gain();
  }
  return st;
}

inline void filtfilt(const std::vector<Biquad>& sections, const double* x, double* y, Eigen::Index n) {
  if (n == 0) return;
  Eigen::Index pad = 3 * (2 * static_cast<Eigen::Index>(sections.size()) + 1);
  pad = std::min(pad, n - 1);
  std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));
  for (Eigen::Index i = 0; i < pad; ++i) ext[static_cast<std::size_t>(i)] = 2.0 * x[0] - x[pad - i];
  for (Eigen::Index i = 0; i < n; ++i) ext[static_cast<std::size_t>(pad + i)] = x[i];
  for (Eigen::Index i = 0; i < pad; ++i) ext[static_cast<std::size_t>(pad + n + i)] = 2.0 * x[n - 1] - x[n - 2 - i];
  const auto len = static_cast<Eigen::Index>(ext.size());
  auto zi = step_states(sections, ext.front());
  sos_filter(sections, ext.data(), len, &zi);
  std::reverse(ext.begin(), ext.end());
  zi = step_states(sections, ext.front());
  sos_filter(sections, ext.data(), len, &zi);
  std::reverse(ext.begin(), ext.end());
  for (Eigen::Index i = 0; i < n; ++i) y[i] = ext[static_cast<std::size_t>(pad + i)];
}

}  // namespace detail

/// Causal: direct form II transposed from zero state. ZeroPhase: forward and
/// backward passes over an odd-reflected extension with steady-state initial
/// conditions.
inline TimeSeries apply_filter(const IirFilter& f, const TimeSeries& ts, FilterMode mode) {
  if (std::abs(f.rate_hz() - ts.rate_hz()) > 1e-9 * ts.rate_hz()) {
    throw ConfigError("apply_filter: filter designed for " + std::to_string(f.rate_hz()) + " Hz applied to " +
                      std::to_string(ts.rate_hz()) + " Hz series");
  }
  SignalMatrix out = ts.data();
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    double* row = out.row(c).data();
    if (mode == FilterMode::Causal) {
      detail::sos_filter(f.sections(), row, out.cols());
    } else {
      std::vector<double> src(row, row + out.cols());
      detail::filtfilt(f.sections(), src.data(), row, out.cols());
    }
  }
  if (!out.allFinite()) throw NumericError("apply_filter: non-finite output");
  return ts.with_data(std::move(out));
}

/// Sample-by-sample causal filter for streaming use.
class StreamingFilter {
 public:
  explicit StreamingFilter(const IirFilter& f) : sections_(f.sections()), state_(sections_.size(), {0.0, 0.0}) {}

  double process(double in) {
    for (std::size_t i = 0; i < sections_.size(); ++i) {
      const auto& s = sections_[i];
      auto& [z1, z2] = state_[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      in = out;
    }
    return in;
  }

  void reset() { std::fill(state_.begin(), state_.end(), std::pair{0.0, 0.0}); }

 private:
  std::vector<Biquad> sections_;
  std::vector<std::pair<double, double>> state_;
};

}  // namespace bimodec::dsp
