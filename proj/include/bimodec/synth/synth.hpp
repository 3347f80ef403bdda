#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "bimodec/core/epoch.hpp"
#include "bimodec/core/error.hpp"
#include "bimodec/core/random.hpp"
#include "bimodec/core/recording.hpp"
#include "bimodec/core/session.hpp"
#include "bimodec/core/time_series.hpp"
#include "bimodec/dsp/hilbert.hpp"

namespace bimodec::synth {

struct ProtocolConfig {
  int trials_per_condition = 30;
  double trial_s = 10.0;
  double rest_min_s = 15.0;
  double rest_max_s = 21.0;
  double lead_in_s = 20.0;
  /// Go times and rests are multiples of this so every stream rate lands on a sample.
  double grid_s = 0.08;
  double mvc_left_n = 300.0;
  double mvc_right_n = 320.0;
};

/// Blocked design: each condition's trials run back to back, block order drawn from the seed.
inline SessionManifest gen_protocol(std::uint64_t seed, const ProtocolConfig& cfg = {}) {
  if (cfg.trials_per_condition < 1) throw ConfigError("protocol: trials_per_condition must be >= 1");
  if (!(cfg.rest_min_s > 0.0 && cfg.rest_max_s >= cfg.rest_min_s)) throw ConfigError("protocol: bad rest range");
  std::mt19937_64 rng(derive_seed(seed, {0x50524f54ULL}));
  std::array<int, 4> order{1, 2, 3, 4};
  std::shuffle(order.begin(), order.end(), rng);

  const auto lo = static_cast<std::int64_t>(std::ceil(cfg.rest_min_s / cfg.grid_s - 1e-9));
  const auto hi = static_cast<std::int64_t>(std::floor(cfg.rest_max_s / cfg.grid_s + 1e-9));
  if (lo > hi) throw ConfigError("protocol: no rest duration on the timing grid inside the rest range");
  const auto trial_ticks = static_cast<std::int64_t>(std::llround(cfg.trial_s / cfg.grid_s));
  std::uniform_int_distribution<std::int64_t> rest_ticks(lo, hi);

  SessionManifest m;
  m.trials_per_condition = cfg.trials_per_condition;
  m.rest_min_s = cfg.rest_min_s;
  m.rest_max_s = cfg.rest_max_s;
  m.mvc_left_n = cfg.mvc_left_n;
  m.mvc_right_n = cfg.mvc_right_n;
  std::int64_t tick = std::llround(cfg.lead_in_s / cfg.grid_s);
  for (int cond : order) {
    for (int k = 0; k < cfg.trials_per_condition; ++k) {
      TrialInfo t;
      t.condition = cond;
      t.go_time_s = static_cast<double>(tick) * cfg.grid_s;
      t.duration_s = cfg.trial_s;
      const std::int64_t r = rest_ticks(rng);
      t.rest_s = static_cast<double>(r) * cfg.grid_s;
      tick += trial_ticks + r;
      m.trials.push_back(t);
    }
  }
  m.session_duration_s = static_cast<double>(tick) * cfg.grid_s;
  m.validate();
  return m;
}

enum class Hand { Left = 0, Right = 1 };

/// Widths of the four crests in one 10 s profile; their order is what differs
/// between conditions and hands.
inline constexpr std::array<double, 4> kCrestWidths{1.6, 2.0, 2.8, 3.6};

namespace detail {

/// Crest order for (condition, hand). The eight profiles of a session are
/// distinct permutations, so left and right never coincide.
inline std::array<int, 4> crest_order(int condition, Hand hand, std::uint64_t seed) {
  if (condition < 1 || condition > 4) throw ConfigError("force profile: condition must be in 1..4");
  std::vector<std::array<int, 4>> perms;
  std::array<int, 4> p{0, 1, 2, 3};
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  std::mt19937_64 rng(derive_seed(seed, {0x43524553ULL}));
  std::shuffle(perms.begin(), perms.end(), rng);
  return perms[static_cast<std::size_t>((condition - 1) + 4 * static_cast<int>(hand))];
}

}  // namespace detail

/// Raised-cosine crests from 10 to 25 %MVC and back, in the given width order.
inline double profile_at(const std::array<int, 4>& order, double t_s) {
  double start = 0.0;
  for (int idx : order) {
    const double w = kCrestWidths[static_cast<std::size_t>(idx)];
    if (t_s < start + w) return 17.5 - 7.5 * std::cos(2.0 * std::numbers::pi * (t_s - start) / w);
    start += w;
  }
  return 10.0;
}

/// Commanded force at `t_s` seconds into the contraction, in %MVC.
inline double profile_value(int condition, Hand hand, std::uint64_t seed, double t_s) {
  return profile_at(detail::crest_order(condition, hand, seed), t_s);
}

inline TimeSeries gen_force_trace(int condition, Hand hand, std::uint64_t seed, double rate_hz = 1000.0,
                                  double duration_s = 10.0) {
  const auto n = static_cast<Eigen::Index>(std::llround(duration_s * rate_hz));
  SignalMatrix m(1, n);
  const auto order = detail::crest_order(condition, hand, seed);
  for (Eigen::Index i = 0; i < n; ++i) m(0, i) = profile_at(order, static_cast<double>(i) / rate_hz);
  return TimeSeries(std::move(m), rate_hz, 0.0, {hand == Hand::Left ? "left" : "right"}, SignalKind::Force);
}

struct BandCoupling {
  double contra = 0.0;
  double ipsi = 0.0;
};

struct ForwardModelParams {
  int eeg_channels = 24;
  int fnirs_channels = 24;

  // EEG, microvolts.
  int beta_sources = 6;   ///< per hemisphere
  int gamma_sources = 2;  ///< per hemisphere
  int background_sources = 7;
  BandCoupling erd_beta{0.8, 0.05};
  BandCoupling erd_low_gamma{0.6, 0.05};
  double erd_lead_s = 0.1;
  double beta_amp_uv = 4.0;
  double gamma_amp_uv = 1.5;
  double background_amp_uv = 6.0;
  double background_exponent = 1.0;
  double burst_sigma = 0.35;
  double arousal_sigma = 0.3;
  double eog_amp_uv = 80.0;
  double blink_rate_hz = 0.25;
  double mains_amp_uv = 20.0;
  double fnirs_interference_uv = 2.0;

  // Hemodynamics, optical density units per unit drive (force / 25 %MVC).
  double hrf_peak_shape = 6.0;
  double hrf_undershoot_shape = 16.0;
  double hrf_ratio = 1.0 / 6.0;
  double hrf_coupling = 0.01;
  double hrf_contra = 1.0;
  double hrf_ipsi = 0.1;
  double trial_gain_sd = 0.15;
  double sign_760 = -0.5;
  double sign_850 = 1.0;
  double mayer_hz = 0.1;
  double mayer_amp = 0.002;
  double cardiac_hz = 1.2;
  double cardiac_amp = 0.003;
  double fnirs_noise_amp = 0.001;
  double noise_exponent = 1.0;
  double skin_mayer_amp = 0.006;
  double skin_cardiac_amp = 0.004;
  double skin_noise_amp = 0.002;

  // Force.
  double force_jitter_sd = 0.5;
  double force_lag_s = 0.15;

  void validate() const {
    const double vals[] = {erd_beta.contra, erd_beta.ipsi, erd_low_gamma.contra, erd_low_gamma.ipsi, beta_amp_uv,
                           gamma_amp_uv, background_amp_uv, hrf_coupling, mayer_amp, cardiac_amp, fnirs_noise_amp,
                           force_jitter_sd, force_lag_s, eog_amp_uv, mains_amp_uv, arousal_sigma, burst_sigma};
    for (double v : vals) {
      if (!std::isfinite(v) || v < 0.0) throw ConfigError("forward model: gains must be finite and >= 0");
    }
    if (erd_beta.contra + erd_beta.ipsi > 0.95 || erd_low_gamma.contra + erd_low_gamma.ipsi > 0.95) {
      throw ConfigError("forward model: ERD gains must leave some rhythm at full force");
    }
    if (2.0 * erd_beta.ipsi > erd_beta.contra || 2.0 * erd_low_gamma.ipsi > erd_low_gamma.contra ||
        2.0 * hrf_ipsi > hrf_contra) {
      throw ConfigError("forward model: contralateral gains must be at least twice the ipsilateral ones");
    }
    if (eeg_channels != 24 || fnirs_channels != 24) throw ConfigError("forward model: channel counts are fixed at 24");
    if (beta_sources < 1 || gamma_sources < 1 || background_sources < 0) {
      throw ConfigError("forward model: need >= 1 beta and gamma source per hemisphere, background >= 0");
    }
    if (!(sign_760 * sign_850 < 0.0)) throw ConfigError("forward model: wavelength coupling signs must be opposite");
    if (!(hrf_peak_shape > 0.0 && hrf_undershoot_shape > 0.0)) throw ConfigError("forward model: bad hrf shapes");
  }
};

inline void to_json(nlohmann::json& j, const ForwardModelParams& p) {
  j = {{"beta_sources", p.beta_sources},
       {"gamma_sources", p.gamma_sources},
       {"background_sources", p.background_sources},
       {"erd_beta", {p.erd_beta.contra, p.erd_beta.ipsi}},
       {"erd_low_gamma", {p.erd_low_gamma.contra, p.erd_low_gamma.ipsi}},
       {"erd_lead_s", p.erd_lead_s},
       {"beta_amp_uv", p.beta_amp_uv},
       {"gamma_amp_uv", p.gamma_amp_uv},
       {"background_amp_uv", p.background_amp_uv},
       {"background_exponent", p.background_exponent},
       {"burst_sigma", p.burst_sigma},
       {"arousal_sigma", p.arousal_sigma},
       {"eog_amp_uv", p.eog_amp_uv},
       {"blink_rate_hz", p.blink_rate_hz},
       {"mains_amp_uv", p.mains_amp_uv},
       {"fnirs_interference_uv", p.fnirs_interference_uv},
       {"hrf_peak_shape", p.hrf_peak_shape},
       {"hrf_undershoot_shape", p.hrf_undershoot_shape},
       {"hrf_ratio", p.hrf_ratio},
       {"hrf_coupling", p.hrf_coupling},
       {"hrf_contra", p.hrf_contra},
       {"hrf_ipsi", p.hrf_ipsi},
       {"trial_gain_sd", p.trial_gain_sd},
       {"sign_760", p.sign_760},
       {"sign_850", p.sign_850},
       {"mayer_hz", p.mayer_hz},
       {"mayer_amp", p.mayer_amp},
       {"cardiac_hz", p.cardiac_hz},
       {"cardiac_amp", p.cardiac_amp},
       {"fnirs_noise_amp", p.fnirs_noise_amp},
       {"noise_exponent", p.noise_exponent},
       {"skin_mayer_amp", p.skin_mayer_amp},
       {"skin_cardiac_amp", p.skin_cardiac_amp},
       {"skin_noise_amp", p.skin_noise_amp},
       {"force_jitter_sd", p.force_jitter_sd},
       {"force_lag_s", p.force_lag_s}};
}

inline void from_json(const nlohmann::json& j, ForwardModelParams& p) {
  auto pair = [&](const char* key, BandCoupling& b) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError(std::string("forward model: ") + key + " needs [contra, ipsi]");
    b = {v[0], v[1]};
  };
  pair("erd_beta", p.erd_beta);
  pair("erd_low_gamma", p.erd_low_gamma);
#define BIMODEC_FIELD(name) p.name = j.value(#name, p.name)
  BIMODEC_FIELD(beta_sources);
  BIMODEC_FIELD(gamma_sources);
  BIMODEC_FIELD(background_sources);
  BIMODEC_FIELD(erd_lead_s);
  BIMODEC_FIELD(beta_amp_uv);
  BIMODEC_FIELD(gamma_amp_uv);
  BIMODEC_FIELD(background_amp_uv);
  BIMODEC_FIELD(background_exponent);
  BIMODEC_FIELD(burst_sigma);
  BIMODEC_FIELD(arousal_sigma);
  BIMODEC_FIELD(eog_amp_uv);
  BIMODEC_FIELD(blink_rate_hz);
  BIMODEC_FIELD(mains_amp_uv);
  BIMODEC_FIELD(fnirs_interference_uv);
  BIMODEC_FIELD(hrf_peak_shape);
  BIMODEC_FIELD(hrf_undershoot_shape);
  BIMODEC_FIELD(hrf_ratio);
  BIMODEC_FIELD(hrf_coupling);
  BIMODEC_FIELD(hrf_contra);
  BIMODEC_FIELD(hrf_ipsi);
  BIMODEC_FIELD(trial_gain_sd);
  BIMODEC_FIELD(sign_760);
  BIMODEC_FIELD(sign_850);
  BIMODEC_FIELD(mayer_hz);
  BIMODEC_FIELD(mayer_amp);
  BIMODEC_FIELD(cardiac_hz);
  BIMODEC_FIELD(cardiac_amp);
  BIMODEC_FIELD(fnirs_noise_amp);
  BIMODEC_FIELD(noise_exponent);
  BIMODEC_FIELD(skin_mayer_amp);
  BIMODEC_FIELD(skin_cardiac_amp);
  BIMODEC_FIELD(skin_noise_amp);
  BIMODEC_FIELD(force_jitter_sd);
  BIMODEC_FIELD(force_lag_s);
#undef BIMODEC_FIELD
  p.validate();
}

/// Canonical double-gamma HRF sampled at `rate_hz` over `length_s`, scaled so
/// that sum(h) / rate_hz == 1.
inline Eigen::VectorXd double_gamma_hrf(double rate_hz, double peak_shape = 6.0, double undershoot_shape = 16.0,
                                        double ratio = 1.0 / 6.0, double length_s = 32.0) {
  const auto n = static_cast<Eigen::Index>(std::llround(length_s * rate_hz));
  auto gamma_pdf = [](double t, double k) { return t <= 0.0 ? 0.0 : std::exp((k - 1.0) * std::log(t) - t - std::lgamma(k)); };
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    h[i] = gamma_pdf(t, peak_shape) - ratio * gamma_pdf(t, undershoot_shape);
  }
  const double area = h.sum() / rate_hz;
  if (!(std::abs(area) > 1e-12)) throw ConfigError("hrf: degenerate shape (zero area)");
  return h / area;
}

namespace detail {

/// Unit-variance Gaussian noise with power spectrum ~ 1/f^exponent above f_min_hz.
inline Eigen::VectorXd colored_noise(Eigen::Index n, double exponent, double rate_hz, double f_min_hz,
                                     std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const Eigen::Index m = exponent == 0.0 ? n : dsp::fft_friendly_size(n);
  std::vector<double> x(static_cast<std::size_t>(m));
  for (auto& v : x) v = g(rng);
  if (exponent == 0.0) return Eigen::Map<Eigen::VectorXd>(x.data(), n);
  thread_local Eigen::FFT<double> fft;  // keeps twiddle plans across calls
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const auto kk = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), m - static_cast<Eigen::Index>(k));
    const double f = std::max(static_cast<double>(kk) * rate_hz / static_cast<double>(m), f_min_hz);
    const double scale = exponent == 1.0 ? 1.0 / std::sqrt(f) : exponent == 2.0 ? 1.0 / f : std::pow(f, -exponent / 2.0);
    spec[k] *= k == 0 ? 0.0 : scale;
  }
  std::vector<double> y;
  fft.inv(y, spec);
  Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  out.array() -= out.mean();
  const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  return sd > 0.0 ? Eigen::VectorXd(out / sd) : out;
}

/// Slowly varying unit-variance Gaussian process: knots every `knot_s`, cosine interpolation.
inline Eigen::VectorXd smooth_process(Eigen::Index n, double rate_hz, double knot_s, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const auto knots = static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) / rate_hz / knot_s)) + 2;
  Eigen::VectorXd k(knots);
  for (Eigen::Index i = 0; i < knots; ++i) k[i] = g(rng);
  // knots fall on whole samples at every rate used here, so the weights repeat with the knot period
  const double period = knot_s * rate_hz;
  const auto p = static_cast<Eigen::Index>(std::llround(period));
  const bool periodic = p > 0 && std::abs(period - static_cast<double>(p)) < 1e-9;
  std::vector<double> wa, wb;
  auto weights = [](double f, double& a, double& b) {
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * f);
    // cosine interpolation loses variance between knots; rescale to unit variance
    const double norm = std::sqrt((1.0 - w) * (1.0 - w) + w * w);
    a = (1.0 - w) / norm;
    b = w / norm;
  };
  if (periodic) {
    wa.resize(static_cast<std::size_t>(p));
    wb.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) weights(static_cast<double>(j) / static_cast<double>(p), wa[static_cast<std::size_t>(j)], wb[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double a, b;
    Eigen::Index j;
    if (periodic) {
      j = i / p;
      a = wa[static_cast<std::size_t>(i % p)];
      b = wb[static_cast<std::size_t>(i % p)];
    } else {
      const double u = static_cast<double>(i) / period;
      j = static_cast<Eigen::Index>(u);
      weights(u - static_cast<double>(j), a, b);
    }
    out[i] = a * k[j] + b * k[j + 1];
  }
  return out;
}

/// Sum of `components` unit oscillators with random frequencies in [lo, hi], normalized to unit RMS.
inline Eigen::VectorXd narrowband_carrier(Eigen::Index n, double rate_hz, double lo_hz, double hi_hz, int components,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uf(lo_hz, hi_hz), up(0.0, 2.0 * std::numbers::pi);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < components; ++c) {
    const double w = 2.0 * std::numbers::pi * uf(rng) / rate_hz;
    const std::complex<double> step = std::polar(1.0, w);
    std::complex<double> z = std::polar(1.0, up(rng));
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i] += z.real();
      z *= step;
      if ((i & 4095) == 4095) z /= std::abs(z);
    }
  }
  return out / std::sqrt(components / 2.0);
}

inline double interp(const std::vector<double>& x, double rate_hz, double t_s) {
  const double u = t_s * rate_hz;
  if (u <= 0.0) return x.front();
  const auto i = static_cast<std::size_t>(u);
  if (i + 1 >= x.size()) return x.back();
  const double f = u - static_cast<double>(i);
  return (1.0 - f) * x[i] + f * x[i + 1];
}

struct Point {
  double x, y;
};

/// Electrode layout: 12 per hemisphere on a 3 x 4 grid, channels 0..11 left (x < 0).
inline Point eeg_channel_position(int c) {
  const int k = c % 12;
  const double lateral[] = {0.2, 0.45, 0.7, 0.95};
  const double y[] = {0.8, 0.0, -0.8};
  const double x = lateral[k % 4];
  return {c < 12 ? -x : x, y[k / 4]};
}

enum SourceRole { BetaLeft, BetaRight, GammaLeft, GammaRight, Blink, Background };

/// Session-wide state shared by lazily generated EEG segments.
struct EegModel {
  ForwardModelParams params;
  std::uint64_t seed = 0;
  double rate_hz = 4000.0;
  double pad_s = 3.2;
  EpochWindow window;
  std::vector<SourceRole> roles;
  Eigen::MatrixXd mixing;  ///< channels x sources
  Eigen::VectorXd blink_to_channel;
  Eigen::VectorXd mains_gain, mains_phase, interference_gain, offset_uv;
  std::vector<double> force_pct_left, force_pct_right;  ///< actual force at force_rate_hz
  double force_rate_hz = 1000.0;
  std::vector<double> go_times;
};

inline std::shared_ptr<EegModel> make_eeg_model(const ForwardModelParams& p, std::uint64_t seed) {
  auto m = std::make_shared<EegModel>();
  m->params = p;
  m->seed = seed;
  std::mt19937_64 rng(derive_seed(seed, {0x4d495845ULL}));
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (int i = 0; i < p.beta_sources; ++i) m->roles.push_back(BetaLeft);
  for (int i = 0; i < p.beta_sources; ++i) m->roles.push_back(BetaRight);
  for (int i = 0; i < p.gamma_sources; ++i) m->roles.push_back(GammaLeft);
  for (int i = 0; i < p.gamma_sources; ++i) m->roles.push_back(GammaRight);
  m->roles.push_back(Blink);
  for (int i = 0; i < p.background_sources; ++i) m->roles.push_back(Background);

  const int nc = p.eeg_channels;
  const auto ns = static_cast<int>(m->roles.size());
  m->mixing.resize(nc, ns);
  for (int s = 0; s < ns; ++s) {
    Point at{};
    double width = 0.45;
    switch (m->roles[static_cast<std::size_t>(s)]) {
      case BetaLeft: at = {-0.6 + 0.15 * g(rng), 0.3 * g(rng)}; break;
      case BetaRight: at = {0.6 + 0.15 * g(rng), 0.3 * g(rng)}; break;
      case GammaLeft: at = {-0.55, 0.1 * g(rng)}; break;
      case GammaRight: at = {0.55, 0.1 * g(rng)}; break;
      case Blink: at = {0.0, 1.6}; width = 1.2; break;
      case Background: at = {2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0}; break;
    }
    for (int c = 0; c < nc; ++c) {
      const Point e = eeg_channel_position(c);
      const double d2 = (e.x - at.x) * (e.x - at.x) + (e.y - at.y) * (e.y - at.y);
      m->mixing(c, s) = std::exp(-d2 / (2.0 * width * width)) + 0.05 * g(rng);
    }
  }
  m->mains_gain.resize(nc);
  m->mains_phase.resize(nc);
  m->interference_gain.resize(nc);
  m->offset_uv.resize(nc);
  for (int c = 0; c < nc; ++c) {
    m->mains_gain[c] = 0.5 + u(rng);
    m->mains_phase[c] = 2.0 * std::numbers::pi * u(rng);
    m->interference_gain[c] = 0.5 + u(rng);
    m->offset_uv[c] = 100.0 * (2.0 * u(rng) - 1.0);
  }
  return m;
}

inline EegSegment eeg_segment(const EegModel& m, std::size_t trial) {
  const auto& p = m.params;
  const double go = m.go_times.at(trial);
  const double t0 = go - m.window.pre_s - m.pad_s;
  const auto n = static_cast<Eigen::Index>(std::llround((m.window.pre_s + m.window.post_s + 2.0 * m.pad_s) * m.rate_hz));
  std::mt19937_64 rng(derive_seed(m.seed, {0x45454721ULL, trial}));
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto ns = static_cast<Eigen::Index>(m.roles.size());

  // drive (force / 25 %MVC) per hand, sampled slightly ahead of the force
  Eigen::VectorXd drive_left(n), drive_right(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) / m.rate_hz + p.erd_lead_s;
    drive_left[i] = std::clamp(interp(m.force_pct_left, m.force_rate_hz, t) / 25.0, 0.0, 1.5);
    drive_right[i] = std::clamp(interp(m.force_pct_right, m.force_rate_hz, t) / 25.0, 0.0, 1.5);
  }
  const Eigen::VectorXd arousal = (p.arousal_sigma * smooth_process(n, m.rate_hz, 5.0, rng)).array().exp();

  Eigen::MatrixXd sources(ns, n);
  Eigen::VectorXd blink = Eigen::VectorXd::Zero(n);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const SourceRole role = m.roles[static_cast<std::size_t>(s)];
    const Eigen::VectorXd burst =
        (p.burst_sigma * smooth_process(n, m.rate_hz, 0.4, rng)).array().exp() / std::exp(p.burst_sigma * p.burst_sigma);
    Eigen::VectorXd x;
    switch (role) {
      case BetaLeft:
      case BetaRight: {
        const bool left = role == BetaLeft;
        const Eigen::VectorXd& contra = left ? drive_right : drive_left;
        const Eigen::VectorXd& ipsi = left ? drive_left : drive_right;
        const Eigen::ArrayXd erd = (1.0 - p.erd_beta.contra * contra.array() - p.erd_beta.ipsi * ipsi.array()).max(0.05);
        x = p.beta_amp_uv * narrowband_carrier(n, m.rate_hz, 15.0, 28.0, 12, rng).array() * erd * burst.array() *
            arousal.array();
        break;
      }
      case GammaLeft:
      case GammaRight: {
        const bool left = role == GammaLeft;
        const Eigen::VectorXd& contra = left ? drive_right : drive_left;
        const Eigen::VectorXd& ipsi = left ? drive_left : drive_right;
        const Eigen::ArrayXd erd =
            (1.0 - p.erd_low_gamma.contra * contra.array() - p.erd_low_gamma.ipsi * ipsi.array()).max(0.05);
        x = p.gamma_amp_uv * narrowband_carrier(n, m.rate_hz, 32.0, 48.0, 12, rng).array() * erd * burst.array() *
            arousal.array();
        break;
      }
      case Blink: {
        // raised-cosine blinks, Poisson timing, unrelated to the task
        x = Eigen::VectorXd::Zero(n);
        std::exponential_distribution<double> gap(std::max(p.blink_rate_hz, 1e-6));
        double t = gap(rng);
        const double width = 0.3;
        while (t < static_cast<double>(n) / m.rate_hz) {
          const double amp = p.eog_amp_uv * (0.7 + 0.6 * u(rng));
          const auto a = static_cast<Eigen::Index>(t * m.rate_hz);
          const auto len = static_cast<Eigen::Index>(width * m.rate_hz);
          for (Eigen::Index i = 0; i < len && a + i < n; ++i) {
            x[a + i] += amp * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len)));
          }
          t += width + gap(rng);
        }
        x += 0.02 * p.eog_amp_uv * colored_noise(n, 1.0, m.rate_hz, 0.5, rng);
        blink = x;
        break;
      }
      case Background:
        x = p.background_amp_uv * colored_noise(n, p.background_exponent, m.rate_hz, 1.0, rng).array() * burst.array();
        break;
    }
    sources.row(s) = x.transpose();
  }

  SignalMatrix eeg = m.mixing * sources;
  const auto nc = eeg.rows();
  // line-frequency and optical-device pickup: phase-shifted copies of shared carriers
  Eigen::ArrayXd s50(n), c50(n), dev(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) / m.rate_hz;
    s50[i] = std::sin(2.0 * std::numbers::pi * 50.0 * t);
    c50[i] = std::cos(2.0 * std::numbers::pi * 50.0 * t);
    dev[i] = std::sin(2.0 * std::numbers::pi * 12.5 * t) + 0.3 * std::sin(2.0 * std::numbers::pi * 25.0 * t);
  }
  for (Eigen::Index c = 0; c < nc; ++c) {
    const Eigen::VectorXd drift = 20.0 * smooth_process(n, m.rate_hz, 8.0, rng);
    const double a = p.mains_amp_uv * m.mains_gain[c];
    eeg.row(c).array() += m.offset_uv[c] + drift.transpose().array() +
                          (a * std::cos(m.mains_phase[c]) * s50 + a * std::sin(m.mains_phase[c]) * c50 +
                           p.fnirs_interference_uv * m.interference_gain[c] * dev)
                              .transpose();
  }

  SignalMatrix eog(1, n);
  const Eigen::VectorXd eog_noise = colored_noise(n, 1.0, m.rate_hz, 1.0, rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    eog(0, i) = 2.0 * blink[i] + 3.0 * eog_noise[i] + 0.5 * p.mains_amp_uv * s50[i];
  }

  std::vector<std::string> labels;
  for (Eigen::Index c = 0; c < nc; ++c) {
    labels.push_back((c < 12 ? "L" : "R") + std::to_string(c % 12));
  }
  return {TimeSeries(std::move(eeg), m.rate_hz, t0, labels, SignalKind::Eeg),
          TimeSeries(std::move(eog), m.rate_hz, t0, {"EOG"}, SignalKind::Eeg)};
}

}  // namespace detail

/// Mean coupling of each hemisphere's channels to each hand, as built into the
/// generator. Used by lateralization checks.
struct FnirsLayout {
  std::vector<std::string> labels;
  std::vector<int> hemisphere;  ///< 0 left, 1 right, per row
  std::vector<double> wavelength_nm;
};

inline FnirsLayout fnirs_layout(int channels = 24) {
  FnirsLayout l;
  for (int c = 0; c < channels; ++c) {
    for (double wl : {760.0, 850.0}) {
      l.labels.push_back(std::string(c < channels / 2 ? "L" : "R") + std::to_string(c % (channels / 2)) + ":" +
                         std::to_string(static_cast<int>(wl)));
      l.hemisphere.push_back(c < channels / 2 ? 0 : 1);
      l.wavelength_nm.push_back(wl);
    }
  }
  return l;
}

struct GeneratedHemodynamics {
  SignalMatrix od_true;    ///< fNIRS rows, before conversion to intensity
  SignalMatrix skin_od;    ///< skin rows
  Eigen::VectorXd contra_gain, ipsi_gain;  ///< per fNIRS row, signed by wavelength
};

/// Full synthetic session. EEG segments are generated on demand and are
/// bit-identical however often or in whatever order they are requested.
inline Recording gen_recording(const SessionManifest& manifest, const ForwardModelParams& params, std::uint64_t seed,
                               GeneratedHemodynamics* truth = nullptr) {
  manifest.validate();
  params.validate();
  const double force_rate = manifest.rate("FORCE");
  const double fnirs_rate = manifest.rate("FNIRS_INTENSITY");
  const double skin_rate = manifest.rate("SKIN");
  const double eeg_rate = manifest.rate("EEG");
  if (fnirs_rate != skin_rate) throw ConfigError("synth: fNIRS and skin rates must match");
  const double duration = manifest.session_duration_s;
  const auto nf = static_cast<Eigen::Index>(std::llround(duration * force_rate));
  const auto nh = static_cast<Eigen::Index>(std::llround(duration * fnirs_rate));

  // commanded profiles, then the tracked force: first-order lag plus low-pass jitter during contraction
  std::vector<double> commanded[2], actual[2];
  std::mt19937_64 frng(derive_seed(seed, {0x464f5243ULL}));
  const double alpha = 1.0 - std::exp(-1.0 / (params.force_lag_s * force_rate + 1e-12));
  const double jitter_alpha = 1.0 - std::exp(-2.0 * std::numbers::pi * 2.0 / force_rate);
  for (int h = 0; h < 2; ++h) {
    commanded[h].assign(static_cast<std::size_t>(nf), 0.0);
    for (const auto& t : manifest.trials) {
      const auto order = detail::crest_order(t.condition, static_cast<Hand>(h), seed);
      const auto a = static_cast<Eigen::Index>(std::llround(t.go_time_s * force_rate));
      const auto len = static_cast<Eigen::Index>(std::llround(t.duration_s * force_rate));
      for (Eigen::Index i = 0; i < len && a + i < nf; ++i) {
        commanded[h][static_cast<std::size_t>(a + i)] = profile_at(order, static_cast<double>(i) / force_rate);
      }
    }
    std::vector<double> jitter(static_cast<std::size_t>(nf));
    std::normal_distribution<double> g;
    double js = 0.0;
    for (auto& v : jitter) v = js += jitter_alpha * (g(frng) - js);
    double var = 0.0;
    for (double v : jitter) var += v * v;
    const double jscale = params.force_jitter_sd / std::sqrt(std::max(var / static_cast<double>(nf), 1e-30));
    actual[h].resize(static_cast<std::size_t>(nf));
    double y = 0.0, gate = 0.0;
    for (Eigen::Index i = 0; i < nf; ++i) {
      const auto k = static_cast<std::size_t>(i);
      y += alpha * (commanded[h][k] - y);
      gate += alpha * ((commanded[h][k] > 0.0 ? 1.0 : 0.0) - gate);
      actual[h][k] = y + gate * jscale * jitter[k];
    }
  }

  SignalMatrix force(2, nf);
  std::normal_distribution<double> sensor;
  const double mvc[2] = {manifest.mvc_left_n, manifest.mvc_right_n};
  for (int h = 0; h < 2; ++h) {
    const double offset = 2.0 + h;
    for (Eigen::Index i = 0; i < nf; ++i) {
      force(h, i) = actual[h][static_cast<std::size_t>(i)] * mvc[h] / 100.0 + offset + 0.1 * sensor(frng);
    }
  }

  // hemodynamic drive at the optical rate, with a per-trial response gain
  std::mt19937_64 hrng(derive_seed(seed, {0x48454d4fULL}));
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd drive = Eigen::MatrixXd::Zero(2, nh);
  const auto per = static_cast<Eigen::Index>(std::llround(force_rate / fnirs_rate));
  for (int h = 0; h < 2; ++h) {
    for (Eigen::Index i = 0; i < nh; ++i) {
      double s = 0.0;
      Eigen::Index cnt = 0;
      for (Eigen::Index k = i * per; k < std::min((i + 1) * per, nf); ++k, ++cnt) s += actual[h][static_cast<std::size_t>(k)];
      drive(h, i) = cnt ? s / static_cast<double>(cnt) / 25.0 : 0.0;
    }
    for (const auto& t : manifest.trials) {
      const double gain = std::max(0.2, 1.0 + params.trial_gain_sd * g(hrng));
      const auto a = static_cast<Eigen::Index>(std::llround(t.go_time_s * fnirs_rate));
      const auto b = std::min(nh, static_cast<Eigen::Index>(std::llround((t.go_time_s + t.duration_s + 2.0) * fnirs_rate)));
      for (Eigen::Index i = a; i < b; ++i) drive(h, i) *= gain;
    }
  }
  const Eigen::VectorXd hrf =
      double_gamma_hrf(fnirs_rate, params.hrf_peak_shape, params.hrf_undershoot_shape, params.hrf_ratio);
  Eigen::MatrixXd response = Eigen::MatrixXd::Zero(2, nh);
  for (int h = 0; h < 2; ++h) {
    for (Eigen::Index i = 0; i < nh; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < hrf.size() && k <= i; ++k) s += hrf[k] * drive(h, i - k);
      response(h, i) = s / fnirs_rate;
    }
  }

  // systemic physiology shared by all optical channels: Mayer waves with a wandering phase, cardiac pulse
  Eigen::VectorXd mayer(nh), cardiac(nh);
  {
    const Eigen::VectorXd mayer_wander = detail::smooth_process(nh, fnirs_rate, 20.0, hrng);
    const Eigen::VectorXd card_wander = detail::smooth_process(nh, fnirs_rate, 10.0, hrng);
    double pm = 2.0 * std::numbers::pi * u(hrng), pc = 2.0 * std::numbers::pi * u(hrng);
    for (Eigen::Index i = 0; i < nh; ++i) {
      mayer[i] = std::sin(pm);
      cardiac[i] = std::sin(pc) + 0.3 * std::sin(2.0 * pc);
      pm += 2.0 * std::numbers::pi * params.mayer_hz * (1.0 + 0.15 * mayer_wander[i]) / fnirs_rate;
      pc += 2.0 * std::numbers::pi * params.cardiac_hz * (1.0 + 0.05 * card_wander[i]) / fnirs_rate;
    }
  }

  const FnirsLayout layout = fnirs_layout(params.fnirs_channels);
  const auto rows = static_cast<Eigen::Index>(layout.labels.size());
  GeneratedHemodynamics hd;
  hd.od_true.resize(rows, nh);
  hd.contra_gain.resize(rows);
  hd.ipsi_gain.resize(rows);
  std::vector<double> spatial(static_cast<std::size_t>(params.fnirs_channels));
  for (auto& s : spatial) s = 0.5 + 0.5 * u(hrng);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int hemi = layout.hemisphere[static_cast<std::size_t>(r)];
    const double sign = layout.wavelength_nm[static_cast<std::size_t>(r)] < 800.0 ? params.sign_760 : params.sign_850;
    const double k = params.hrf_coupling * sign * spatial[static_cast<std::size_t>(r / 2)];
    const int contra_hand = hemi == 0 ? 1 : 0;
    hd.contra_gain[r] = k * params.hrf_contra;
    hd.ipsi_gain[r] = k * params.hrf_ipsi;
    const double gm = params.mayer_amp * (0.5 + u(hrng)), gc = params.cardiac_amp * (0.5 + u(hrng));
    const Eigen::VectorXd noise = detail::colored_noise(nh, params.noise_exponent, fnirs_rate, 0.005, hrng);
    hd.od_true.row(r) = (hd.contra_gain[r] * response.row(contra_hand) + hd.ipsi_gain[r] * response.row(1 - contra_hand) +
                         gm * mayer.transpose() + gc * cardiac.transpose() + params.fnirs_noise_amp * noise.transpose());
  }
  hd.skin_od.resize(2, nh);
  for (Eigen::Index r = 0; r < 2; ++r) {
    const double gm = params.skin_mayer_amp * (0.75 + 0.5 * u(hrng)), gc = params.skin_cardiac_amp * (0.75 + 0.5 * u(hrng));
    const Eigen::VectorXd noise = detail::colored_noise(nh, params.noise_exponent, skin_rate, 0.005, hrng);
    hd.skin_od.row(r) = gm * mayer.transpose() + gc * cardiac.transpose() + params.skin_noise_amp * noise.transpose();
  }

  auto to_intensity = [&](const SignalMatrix& od) {
    SignalMatrix it(od.rows(), od.cols());
    for (Eigen::Index r = 0; r < od.rows(); ++r) {
      const double base = 0.5 + 1.5 * u(hrng);
      for (Eigen::Index i = 0; i < od.cols(); ++i) it(r, i) = base * std::pow(10.0, -od(r, i));
    }
    return it;
  };

  Recording rec;
  rec.manifest = manifest;
  rec.fnirs = TimeSeries(to_intensity(hd.od_true), fnirs_rate, 0.0, layout.labels, SignalKind::FnirsIntensity);
  rec.skin = TimeSeries(to_intensity(hd.skin_od), skin_rate, 0.0, {"skin:760", "skin:850"}, SignalKind::Skin);
  rec.force = TimeSeries(std::move(force), force_rate, 0.0, {"left", "right"}, SignalKind::Force);

  auto model = detail::make_eeg_model(params, seed);
  model->rate_hz = eeg_rate;
  model->pad_s = manifest.eeg_segment_pad_s;
  model->force_pct_left = std::move(actual[0]);
  model->force_pct_right = std::move(actual[1]);
  model->force_rate_hz = force_rate;
  model->go_times = manifest.go_times();
  rec.eeg_segment = [model](std::size_t trial) { return detail::eeg_segment(*model, trial); };

  const auto trials = manifest.trials;
  rec.target = [trials, seed](std::size_t trial, double rate_hz, double t0_s, Eigen::Index samples) {
    const auto& t = trials.at(trial);
    SignalMatrix out = SignalMatrix::Zero(2, samples);
    const std::array<std::array<int, 4>, 2> order{detail::crest_order(t.condition, Hand::Left, seed),
                                                  detail::crest_order(t.condition, Hand::Right, seed)};
    for (Eigen::Index i = 0; i < samples; ++i) {
      const double tau = t0_s + static_cast<double>(i) / rate_hz - t.go_time_s;
      if (tau < -1e-9 || tau >= t.duration_s - 1e-9) continue;
      for (int h = 0; h < 2; ++h) out(h, i) = profile_at(order[static_cast<std::size_t>(h)], std::max(tau, 0.0));
    }
    return out;
  };
  if (truth) *truth = std::move(hd);
  return rec;
}

}  // namespace bimodec::synth
