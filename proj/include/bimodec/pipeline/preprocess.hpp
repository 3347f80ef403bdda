#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bimodec/core/detrend.hpp"
#include "bimodec/core/resample.hpp"
#include "bimodec/core/time_series.hpp"
#include "bimodec/dsp/fastica.hpp"
#include "bimodec/dsp/iir.hpp"
#include "bimodec/pipeline/config.hpp"

namespace bimodec::pipeline {

struct EegResult {
  TimeSeries eeg;                   ///< cleaned, at cfg.downsample_hz
  std::optional<TimeSeries> gamma;  ///< same chain at cfg.gamma_rate_hz, if enabled
  dsp::EogCleanResult ica;          ///< `cleaned` left empty; see `eeg`
  std::vector<std::string> log;
};

namespace detail {

/// Notch comb followed by the high-pass, both designed at the series rate.
inline TimeSeries eeg_filter_chain(const TimeSeries& ts, const EegConfig& cfg) {
  const auto notch = dsp::design_notch_comb(cfg.notch_hz, ts.rate_hz(), cfg.notch_q);
  const auto hp = dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Highpass, cfg.hp_order,
                                  {cfg.hp_hz}, ts.rate_hz());
  return dsp::apply_filter(hp, dsp::apply_filter(notch, ts, cfg.mode), cfg.mode);
}

}  // namespace detail

/// Filtered EEG of one recording span, before artifact rejection.
struct EegChain {
  TimeSeries eeg;                   ///< at cfg.downsample_hz
  TimeSeries eog;                   ///< reference through the same chain
  std::optional<TimeSeries> gamma;  ///< at cfg.gamma_rate_hz, if enabled
};

/// Raw EEG -> anti-aliased downsample -> mains/fNIRS notches with harmonics
/// -> 1 Hz high-pass. The EOG reference takes the same path.
inline EegChain eeg_chain(const TimeSeries& raw, const TimeSeries& eog_ref, const EegConfig& cfg = {}) {
  if (raw.kind() != SignalKind::Eeg) throw DataError("preprocess_eeg: expected EEG, got " + std::string(to_string(raw.kind())));
  EegChain c{detail::eeg_filter_chain(resample(raw, cfg.downsample_hz), cfg),
             detail::eeg_filter_chain(resample(eog_ref, cfg.downsample_hz), cfg), std::nullopt};
  if (cfg.gamma_rate_hz > 0.0) c.gamma = detail::eeg_filter_chain(resample(raw, cfg.gamma_rate_hz), cfg);
  return c;
}

namespace detail {

inline std::vector<std::string> ica_log(const dsp::EogCleanResult& r) {
  std::vector<std::string> log;
  if (r.warning) log.push_back("ica: " + r.message);
  for (int k : r.rejected) {
    log.push_back("ica: rejected component " + std::to_string(k) + " |corr|=" +
                  std::to_string(r.correlations[static_cast<std::size_t>(k)]));
  }
  return log;
}

}  // namespace detail

/// Fits the EOG-rejecting projector on several spans of one recording.
/// Samples are pooled (every stride-th sample, at most `max_samples`); ICA
/// ignores temporal order, so thinning only costs estimation variance.
inline dsp::EogCleanResult fit_eog_cleaner(const std::vector<EegChain>& spans, const EegConfig& cfg = {},
                                           Eigen::Index max_samples = 60000) {
  if (spans.empty()) throw DataError("fit_eog_cleaner: no EEG");
  Eigen::Index total = 0;
  const Eigen::Index channels = spans.front().eeg.channels();
  for (const auto& s : spans) {
    if (s.eeg.channels() != channels) throw DataError("fit_eog_cleaner: channel count differs between spans");
    total += s.eeg.samples();
  }
  const Eigen::Index stride = std::max<Eigen::Index>(1, (total + max_samples - 1) / max_samples);
  const Eigen::Index kept = (total + stride - 1) / stride;
  SignalMatrix x(channels, kept), r(1, kept);
  Eigen::Index g = 0, k = 0;
  for (const auto& s : spans) {
    for (Eigen::Index i = 0; i < s.eeg.samples(); ++i, ++g) {
      if (g % stride != 0) continue;
      x.col(k) = s.eeg.data().col(i);
      r(0, k) = s.eog.data()(0, i);
      ++k;
    }
  }
  const double rate = spans.front().eeg.rate_hz();
  dsp::EogCleanOptions opt;
  opt.corr_threshold = cfg.ica_threshold;
  opt.max_reject = cfg.ica_max_reject;
  auto res = dsp::fastica_eog_clean(TimeSeries(std::move(x), rate, 0.0, spans.front().eeg.labels(), SignalKind::Eeg),
                                    TimeSeries(std::move(r), rate, 0.0, {"EOG"}, SignalKind::Eeg), opt);
  res.cleaned = TimeSeries();
  return res;
}

/// Single-span convenience: chain, fit ICA on this span, clean.
inline EegResult preprocess_eeg(const TimeSeries& raw, const TimeSeries& eog_ref, const EegConfig& cfg = {}) {
  EegChain c = eeg_chain(raw, eog_ref, cfg);
  EegResult r;
  dsp::EogCleanOptions opt;
  opt.corr_threshold = cfg.ica_threshold;
  opt.max_reject = cfg.ica_max_reject;
  r.ica = dsp::fastica_eog_clean(c.eeg, c.eog, opt);
  r.eeg = std::move(r.ica.cleaned);
  r.ica.cleaned = TimeSeries();
  r.log = detail::ica_log(r.ica);
  if (c.gamma) r.gamma = dsp::apply_spatial_projector(r.ica.projector, *c.gamma);
  return r;
}

/// Elliptic low-pass on raw intensities. Intensities must be strictly positive.
inline TimeSeries lowpass_intensity(const TimeSeries& intensity, const FnirsConfig& cfg = {}) {
  for (Eigen::Index c = 0; c < intensity.channels(); ++c) {
    for (Eigen::Index i = 0; i < intensity.samples(); ++i) {
      if (!(intensity.data()(c, i) > 0.0)) {
        throw DataError("fnirs: non-positive intensity in channel '" + intensity.labels()[static_cast<std::size_t>(c)] +
                        "' at sample " + std::to_string(i));
      }
    }
  }
  const auto lp = dsp::design_iir(dsp::FilterFamily::Elliptic, dsp::BandType::Lowpass, cfg.lp_order, {cfg.lp_hz},
                                  intensity.rate_hz(), cfg.ripple_db, cfg.atten_db);
  return dsp::apply_filter(lp, intensity, cfg.mode);
}

/// Change in optical density relative to the mean intensity over
/// [baseline_start_s, baseline_end_s): dOD = -log10(I / I_baseline).
inline TimeSeries delta_od(const TimeSeries& intensity, double baseline_start_s, double baseline_end_s,
                           SignalKind out_kind = SignalKind::FnirsOd) {
  const auto first = static_cast<Eigen::Index>(std::llround((baseline_start_s - intensity.t0_s()) * intensity.rate_hz()));
  const auto last = static_cast<Eigen::Index>(std::llround((baseline_end_s - intensity.t0_s()) * intensity.rate_hz()));
  if (first < 0 || last > intensity.samples() || last <= first) {
    throw DataError("delta_od: baseline window [" + std::to_string(baseline_start_s) + ", " +
                    std::to_string(baseline_end_s) + ") outside the series");
  }
  SignalMatrix od(intensity.channels(), intensity.samples());
  for (Eigen::Index c = 0; c < intensity.channels(); ++c) {
    const double base = intensity.data().row(c).segment(first, last - first).mean();
    for (Eigen::Index i = 0; i < intensity.samples(); ++i) {
      const double v = intensity.data()(c, i);
      if (!(v > 0.0) || !(base > 0.0)) {
        throw DataError("delta_od: non-positive intensity in channel '" + intensity.labels()[static_cast<std::size_t>(c)] +
                        "' at sample " + std::to_string(i));
      }
      od(c, i) = -std::log10(v / base);
    }
  }
  return TimeSeries(std::move(od), intensity.rate_hz(), intensity.t0_s(), intensity.labels(), out_kind);
}

/// Low-pass then optical density against the given baseline window.
inline TimeSeries preprocess_fnirs(const TimeSeries& intensity, double baseline_start_s, double baseline_end_s,
                                   const FnirsConfig& cfg = {}) {
  return delta_od(lowpass_intensity(intensity, cfg), baseline_start_s, baseline_end_s, SignalKind::FnirsOd);
}

/// Scalp-skin hemodynamics run through the exact fNIRS chain; only the kind differs.
inline TimeSeries preprocess_skin(const TimeSeries& skin, double baseline_start_s, double baseline_end_s,
                                  const FnirsConfig& cfg = {}) {
  return delta_od(lowpass_intensity(skin, cfg), baseline_start_s, baseline_end_s, SignalKind::Skin);
}

/// Resample, Butterworth band-pass, then elliptic high-pass. Units unchanged.
inline TimeSeries filter_force(const TimeSeries& raw, const ForceConfig& cfg = {}) {
  const TimeSeries rs = resample(raw, cfg.resample_hz);
  const auto bp = dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Bandpass, cfg.bp_order,
                                  {cfg.bp_lo_hz, cfg.bp_hi_hz}, rs.rate_hz());
  const auto hp = dsp::design_iir(dsp::FilterFamily::Elliptic, dsp::BandType::Highpass, cfg.hp_order, {cfg.hp_hz},
                                  rs.rate_hz(), cfg.ripple_db, cfg.atten_db);
  return dsp::apply_filter(hp, dsp::apply_filter(bp, rs, cfg.mode), cfg.mode);
}

/// Per-trial linear detrend, then 100 * F / MVC per channel.
inline TimeSeries force_to_mvc(const TimeSeries& trial_force, const std::vector<double>& mvc_newtons, bool detrend = true) {
  if (mvc_newtons.size() != static_cast<std::size_t>(trial_force.channels())) {
    throw ConfigError("force: need one MVC per force channel");
  }
  for (double m : mvc_newtons) {
    if (!(m > 0.0)) throw ConfigError("force: MVC must be positive, got " + std::to_string(m));
  }
  const TimeSeries base = detrend ? linear_detrend(trial_force) : trial_force;
  SignalMatrix out = base.data();
  for (Eigen::Index c = 0; c < out.rows(); ++c) out.row(c) *= 100.0 / mvc_newtons[static_cast<std::size_t>(c)];
  return base.with_data(std::move(out));
}

/// Full force chain for one trial's recording: %MVC at cfg.resample_hz.
inline TimeSeries preprocess_force(const TimeSeries& raw, const std::vector<double>& mvc_newtons, const ForceConfig& cfg = {}) {
  for (double m : mvc_newtons) {
    if (!(m > 0.0)) throw ConfigError("force: MVC must be positive, got " + std::to_string(m));
  }
  return force_to_mvc(filter_force(raw, cfg), mvc_newtons, true);
}

}  // namespace bimodec::pipeline
