#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bimodec/core/epoch.hpp"
#include "bimodec/core/parallel.hpp"
#include "bimodec/core/recording.hpp"
#include "bimodec/core/resample.hpp"
#include "bimodec/features/features.hpp"
#include "bimodec/pipeline/config.hpp"
#include "bimodec/pipeline/preprocess.hpp"

namespace bimodec::pipeline {

struct SessionOptions {
  PipelineConfig pipeline;
  features::FeatureOptions features;
  std::vector<features::BandSpec> bands = features::standard_bands();
  unsigned threads = 1;
};

/// Everything the decoders need from one trial, on the feature frame grid
/// spanning [go - pre, go + post).
struct TrialFrames {
  std::size_t trial = 0;
  int condition = 1;
  double go_time_s = 0.0;
  features::FeatureStream stream;  ///< EEG feature columns then fNIRS dOD columns
  Eigen::MatrixXd skin;            ///< frames x skin channels, dOD
  std::vector<std::string> skin_columns;
  Eigen::MatrixXd force;   ///< frames x 2, measured %MVC (decoding target)
  Eigen::MatrixXd target;  ///< frames x 2, commanded %MVC
  std::vector<std::string> log;
};

struct SessionFrames {
  std::vector<TrialFrames> trials;
  std::vector<RejectedTrial> rejected;
  std::vector<std::string> log;
};

namespace detail {

/// Re-throws with "<stage>, trial <i>: " prepended, keeping the error category.
template <class Fn>
auto with_context(const std::string& stage, std::size_t trial, Fn&& fn) -> decltype(fn()) {
  const std::string ctx = stage + ", trial " + std::to_string(trial) + ": ";
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const NumericError& e) {
    throw NumericError(ctx + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(ctx + e.what());
  } catch (const Error& e) {
    throw DataError(ctx + e.what());
  }
}

inline Eigen::Index frame_offset(double from_t0, double to_t0, double rate) {
  const double f = (to_t0 - from_t0) * rate;
  return static_cast<Eigen::Index>(std::llround(f));
}

}  // namespace detail

/// EEG features of one cleaned span, cropped to the epoch frames of the trial.
inline TimeSeries trial_eeg_features(const TimeSeries& eeg, const std::optional<TimeSeries>& gamma, double go_time_s,
                                     const SessionOptions& opt) {
  const auto& w = opt.pipeline.epoch;
  const TimeSeries feats = features::extract_eeg_features(eeg, gamma, opt.bands, opt.features);
  const Eigen::Index first = detail::frame_offset(feats.t0_s(), go_time_s - w.pre_s, feats.rate_hz());
  const Eigen::Index len = epoch_length(feats.rate_hz(), w);
  if (first < 0 || first + len > feats.samples()) {
    throw DataError("EEG segment does not cover the epoch window");
  }
  return feats.slice(first, len);
}

/// Runs every stage for every trial. Epochs that do not fit the recording are
/// listed in `rejected`; any other failure aborts with stage name and trial.
inline SessionFrames process_session(const Recording& rec, const SessionOptions& opt) {
  opt.pipeline.validate();
  const auto& w = opt.pipeline.epoch;
  const std::vector<double> go = rec.manifest.go_times();
  const double frame_rate = opt.features.feature_rate_hz;
  const Eigen::Index frames = epoch_length(frame_rate, w);
  SessionFrames out;

  const TimeSeries fnirs_lp = detail::with_context("fnirs", 0, [&] { return lowpass_intensity(rec.fnirs, opt.pipeline.fnirs); });
  const TimeSeries skin_lp = detail::with_context("skin", 0, [&] { return lowpass_intensity(rec.skin, opt.pipeline.fnirs); });
  const TimeSeries force_f = detail::with_context("force", 0, [&] { return filter_force(rec.force, opt.pipeline.force); });
  if (std::abs(fnirs_lp.rate_hz() - frame_rate) > 1e-9 || std::abs(skin_lp.rate_hz() - frame_rate) > 1e-9) {
    throw ConfigError("process_session: optical streams must arrive at the feature rate (" + std::to_string(frame_rate) + " Hz)");
  }

  const EpochResult ef = epoch(fnirs_lp, go, w);
  const EpochResult es = epoch(skin_lp, go, w);
  const EpochResult eforce = epoch(force_f, go, w);
  std::map<std::size_t, std::string> rejected;
  for (const auto* r : {&ef, &es, &eforce}) {
    for (const auto& x : r->rejected) rejected.emplace(x.trial_index, x.reason);
  }
  auto slice_for = [](const EpochResult& r, std::size_t trial) -> const TimeSeries* {
    for (std::size_t k = 0; k < r.accepted.size(); ++k) {
      if (r.accepted[k] == trial) return &r.slices[k];
    }
    return nullptr;
  };

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < go.size(); ++i) {
    if (rejected.count(i)) out.rejected.push_back({i, go[i], rejected[i]});
    else kept.push_back(i);
  }
  for (const auto& r : out.rejected) out.log.push_back("epoch: rejected trial " + std::to_string(r.trial_index) + ": " + r.reason);

  // EEG in two passes: filter every trial span, fit one artifact projector on
  // the whole recording, then clean and extract features per trial.
  std::vector<EegChain> chains(kept.size());
  parallel_for(kept.size(), opt.threads, [&](std::size_t k) {
    chains[k] = detail::with_context("eeg", kept[k], [&] {
      const EegSegment seg = rec.eeg_segment(kept[k]);
      return eeg_chain(seg.eeg, seg.eog, opt.pipeline.eeg);
    });
  });
  if (chains.empty()) throw DataError("process_session: every trial was rejected");
  const dsp::EogCleanResult ica = detail::with_context("ica", 0, [&] { return fit_eog_cleaner(chains, opt.pipeline.eeg); });
  const auto ica_lines = detail::ica_log(ica);
  out.log.insert(out.log.end(), ica_lines.begin(), ica_lines.end());

  const std::vector<double> mvc{rec.manifest.mvc_left_n, rec.manifest.mvc_right_n};
  out.trials.resize(kept.size());
  parallel_for(kept.size(), opt.threads, [&](std::size_t k) {
    const std::size_t i = kept[k];
    TrialFrames& tf = out.trials[k];
    tf.trial = i;
    tf.condition = rec.manifest.trials[i].condition;
    tf.go_time_s = go[i];
    const double t0 = go[i] - w.pre_s;

    const TimeSeries od = detail::with_context("fnirs", i, [&] { return delta_od(*slice_for(ef, i), t0, go[i]); });
    const TimeSeries skin = detail::with_context("skin", i, [&] { return delta_od(*slice_for(es, i), t0, go[i], SignalKind::Skin); });
    const TimeSeries force = detail::with_context("force", i, [&] {
      const TimeSeries pct = force_to_mvc(*slice_for(eforce, i), mvc, true);
      return resample(pct, frame_rate);
    });
    const TimeSeries eeg = detail::with_context("features", i, [&] {
      EegChain& c = chains[k];
      const TimeSeries clean = dsp::apply_spatial_projector(ica.projector, c.eeg);
      std::optional<TimeSeries> gamma;
      if (c.gamma) gamma = dsp::apply_spatial_projector(ica.projector, *c.gamma);
      c = EegChain{};
      return trial_eeg_features(clean, gamma, go[i], opt);
    });
    detail::with_context("align", i, [&] {
      tf.stream = features::align_streams(eeg, od);
      if (tf.stream.size() != frames || force.samples() != frames || skin.samples() != frames) {
        throw DataError("modalities disagree on the epoch frame count");
      }
      return 0;
    });
    tf.skin = skin.data().transpose();
    tf.skin_columns = skin.labels();
    tf.force = force.data().transpose();
    if (rec.target) tf.target = rec.target(i, frame_rate, t0, frames).transpose();
    for (auto& line : tf.log) line = "trial " + std::to_string(i) + ": " + line;
  });
  for (const auto& t : out.trials) out.log.insert(out.log.end(), t.log.begin(), t.log.end());
  return out;
}

}  // namespace bimodec::pipeline
