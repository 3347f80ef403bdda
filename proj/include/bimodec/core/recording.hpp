#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "bimodec/core/session.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec {

/// EEG and EOG reference for one trial, spanning
/// [go - pre - pad, go + post + pad) on the session clock.
struct EegSegment {
  TimeSeries eeg;
  TimeSeries eog;
};

/// A full session as seen by the preprocessing pipeline. Slow modalities are
/// continuous; EEG is served per trial so a 4 kHz session never has to sit in
/// memory at once.
struct Recording {
  SessionManifest manifest;
  TimeSeries fnirs;  ///< intensities, "<channel>:<wavelength>" labels
  TimeSeries skin;   ///< scalp-skin intensities
  TimeSeries force;  ///< newtons, rows = left, right
  /// Commanded force profile per trial (2 x samples at target_rate_hz, %MVC,
  /// zero outside the contraction).
  std::function<SignalMatrix(std::size_t trial, double rate_hz, double t0_s, Eigen::Index samples)> target;
  std::function<EegSegment(std::size_t trial)> eeg_segment;
};

}  // namespace bimodec
