#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec {

struct EpochWindow {
  double pre_s = 4.0;
  double post_s = 14.0;
};

struct RejectedTrial {
  std::size_t trial_index = 0;
  double go_time_s = 0.0;
  std::string reason;
};

struct EpochResult {
  std::vector<TimeSeries> slices;
  /// Trial index (position in go_times) of each slice.
  std::vector<std::size_t> accepted;
  std::vector<RejectedTrial> rejected;
};

inline Eigen::Index epoch_length(double rate_hz, EpochWindow w = {}) {
  return static_cast<Eigen::Index>(std::llround((w.pre_s + w.post_s) * rate_hz));
}

/// Cuts [go - pre, go + post) out of `ts` for every go cue. Windows that do
/// not fit inside the recording are reported in `rejected`, never dropped
/// silently. The sample at the go cue is index round(pre * rate).
inline EpochResult epoch(const TimeSeries& ts, std::span<const double> go_times, EpochWindow w = {}) {
  if (w.pre_s < 0.0 || w.post_s <= 0.0) throw ConfigError("epoch: window must have pre >= 0, post > 0");
  EpochResult result;
  const Eigen::Index len = epoch_length(ts.rate_hz(), w);
  const auto pre_samples = static_cast<Eigen::Index>(std::llround(w.pre_s * ts.rate_hz()));
  for (std::size_t i = 0; i < go_times.size(); ++i) {
    const double go = go_times[i];
    const auto go_index = static_cast<Eigen::Index>(std::llround((go - ts.t0_s()) * ts.rate_hz()));
    const Eigen::Index first = go_index - pre_samples;
    if (!std::isfinite(go) || first < 0 || first + len > ts.samples()) {
      result.rejected.push_back({i, go, "window [" + std::to_string(go - w.pre_s) + ", " +
                                            std::to_string(go + w.post_s) + ") s exceeds recording [" +
                                            std::to_string(ts.t0_s()) + ", " +
                                            std::to_string(ts.time_at(ts.samples())) + ") s"});
      continue;
    }
    result.slices.push_back(ts.slice(first, len));
    result.accepted.push_back(i);
  }
  return result;
}

/// Per-trial window around a go cue.
class TrialEpoch {
 public:
  TrialEpoch(std::map<SignalKind, TimeSeries> signals, int condition_id, double go_time_s,
             SignalMatrix target_force, EpochWindow window = {})
      : signals_(std::move(signals)), condition_id_(condition_id), go_time_s_(go_time_s),
        target_force_(std::move(target_force)), window_(window) {
    if (condition_id_ < 1 || condition_id_ > 4) throw DataError("TrialEpoch: condition must be 1..4");
    if (target_force_.rows() != 2) throw DataError("TrialEpoch: target force must be 2 x T");
    if ((target_force_.array() < 0.0).any() || (target_force_.array() > 100.0).any()) {
      throw DataError("TrialEpoch: target force outside [0, 100] %MVC");
    }
    for (const auto& [kind, ts] : signals_) {
      if (ts.samples() != epoch_length(ts.rate_hz(), window_) ||
          std::abs(ts.t0_s() - (go_time_s_ - window_.pre_s)) > 0.5 / ts.rate_hz()) {
        throw DataError("TrialEpoch: " + std::string(to_string(kind)) + " slice does not span [go-" +
                        std::to_string(window_.pre_s) + ", go+" + std::to_string(window_.post_s) + "]");
      }
    }
  }

  const std::map<SignalKind, TimeSeries>& signals() const { return signals_; }
  const TimeSeries& signal(SignalKind kind) const {
    auto it = signals_.find(kind);
    if (it == signals_.end()) throw DataError("TrialEpoch: no " + std::string(to_string(kind)) + " signal");
    return it->second;
  }
  int condition_id() const { return condition_id_; }
  double go_time_s() const { return go_time_s_; }
  const SignalMatrix& target_force() const { return target_force_; }

 private:
  std::map<SignalKind, TimeSeries> signals_;
  int condition_id_;
  double go_time_s_;
  SignalMatrix target_force_;
  EpochWindow window_;
};

}  // namespace bimodec
