#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"

namespace bimodec {

/// Channels x samples, one contiguous row per channel.
using SignalMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class SignalKind { Eeg, FnirsIntensity, FnirsOd, Force, Skin, Feature };

inline std::string_view to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::Eeg: return "EEG";
    case SignalKind::FnirsIntensity: return "FNIRS_INTENSITY";
    case SignalKind::FnirsOd: return "FNIRS_OD";
    case SignalKind::Force: return "FORCE";
    case SignalKind::Skin: return "SKIN";
    case SignalKind::Feature: return "FEATURE";
  }
  return "UNKNOWN";
}

inline SignalKind signal_kind_from_string(std::string_view name) {
  for (auto kind : {SignalKind::Eeg, SignalKind::FnirsIntensity, SignalKind::FnirsOd,
                    SignalKind::Force, SignalKind::Skin, SignalKind::Feature}) {
    if (to_string(kind) == name) return kind;
  }
  throw DataError("unknown signal kind '" + std::string(name) + "'");
}

inline std::vector<std::string> numbered_labels(std::string_view prefix, std::size_t count) {
  std::vector<std::string> labels;
  labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%02zu", i);
    labels.push_back(std::string(prefix) + buf);
  }
  return labels;
}

/// Uniformly sampled multi-channel signal. Immutable once constructed; every
/// transform returns a new series.
///
/// Units depend on the kind: EEG in microvolts, optical intensity in arbitrary
/// detector units, optical density dimensionless, force in newtons or %MVC.
class TimeSeries {
 public:
  TimeSeries() = default;

  TimeSeries(SignalMatrix data, double rate_hz, double t0_s, std::vector<std::string> labels,
             SignalKind kind)
      : data_(std::move(data)), rate_hz_(rate_hz), t0_s_(t0_s), labels_(std::move(labels)),
        kind_(kind) {
    if (!(rate_hz_ > 0.0) || !std::isfinite(rate_hz_)) {
      throw DataError("TimeSeries: rate_hz must be positive and finite");
    }
    if (!std::isfinite(t0_s_)) throw DataError("TimeSeries: t0 must be finite");
    if (labels_.empty()) labels_ = numbered_labels("ch", static_cast<std::size_t>(data_.rows()));
    if (labels_.size() != static_cast<std::size_t>(data_.rows())) {
      throw DataError("TimeSeries: " + std::to_string(labels_.size()) + " labels for " +
                      std::to_string(data_.rows()) + " channels");
    }
    std::set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw DataError("TimeSeries: channel labels must be unique");
    if (!data_.allFinite()) {
      for (Eigen::Index c = 0; c < data_.rows(); ++c) {
        for (Eigen::Index i = 0; i < data_.cols(); ++i) {
          if (!std::isfinite(data_(c, i))) {
            throw DataError("TimeSeries: non-finite value in channel '" +
                            labels_[static_cast<std::size_t>(c)] + "' at sample " +
                            std::to_string(i));
          }
        }
      }
    }
  }

  const SignalMatrix& data() const { return data_; }
  double rate_hz() const { return rate_hz_; }
  double t0_s() const { return t0_s_; }
  const std::vector<std::string>& labels() const { return labels_; }
  SignalKind kind() const { return kind_; }

  Eigen::Index channels() const { return data_.rows(); }
  Eigen::Index samples() const { return data_.cols(); }
  double duration_s() const { return static_cast<double>(samples()) / rate_hz_; }
  double time_at(Eigen::Index i) const { return t0_s_ + static_cast<double>(i) / rate_hz_; }

  auto channel(Eigen::Index c) const { return data_.row(c); }

  /// Same metadata, new samples (channel count must match).
  TimeSeries with_data(SignalMatrix data) const {
    if (data.rows() != data_.rows()) throw DataError("TimeSeries::with_data: channel count changed");
    return TimeSeries(std::move(data), rate_hz_, t0_s_, labels_, kind_);
  }

  TimeSeries with_kind(SignalKind kind) const {
    return TimeSeries(data_, rate_hz_, t0_s_, labels_, kind);
  }

  /// Copy of samples [first, first + count).
  TimeSeries slice(Eigen::Index first, Eigen::Index count) const {
    if (first < 0 || count < 0 || first + count > samples()) {
      throw DataError("TimeSeries::slice: range [" + std::to_string(first) + ", " +
                      std::to_string(first + count) + ") outside 0.." + std::to_string(samples()));
    }
    return TimeSeries(data_.middleCols(first, count), rate_hz_, time_at(first), labels_, kind_);
  }

  TimeSeries select_channels(const std::vector<Eigen::Index>& rows) const {
    SignalMatrix out(static_cast<Eigen::Index>(rows.size()), samples());
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = data_.row(rows[i]);
      labels.push_back(labels_.at(static_cast<std::size_t>(rows[i])));
    }
    return TimeSeries(std::move(out), rate_hz_, t0_s_, std::move(labels), kind_);
  }

 private:
  SignalMatrix data_;
  double rate_hz_ = 1.0;
  double t0_s_ = 0.0;
  std::vector<std::string> labels_;
  SignalKind kind_ = SignalKind::Feature;
};

/// Stacks series with identical clocks channel-wise.
inline TimeSeries stack_channels(const std::vector<TimeSeries>& parts, SignalKind kind) {
  if (parts.empty()) throw DataError("stack_channels: no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.samples() != parts.front().samples() || p.rate_hz() != parts.front().rate_hz()) {
      throw DataError("stack_channels: clock mismatch");
    }
    rows += p.channels();
  }
  SignalMatrix out(rows, parts.front().samples());
  std::vector<std::string> labels;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.channels()) = p.data();
    r += p.channels();
    labels.insert(labels.end(), p.labels().begin(), p.labels().end());
  }
  return TimeSeries(std::move(out), parts.front().rate_hz(), parts.front().t0_s(), std::move(labels),
                    kind);
}

}  // namespace bimodec
