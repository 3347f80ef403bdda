#pragma once

#include <chrono>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"
#include "bimodec/decode/cnnatt.hpp"
#include "bimodec/decode/lasso.hpp"
#include "bimodec/decode/windows.hpp"
#include "bimodec/features/features.hpp"

namespace bimodec::decode {

/// A trained model plus what is needed to feed it: the modality's columns,
/// their groups and the training standardization.
struct Decoder {
  std::variant<LinearModel, CnnAttModel> model;
  Modality modality = Modality::Both;
  std::vector<std::string> columns;
  std::map<std::string, std::vector<Eigen::Index>> groups;
  features::StandardizationStats stats;
  std::string config_hash;
  std::uint64_t seed = 0;

  std::string kind() const { return std::holds_alternative<LinearModel>(model) ? "linear" : "cnnatt"; }
  const LinearModel* linear() const { return std::get_if<LinearModel>(&model); }
  const CnnAttModel* cnnatt() const { return std::get_if<CnnAttModel>(&model); }

  Eigen::Index lag() const {
    if (auto* l = linear()) return l->lag;
    return cnnatt()->arch.lag;
  }

  Eigen::Index features() const {
    if (auto* l = linear()) return l->features;
    return cnnatt()->arch.features;
  }

  /// K x F window (already standardized) to [left, right] %MVC.
  Eigen::Vector2d predict_window(const Eigen::MatrixXd& window) const {
    if (auto* l = linear()) return l->predict(window);
    return cnnatt_forward(*cnnatt(), window);
  }

  Eigen::MatrixXd predict(const WindowSet& w) const {
    if (auto* l = linear()) return l->predict(w);
    return cnnatt_predict(*cnnatt(), w);
  }
};

/// Causal streaming decode: once K frames are available every new frame yields
/// one prediction from the last K frames. Frames before that emit nothing.
/// Output is 2 x (T - K + 1) starting at the K-th frame; per-window wall-clock
/// in milliseconds is appended to `window_ms` when given.
inline TimeSeries predict_stream(const Decoder& d, const features::FeatureStream& stream, std::vector<double>* window_ms = nullptr) {
  if (!stream.stats) throw DataError("predict_stream: stream is not standardized");
  if (stream.stats->mean.size() != d.stats.mean.size() || !stream.stats->mean.isApprox(d.stats.mean, 1e-12) ||
      !stream.stats->std.isApprox(d.stats.std, 1e-12)) {
    throw DataError("predict_stream: stream was standardized with different statistics than the model's training split");
  }
  const Eigen::Index k = d.lag();
  if (stream.width() != d.features()) {
    throw ShapeError("predict_stream: stream has F=" + std::to_string(stream.width()) + " columns, model expects " +
                     std::to_string(d.features()));
  }
  if (stream.size() < k) throw DataError("predict_stream: fewer frames than one window (K=" + std::to_string(k) + ")");
  const Eigen::Index n = stream.size() - k + 1;
  SignalMatrix out(2, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Eigen::Vector2d y = d.predict_window(stream.frames.middleRows(t, k));
    const auto stop = std::chrono::steady_clock::now();
    out.col(t) = y;
    if (window_ms) window_ms->push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return TimeSeries(std::move(out), stream.rate_hz, stream.time_at(k - 1), {"left", "right"}, SignalKind::Force);
}

}  // namespace bimodec::decode
