#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "bimodec/core/error.hpp"
#include "bimodec/decode/decoder.hpp"
#include "bimodec/decode/windows.hpp"

namespace bimodec::eval {

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double p99_ms = 0.0;
  std::size_t count = 0;
};

/// Sample std and nearest-rank p99.
inline LatencyStats latency_stats(std::vector<double> ms) {
  LatencyStats s;
  s.count = ms.size();
  if (ms.empty()) return s;
  double sum = 0.0;
  for (double v : ms) sum += v;
  s.mean_ms = sum / static_cast<double>(ms.size());
  double ss = 0.0;
  for (double v : ms) ss += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = ms.size() > 1 ? std::sqrt(ss / static_cast<double>(ms.size() - 1)) : 0.0;
  std::sort(ms.begin(), ms.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(ms.size())));
  s.p99_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

struct LatencyOptions {
  int warmup = 20;
  int repeats = 200;       ///< timed windows
  int trial_repeats = 3;   ///< full causal passes per trial
  int max_trials = 4;
};

struct LatencyReport {
  LatencyStats per_window;
  LatencyStats per_trial;  ///< one causal pass over every window of a trial
  std::size_t windows_per_trial = 0;
  int batch = 1;  ///< windows per timed call when the clock is too coarse
  std::string note;
};

/// Wall-clock of single-window predictions on a standardized block, plus whole
/// trial passes. Runs on the calling thread.
inline LatencyReport latency_bench(const decode::Decoder& dec, const decode::FrameBlock& block, const LatencyOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  if (opt.repeats < 1 || opt.warmup < 0 || opt.trial_repeats < 1) throw ConfigError("latency: repeats must be >= 1, warmup >= 0");
  if (block.width() != dec.features()) throw ShapeError("latency: block has " + std::to_string(block.width()) + " columns, model expects " + std::to_string(dec.features()));
  const decode::WindowSet w(std::make_shared<const decode::FrameBlock>(block), dec.lag());
  if (w.size() < 1) throw DataError("latency: no complete window in the block");
  const Eigen::Index n = w.size();
  std::vector<Eigen::MatrixXd> windows;
  windows.reserve(static_cast<std::size_t>(std::min<Eigen::Index>(n, opt.repeats + opt.warmup)));
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(n, opt.repeats + opt.warmup); ++i) windows.push_back(w.window(i));

  LatencyReport rep;
  double sink = 0.0;
  auto timed = [&](int batch, std::size_t at) {
    const auto t0 = clock::now();
    for (int b = 0; b < batch; ++b) sink += dec.predict_window(windows[(at + static_cast<std::size_t>(b)) % windows.size()])[0];
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count() / batch;
  };
  for (int i = 0; i < opt.warmup; ++i) timed(1, static_cast<std::size_t>(i));
  // clock too coarse for one call: time batches instead
  const double tick_ms = 1e3 * static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);
  if (timed(1, 0) < 50.0 * tick_ms) {
    rep.batch = 16;
    rep.note = "single predictions near clock resolution; timed in batches of 16 windows";
  }
  std::vector<double> ms;
  for (int i = 0; i < opt.repeats; ++i) ms.push_back(timed(rep.batch, static_cast<std::size_t>(i)));
  rep.per_window = latency_stats(std::move(ms));

  std::vector<double> trial_ms;
  int used = 0;
  for (const auto& run : w.runs()) {
    if (used >= opt.max_trials) break;
    ++used;
    rep.windows_per_trial = std::max(rep.windows_per_trial, static_cast<std::size_t>(run.count));
    for (int r = 0; r < opt.trial_repeats; ++r) {
      const auto t0 = clock::now();
      for (Eigen::Index i = 0; i < run.count; ++i) sink += dec.predict_window(w.window(run.first_window + i))[0];
      trial_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
  }
  rep.per_trial = latency_stats(std::move(trial_ms));
  if (!std::isfinite(sink)) rep.note += rep.note.empty() ? "non-finite predictions during timing" : "; non-finite predictions during timing";
  return rep;
}

}  // namespace bimodec::eval
