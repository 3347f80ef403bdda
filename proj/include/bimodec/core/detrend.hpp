#pragma once

#include "bimodec/core/error.hpp"
#include "bimodec/core/time_series.hpp"

namespace bimodec {

/// Subtracts the least-squares line from every channel.
inline TimeSeries linear_detrend(const TimeSeries& ts) {
  const Eigen::Index n = ts.samples();
  if (n < 2) throw DataError("linear_detrend: need at least 2 samples, got " + std::to_string(n));
  const double t_mean = static_cast<double>(n - 1) / 2.0;
  double t_ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) t_ss += (static_cast<double>(i) - t_mean) * (static_cast<double>(i) - t_mean);

  SignalMatrix out(ts.channels(), n);
  for (Eigen::Index c = 0; c < ts.channels(); ++c) {
    const auto y = ts.data().row(c);
    const double y_mean = y.mean();
    double cross = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cross += (static_cast<double>(i) - t_mean) * (y(i) - y_mean);
    const double slope = cross / t_ss;
    for (Eigen::Index i = 0; i < n; ++i) {
      out(c, i) = y(i) - y_mean - slope * (static_cast<double>(i) - t_mean);
    }
  }
  return ts.with_data(std::move(out));
}

}  // namespace bimodec
