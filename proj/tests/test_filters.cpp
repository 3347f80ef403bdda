#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "bimodec/dsp/iir.hpp"
#include "bimodec/pipeline/config.hpp"
#include "filter_specs.hpp"

using namespace bimodec;

namespace {

// |H| evaluated from the raw coefficients, independent of IirFilter::response
double attenuation_db(const dsp::IirFilter& f, double hz) {
  const double w = 2.0 * std::numbers::pi * hz / f.rate_hz();
  double mag = 1.0;
  for (const auto& s : f.sections()) {
    std::complex<double> num = 0.0, den = 0.0;
    const double b[3] = {s.b0, s.b1, s.b2}, a[3] = {1.0, s.a1, s.a2};
    for (int k = 0; k < 3; ++k) {
      num += b[k] * std::polar(1.0, -w * k);
      den += a[k] * std::polar(1.0, -w * k);
    }
    mag *= std::abs(num) / std::abs(den);
  }
  return -20.0 * std::log10(std::max(mag, 1e-300));
}

}  // namespace

TEST(FilterSpecs, EveryBoundHoldsOnTheGrid) {
  for (const auto& spec : filter_specs::design_specs(pipeline::PipelineConfig{})) {
    for (double hz : spec.stop_hz) {
      EXPECT_GE(attenuation_db(spec.filter, hz), spec.min_atten_db) << spec.name << " at " << hz << " Hz";
    }
  }
}

TEST(FilterSpecs, ResponseAgreesWithCoefficientOracle) {
  for (const auto& spec : filter_specs::design_specs(pipeline::PipelineConfig{})) {
    for (double hz : spec.stop_hz) {
      const double a = attenuation_db(spec.filter, hz);
      if (a > 200.0) continue;  // exact zero
      EXPECT_NEAR(-spec.filter.magnitude_db(hz), a, 1e-6 * std::max(1.0, a)) << spec.name;
    }
  }
}

TEST(FilterSpecs, PassbandsNearUnity) {
  pipeline::PipelineConfig cfg;
  const auto hp = dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Highpass, cfg.eeg.hp_order, {cfg.eeg.hp_hz}, 250.0);
  EXPECT_NEAR(attenuation_db(hp, cfg.eeg.hp_hz), 3.0103, 0.01);
  EXPECT_LT(attenuation_db(hp, 10.0), 0.01);
  const auto lp = dsp::design_iir(dsp::FilterFamily::Elliptic, dsp::BandType::Lowpass, cfg.fnirs.lp_order, {cfg.fnirs.lp_hz}, 12.5,
                                  cfg.fnirs.ripple_db, cfg.fnirs.atten_db);
  for (double hz = 0.0; hz <= cfg.fnirs.lp_hz; hz += 0.01) EXPECT_LE(attenuation_db(lp, hz), cfg.fnirs.ripple_db + 1e-6) << hz;
  const auto notch = dsp::design_notch(50.0, 250.0, cfg.eeg.notch_q);
  EXPECT_LT(attenuation_db(notch, 30.0), 0.1);
  EXPECT_NEAR(attenuation_db(notch, 50.0 * (1.0 + 0.5 / cfg.eeg.notch_q)), 3.0103, 0.2);
}

TEST(FilterSpecs, SinusoidSteadyStateMatchesResponse) {
  const auto hp = dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Highpass, 5, {1.0}, 250.0);
  for (double hz : {0.5, 1.0, 3.0}) {
    const Eigen::Index n = static_cast<Eigen::Index>(250.0 * 40.0);
    SignalMatrix x(1, n);
    for (Eigen::Index i = 0; i < n; ++i) x(0, i) = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 250.0);
    const TimeSeries y = dsp::apply_filter(hp, TimeSeries(x, 250.0, 0.0, {"x"}, SignalKind::Eeg), dsp::FilterMode::Causal);
    const double amp = y.data().row(0).tail(n / 4).cwiseAbs().maxCoeff();
    EXPECT_NEAR(amp, std::abs(hp.response(hz)), 2e-3) << hz;
  }
}

TEST(FilterSpecs, ZeroPhaseSquaresMagnitudeAndKeepsPhase) {
  const auto lp = dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Lowpass, 3, {5.0}, 100.0);
  const Eigen::Index n = 4000;
  SignalMatrix x(1, n);
  for (Eigen::Index i = 0; i < n; ++i) x(0, i) = std::sin(2.0 * std::numbers::pi * 4.0 * static_cast<double>(i) / 100.0);
  const TimeSeries y = dsp::apply_filter(lp, TimeSeries(x, 100.0, 0.0, {"x"}, SignalKind::Force), dsp::FilterMode::ZeroPhase);
  const double g = std::norm(lp.response(4.0));
  for (Eigen::Index i = n / 4; i < 3 * n / 4; ++i) EXPECT_NEAR(y.data()(0, i), g * x(0, i), 1e-3);
}

TEST(FilterDesign, RejectsBadInput) {
  EXPECT_THROW(dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Lowpass, 0, {5.0}, 100.0), ConfigError);
  EXPECT_THROW(dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Lowpass, 2, {60.0}, 100.0), ConfigError);
  EXPECT_THROW(dsp::design_iir(dsp::FilterFamily::Butterworth, dsp::BandType::Bandpass, 2, {5.0}, 100.0), ConfigError);
  EXPECT_THROW(dsp::design_notch(0.0, 100.0), ConfigError);
}
