#pragma once

#include <string>
#include <vector>

#include "bimodec/dsp/iir.hpp"
#include "bimodec/pipeline/config.hpp"

/// The filters the pipeline builds from a config, at the rates they run at,
/// each with the frequencies where it must attenuate by at least min_atten_db.
namespace filter_specs {

struct Spec {
  std::string name;
  bimodec::dsp::IirFilter filter;
  std::vector<double> stop_hz;
  double min_atten_db;
};

inline std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
  return g;
}

inline std::vector<Spec> design_specs(const bimodec::pipeline::PipelineConfig& cfg, double fnirs_rate_hz = 12.5) {
  using namespace bimodec::dsp;
  std::vector<Spec> out;
  std::vector<double> eeg_rates{cfg.eeg.downsample_hz};
  if (cfg.eeg.gamma_rate_hz > 0.0) eeg_rates.push_back(cfg.eeg.gamma_rate_hz);
  for (double rate : eeg_rates) {
    const auto comb = design_notch_comb(cfg.eeg.notch_hz, rate, cfg.eeg.notch_q);
    for (std::size_t i = 0; i < comb.sections().size(); ++i) {
      const double f0 = comb.design().cutoffs_hz[i];
      out.push_back({"notch " + std::to_string(f0) + " Hz @ " + std::to_string(rate), comb, {f0}, 40.0});
    }
    out.push_back({"eeg high-pass @ " + std::to_string(rate),
                   design_iir(FilterFamily::Butterworth, BandType::Highpass, cfg.eeg.hp_order, {cfg.eeg.hp_hz}, rate),
                   grid(0.001, 0.1, 100), 40.0});
  }
  out.push_back({"fnirs low-pass",
                 design_iir(FilterFamily::Elliptic, BandType::Lowpass, cfg.fnirs.lp_order, {cfg.fnirs.lp_hz}, fnirs_rate_hz, cfg.fnirs.ripple_db,
                            cfg.fnirs.atten_db),
                 grid(1.0, fnirs_rate_hz / 2.0, 200), 40.0});
  out.push_back({"force band-pass",
                 design_iir(FilterFamily::Butterworth, BandType::Bandpass, cfg.force.bp_order, {cfg.force.bp_lo_hz, cfg.force.bp_hi_hz},
                            cfg.force.resample_hz),
                 grid(50.0, cfg.force.resample_hz / 2.0 - 1e-6, 200), 30.0});
  return out;
}

}  // namespace filter_specs
