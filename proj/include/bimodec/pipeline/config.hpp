#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimodec/core/epoch.hpp"
#include "bimodec/core/error.hpp"
#include "bimodec/dsp/iir.hpp"

namespace bimodec::pipeline {

struct EegConfig {
  double downsample_hz = 250.0;
  std::vector<double> notch_hz{50.0, 12.5};
  double notch_q = 35.0;
  double hp_hz = 1.0;
  int hp_order = 5;
  double ica_threshold = 0.3;
  int ica_max_reject = 1;
  /// Rate of the secondary chain that feeds the bands above 100 Hz; 0 disables it.
  double gamma_rate_hz = 500.0;
  dsp::FilterMode mode = dsp::FilterMode::ZeroPhase;
};

struct FnirsConfig {
  double lp_hz = 0.25;
  int lp_order = 7;
  double ripple_db = 0.1;
  double atten_db = 40.0;
  dsp::FilterMode mode = dsp::FilterMode::ZeroPhase;
};

struct ForceConfig {
  double resample_hz = 250.0;
  double bp_lo_hz = 0.01;
  double bp_hi_hz = 10.0;
  int bp_order = 3;
  double hp_hz = 0.01;
  int hp_order = 1;
  double ripple_db = 0.1;
  double atten_db = 40.0;
  dsp::FilterMode mode = dsp::FilterMode::ZeroPhase;
};

struct PipelineConfig {
  EegConfig eeg;
  FnirsConfig fnirs;
  ForceConfig force;
  EpochWindow epoch;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("pipeline config: ") + name + " must be positive");
    };
    positive(eeg.downsample_hz, "eeg.downsample_hz");
    positive(eeg.notch_q, "eeg.notch_q");
    positive(eeg.hp_hz, "eeg.hp_hz");
    positive(eeg.ica_threshold, "eeg.ica_threshold");
    for (double f : eeg.notch_hz) positive(f, "eeg.notch_hz");
    if (eeg.hp_order < 1 || fnirs.lp_order < 1 || force.bp_order < 1 || force.hp_order < 1) {
      throw ConfigError("pipeline config: filter orders must be >= 1");
    }
    if (eeg.gamma_rate_hz < 0.0) throw ConfigError("pipeline config: eeg.gamma_rate_hz must be >= 0");
    positive(fnirs.lp_hz, "fnirs.lp_hz");
    positive(fnirs.ripple_db, "fnirs.ripple_db");
    positive(fnirs.atten_db, "fnirs.atten_db");
    positive(force.resample_hz, "force.resample_hz");
    positive(force.bp_lo_hz, "force.bp_lo_hz");
    positive(force.bp_hi_hz, "force.bp_hi_hz");
    positive(force.hp_hz, "force.hp_hz");
    if (!(force.bp_lo_hz < force.bp_hi_hz)) throw ConfigError("pipeline config: force band edges must increase");
    positive(epoch.post_s, "epoch.post_s");
    if (epoch.pre_s < 0.0) throw ConfigError("pipeline config: epoch.pre_s must be >= 0");
  }
};

inline std::string mode_name(dsp::FilterMode m) { return m == dsp::FilterMode::Causal ? "causal" : "zero_phase"; }

inline dsp::FilterMode mode_from_name(const std::string& s) {
  if (s == "causal") return dsp::FilterMode::Causal;
  if (s == "zero_phase") return dsp::FilterMode::ZeroPhase;
  throw ConfigError("unknown filter mode '" + s + "' (causal|zero_phase)");
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {
      {"eeg",
       {{"downsample_hz", c.eeg.downsample_hz},
        {"notch_hz", c.eeg.notch_hz},
        {"notch_q", c.eeg.notch_q},
        {"hp_hz", c.eeg.hp_hz},
        {"hp_order", c.eeg.hp_order},
        {"ica_threshold", c.eeg.ica_threshold},
        {"ica_max_reject", c.eeg.ica_max_reject},
        {"gamma_rate_hz", c.eeg.gamma_rate_hz},
        {"mode", mode_name(c.eeg.mode)}}},
      {"fnirs",
       {{"lp_hz", c.fnirs.lp_hz},
        {"lp_order", c.fnirs.lp_order},
        {"ripple_db", c.fnirs.ripple_db},
        {"atten_db", c.fnirs.atten_db},
        {"mode", mode_name(c.fnirs.mode)}}},
      {"force",
       {{"resample_hz", c.force.resample_hz},
        {"bp_hz", {c.force.bp_lo_hz, c.force.bp_hi_hz}},
        {"bp_order", c.force.bp_order},
        {"hp_hz", c.force.hp_hz},
        {"hp_order", c.force.hp_order},
        {"ripple_db", c.force.ripple_db},
        {"atten_db", c.force.atten_db},
        {"mode", mode_name(c.force.mode)}}},
      {"epoch", {{"pre_s", c.epoch.pre_s}, {"post_s", c.epoch.post_s}}},
  };
}

/// Missing keys keep their defaults.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    if (j.contains("eeg")) {
      const auto& e = j["eeg"];
      c.eeg.downsample_hz = e.value("downsample_hz", c.eeg.downsample_hz);
      c.eeg.notch_hz = e.value("notch_hz", c.eeg.notch_hz);
      c.eeg.notch_q = e.value("notch_q", c.eeg.notch_q);
      c.eeg.hp_hz = e.value("hp_hz", c.eeg.hp_hz);
      c.eeg.hp_order = e.value("hp_order", c.eeg.hp_order);
      c.eeg.ica_threshold = e.value("ica_threshold", c.eeg.ica_threshold);
      c.eeg.ica_max_reject = e.value("ica_max_reject", c.eeg.ica_max_reject);
      c.eeg.gamma_rate_hz = e.value("gamma_rate_hz", c.eeg.gamma_rate_hz);
      c.eeg.mode = mode_from_name(e.value("mode", mode_name(c.eeg.mode)));
    }
    if (j.contains("fnirs")) {
      const auto& f = j["fnirs"];
      c.fnirs.lp_hz = f.value("lp_hz", c.fnirs.lp_hz);
      c.fnirs.lp_order = f.value("lp_order", c.fnirs.lp_order);
      c.fnirs.ripple_db = f.value("ripple_db", c.fnirs.ripple_db);
      c.fnirs.atten_db = f.value("atten_db", c.fnirs.atten_db);
      c.fnirs.mode = mode_from_name(f.value("mode", mode_name(c.fnirs.mode)));
    }
    if (j.contains("force")) {
      const auto& f = j["force"];
      c.force.resample_hz = f.value("resample_hz", c.force.resample_hz);
      if (f.contains("bp_hz")) {
        const auto bp = f["bp_hz"].get<std::vector<double>>();
        if (bp.size() != 2) throw ConfigError("pipeline config: force.bp_hz needs two values");
        c.force.bp_lo_hz = bp[0];
        c.force.bp_hi_hz = bp[1];
      }
      c.force.bp_order = f.value("bp_order", c.force.bp_order);
      c.force.hp_hz = f.value("hp_hz", c.force.hp_hz);
      c.force.hp_order = f.value("hp_order", c.force.hp_order);
      c.force.ripple_db = f.value("ripple_db", c.force.ripple_db);
      c.force.atten_db = f.value("atten_db", c.force.atten_db);
      c.force.mode = mode_from_name(f.value("mode", mode_name(c.force.mode)));
    }
    if (j.contains("epoch")) {
      c.epoch.pre_s = j["epoch"].value("pre_s", c.epoch.pre_s);
      c.epoch.post_s = j["epoch"].value("post_s", c.epoch.post_s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace bimodec::pipeline
