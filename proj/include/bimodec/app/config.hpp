#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "bimodec/core/error.hpp"
#include "bimodec/eval/experiment.hpp"
#include "bimodec/features/features.hpp"
#include "bimodec/io/dataset.hpp"
#include "bimodec/pipeline/config.hpp"
#include "bimodec/pipeline/session.hpp"
#include "bimodec/synth/synth.hpp"

/// One JSON file configures every command; missing keys keep their defaults.
namespace bimodec::app {

struct SensitivitySettings {
  int repetitions = 20;
};

struct BenchSettings {
  int warmup = 20;
  int repeats = 200;
};

struct AppConfig {
  std::uint64_t seed = 42;
  synth::ProtocolConfig protocol;
  synth::ForwardModelParams forward_model;
  pipeline::PipelineConfig pipeline;
  features::FeatureOptions features;
  eval::DecodeConfig decode;
  SensitivitySettings sensitivity;
  BenchSettings bench;
};

inline nlohmann::json to_json(const synth::ProtocolConfig& p) {
  return {{"trials_per_condition", p.trials_per_condition}, {"trial_s", p.trial_s}, {"rest_min_s", p.rest_min_s}, {"rest_max_s", p.rest_max_s},
          {"lead_in_s", p.lead_in_s}, {"grid_s", p.grid_s}, {"mvc_left_n", p.mvc_left_n}, {"mvc_right_n", p.mvc_right_n}};
}

inline synth::ProtocolConfig protocol_from_json(const nlohmann::json& j) {
  synth::ProtocolConfig p;
  p.trials_per_condition = j.value("trials_per_condition", p.trials_per_condition);
  p.trial_s = j.value("trial_s", p.trial_s);
  p.rest_min_s = j.value("rest_min_s", p.rest_min_s);
  p.rest_max_s = j.value("rest_max_s", p.rest_max_s);
  p.lead_in_s = j.value("lead_in_s", p.lead_in_s);
  p.grid_s = j.value("grid_s", p.grid_s);
  p.mvc_left_n = j.value("mvc_left_n", p.mvc_left_n);
  p.mvc_right_n = j.value("mvc_right_n", p.mvc_right_n);
  return p;
}

inline nlohmann::json to_json(const features::FeatureOptions& f) {
  return {{"bandpass_order", f.bandpass_order}, {"mode", pipeline::mode_name(f.mode)}, {"feature_rate_hz", f.feature_rate_hz},
          {"min_rate_factor", f.min_rate_factor}, {"log_power", f.log_power}, {"sincos_phase", f.sincos_phase}};
}

inline features::FeatureOptions feature_options_from_json(const nlohmann::json& j) {
  features::FeatureOptions f;
  f.bandpass_order = j.value("bandpass_order", f.bandpass_order);
  f.mode = pipeline::mode_from_name(j.value("mode", pipeline::mode_name(f.mode)));
  f.feature_rate_hz = j.value("feature_rate_hz", f.feature_rate_hz);
  f.min_rate_factor = j.value("min_rate_factor", f.min_rate_factor);
  f.log_power = j.value("log_power", f.log_power);
  f.sincos_phase = j.value("sincos_phase", f.sincos_phase);
  if (f.bandpass_order < 1) throw ConfigError("features: bandpass_order must be >= 1");
  if (!(f.feature_rate_hz > 0.0)) throw ConfigError("features: feature_rate_hz must be > 0");
  return f;
}

inline nlohmann::json to_json(const AppConfig& c) {
  nlohmann::json fm;
  synth::to_json(fm, c.forward_model);
  // the top-level seed wins on load
  auto decode = c.decode;
  decode.seed = c.seed;
  return {{"seed", c.seed},
          {"protocol", to_json(c.protocol)},
          {"forward_model", fm},
          {"pipeline", pipeline::to_json(c.pipeline)},
          {"features", to_json(c.features)},
          {"decode", eval::to_json(decode)},
          {"sensitivity", {{"repetitions", c.sensitivity.repetitions}}},
          {"bench", {{"warmup", c.bench.warmup}, {"repeats", c.bench.repeats}}}};
}

inline AppConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  static const char* known[] = {"seed", "protocol", "forward_model", "pipeline", "features", "decode", "sensitivity", "bench"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) throw ConfigError("config: unknown key '" + k + "'");
  }
  AppConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("protocol")) c.protocol = protocol_from_json(j["protocol"]);
    if (j.contains("forward_model")) {
      // keys not given keep the built-in generator defaults
      nlohmann::json fm;
      synth::to_json(fm, c.forward_model);
      fm.update(j["forward_model"]);
      c.forward_model = fm.get<synth::ForwardModelParams>();
    }
    if (j.contains("pipeline")) c.pipeline = pipeline::pipeline_config_from_json(j["pipeline"]);
    if (j.contains("features")) c.features = feature_options_from_json(j["features"]);
    if (j.contains("decode")) c.decode = eval::decode_config_from_json(j["decode"]);
    if (j.contains("sensitivity")) c.sensitivity.repetitions = j["sensitivity"].value("repetitions", c.sensitivity.repetitions);
    if (j.contains("bench")) {
      c.bench.warmup = j["bench"].value("warmup", c.bench.warmup);
      c.bench.repeats = j["bench"].value("repeats", c.bench.repeats);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.decode.seed = c.seed;
  if (c.sensitivity.repetitions < 1) throw ConfigError("config: sensitivity.repetitions must be >= 1");
  if (c.bench.repeats < 1 || c.bench.warmup < 0) throw ConfigError("config: bench.repeats must be >= 1 and warmup >= 0");
  c.pipeline.validate();
  c.forward_model.validate();
  return c;
}

inline pipeline::SessionOptions session_options(const AppConfig& c, unsigned threads) {
  pipeline::SessionOptions o;
  o.pipeline = c.pipeline;
  o.features = c.features;
  o.threads = threads;
  return o;
}

/// Identifies what a decoder was trained on: the dataset plus every setting
/// that shapes features, split and fit.
inline std::string config_hash(const AppConfig& c, const std::string& dataset_hash) {
  const nlohmann::json j = {{"dataset", dataset_hash},
                            {"seed", c.seed},
                            {"pipeline", pipeline::to_json(c.pipeline)},
                            {"features", to_json(c.features)},
                            {"decode", to_json(c)["decode"]}};
  return io::fnv1a_hex(j.dump());
}

}  // namespace bimodec::app
