#pragma once

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimodec/core/error.hpp"
#include "bimodec/eval/latency.hpp"
#include "bimodec/eval/sensitivity.hpp"

namespace bimodec::eval {

/// Scores of one (model, modality) run.
struct ModalityResult {
  std::string model;
  std::string modality;
  Eigen::Vector2d fvaf = Eigen::Vector2d::Zero();   ///< own hand [left, right]
  Eigen::Vector2d cross = Eigen::Vector2d::Zero();  ///< real hand h reconstructed by the other hand's output
  double val_fvaf = 0.0;
  std::string split_hash;
  std::string checkpoint;  ///< file name relative to the report
  nlohmann::json fit;      ///< lambda path or training log summary
  std::string warning;
  std::optional<LatencyReport> latency;
};

/// Everything a run reports. Wall-clock timestamps are kept out of it so
/// that reruns compare byte for byte.
struct EvalReport {
  std::string dataset_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<ModalityResult> results;
  std::vector<std::pair<std::string, SensitivityResult>> sensitivity;  ///< per "model/modality"

  void validate() const {
    for (const auto& r : results) {
      if (!r.fvaf.allFinite() || !r.cross.allFinite() || !std::isfinite(r.val_fvaf)) {
        throw NumericError("report: non-finite score for " + r.model + "/" + r.modality);
      }
    }
  }
};

inline nlohmann::json to_json(const LatencyStats& s) {
  return {{"mean_ms", s.mean_ms}, {"std_ms", s.std_ms}, {"p99_ms", s.p99_ms}, {"count", s.count}};
}

inline nlohmann::json to_json(const LatencyReport& r) {
  return {{"per_window", to_json(r.per_window)}, {"per_trial", to_json(r.per_trial)}, {"windows_per_trial", r.windows_per_trial}, {"batch", r.batch}, {"note", r.note}};
}

inline nlohmann::json to_json(const SensitivityResult& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"group", r.group}, {"columns", r.columns}, {"fvaf", r.fvaf}, {"percent_change", r.percent_change}, {"percent_change_sd", r.percent_change_sd}, {"reference", r.reference}});
  }
  return {{"fvaf_intact", s.fvaf_intact}, {"fvaf_all", s.fvaf_all}, {"degenerate", s.degenerate}, {"repetitions", s.repetitions},
          {"seed", s.seed}, {"repetition_seeds", s.repetition_seeds}, {"rows", rows}};
}

inline nlohmann::json to_json(const ModalityResult& r) {
  nlohmann::json j = {{"model", r.model},
                      {"modality", r.modality},
                      {"fvaf", {{"left", r.fvaf[0]}, {"right", r.fvaf[1]}}},
                      {"cross_fvaf", {{"left", r.cross[0]}, {"right", r.cross[1]}}},
                      {"val_fvaf", r.val_fvaf},
                      {"split_hash", r.split_hash},
                      {"checkpoint", r.checkpoint},
                      {"fit", r.fit},
                      {"warning", r.warning}};
  if (r.latency) j["latency"] = to_json(*r.latency);
  return j;
}

inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : rep.results) results.push_back(to_json(r));
  nlohmann::json sens = nlohmann::json::object();
  for (const auto& [k, s] : rep.sensitivity) sens[k] = to_json(s);
  return {{"dataset_hash", rep.dataset_hash}, {"config_hash", rep.config_hash}, {"seed", rep.seed}, {"config", rep.config}, {"results", results}, {"sensitivity", sens}};
}

inline ModalityResult modality_result_from_json(const nlohmann::json& j) {
  ModalityResult r;
  try {
    r.model = j.at("model").get<std::string>();
    r.modality = j.at("modality").get<std::string>();
    r.fvaf = {j.at("fvaf").at("left").get<double>(), j.at("fvaf").at("right").get<double>()};
    r.cross = {j.at("cross_fvaf").at("left").get<double>(), j.at("cross_fvaf").at("right").get<double>()};
    r.val_fvaf = j.value("val_fvaf", 0.0);
    r.split_hash = j.value("split_hash", "");
    r.checkpoint = j.value("checkpoint", "");
    r.fit = j.value("fit", nlohmann::json::object());
    r.warning = j.value("warning", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: bad result entry: ") + e.what());
  }
  return r;
}

namespace detail {

inline std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace detail

/// model,modality,hand,fvaf,cross_fvaf
inline std::string results_csv(const std::vector<ModalityResult>& results) {
  std::string out = "model,modality,hand,fvaf,cross_fvaf\n";
  for (const auto& r : results) {
    for (int h = 0; h < 2; ++h) {
      out += r.model + "," + r.modality + "," + (h == 0 ? "left" : "right") + "," + detail::num(r.fvaf[h]) + "," + detail::num(r.cross[h]) + "\n";
    }
  }
  return out;
}

/// group,columns,fvaf,percent_change,percent_change_sd,reference
inline std::string sensitivity_csv(const SensitivityResult& s) {
  std::string out = "group,columns,fvaf,percent_change,percent_change_sd,reference\n";
  for (const auto& r : s.rows) {
    out += r.group + "," + std::to_string(r.columns) + "," + detail::num(r.fvaf) + "," + detail::num(r.percent_change) + "," +
           detail::num(r.percent_change_sd) + "," + (r.reference ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace bimodec::eval
