#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimodec/core/error.hpp"

namespace bimodec {

struct TrialInfo {
  int condition = 1;        ///< 1..4
  double go_time_s = 0.0;   ///< session clock
  double duration_s = 10.0;
  double rest_s = 15.0;     ///< rest after this trial
};

/// Session bookkeeping: trial order and timing, sampling rates, MVC.
struct SessionManifest {
  std::string subject_id = "synthetic-01";
  std::vector<TrialInfo> trials;
  int trials_per_condition = 30;
  double rest_min_s = 15.0;
  double rest_max_s = 21.0;
  std::map<std::string, double> rates_hz{{"EEG", 4000.0}, {"FNIRS_INTENSITY", 12.5}, {"SKIN", 12.5}, {"FORCE", 1000.0}};
  double mvc_left_n = 300.0;
  double mvc_right_n = 320.0;
  double session_duration_s = 0.0;
  /// EEG is stored as one segment per trial spanning [go - pre - pad, go + post + pad).
  double eeg_segment_pad_s = 3.2;

  double rate(const std::string& kind) const {
    auto it = rates_hz.find(kind);
    if (it == rates_hz.end()) throw DataError("SessionManifest: no rate for " + kind);
    return it->second;
  }

  std::vector<double> go_times() const {
    std::vector<double> g;
    for (const auto& t : trials) g.push_back(t.go_time_s);
    return g;
  }

  void validate() const {
    std::map<int, int> per_condition;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      const auto& t = trials[i];
      if (t.condition < 1 || t.condition > 4) throw DataError("manifest: trial " + std::to_string(i) + " has condition " + std::to_string(t.condition));
      if (t.rest_s < rest_min_s - 1e-9 || t.rest_s > rest_max_s + 1e-9) {
        throw DataError("manifest: trial " + std::to_string(i) + " rest " + std::to_string(t.rest_s) + " s outside [" +
                        std::to_string(rest_min_s) + ", " + std::to_string(rest_max_s) + "]");
      }
      if (i > 0 && t.go_time_s <= trials[i - 1].go_time_s) throw DataError("manifest: go times must increase");
      ++per_condition[t.condition];
    }
    for (int c = 1; c <= 4; ++c) {
      if (per_condition[c] != trials_per_condition) {
        throw DataError("manifest: condition " + std::to_string(c) + " has " + std::to_string(per_condition[c]) +
                        " trials, expected " + std::to_string(trials_per_condition));
      }
    }
    if (!(mvc_left_n > 0.0 && mvc_right_n > 0.0)) throw DataError("manifest: MVC must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrialInfo& t) {
  j = {{"condition", t.condition}, {"go_time_s", t.go_time_s}, {"duration_s", t.duration_s}, {"rest_s", t.rest_s}};
}

inline void from_json(const nlohmann::json& j, TrialInfo& t) {
  t.condition = j.at("condition").get<int>();
  t.go_time_s = j.at("go_time_s").get<double>();
  t.duration_s = j.value("duration_s", 10.0);
  t.rest_s = j.at("rest_s").get<double>();
}

inline void to_json(nlohmann::json& j, const SessionManifest& m) {
  j = {{"subject_id", m.subject_id},
       {"trials", m.trials},
       {"trials_per_condition", m.trials_per_condition},
       {"rest_min_s", m.rest_min_s},
       {"rest_max_s", m.rest_max_s},
       {"rates_hz", m.rates_hz},
       {"mvc_left_n", m.mvc_left_n},
       {"mvc_right_n", m.mvc_right_n},
       {"session_duration_s", m.session_duration_s},
       {"eeg_segment_pad_s", m.eeg_segment_pad_s}};
}

inline void from_json(const nlohmann::json& j, SessionManifest& m) {
  m.subject_id = j.at("subject_id").get<std::string>();
  m.trials = j.at("trials").get<std::vector<TrialInfo>>();
  m.trials_per_condition = j.at("trials_per_condition").get<int>();
  m.rest_min_s = j.value("rest_min_s", 15.0);
  m.rest_max_s = j.value("rest_max_s", 21.0);
  m.rates_hz = j.at("rates_hz").get<std::map<std::string, double>>();
  m.mvc_left_n = j.at("mvc_left_n").get<double>();
  m.mvc_right_n = j.at("mvc_right_n").get<double>();
  m.session_duration_s = j.at("session_duration_s").get<double>();
  m.eeg_segment_pad_s = j.value("eeg_segment_pad_s", 3.2);
}

}  // namespace bimodec
