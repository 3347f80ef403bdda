#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimodec/core/error.hpp"
#include "bimodec/decode/cnnatt.hpp"
#include "bimodec/decode/decoder.hpp"
#include "bimodec/decode/lasso.hpp"
#include "bimodec/decode/windows.hpp"
#include "bimodec/eval/metrics.hpp"
#include "bimodec/pipeline/session.hpp"

namespace bimodec::eval {

/// Everything after preprocessing: split, window, fit and score settings.
struct DecodeConfig {
  std::uint64_t seed = 42;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  double window_ms = 800.0;
  decode::LassoOptions lasso;
  int lambda_count = 12;
  double lambda_ratio = 1e-3;
  /// The lambda path stops after this many consecutive values below the best; 0 runs the whole grid.
  int lambda_patience = 3;
  decode::TrainConfig train;
  decode::CnnAttArchitecture arch;
  /// Training windows advance by this many frames; validation and test use every frame.
  Eigen::Index train_stride = 4;
};

inline nlohmann::json to_json(const DecodeConfig& c) {
  return {{"seed", c.seed},
          {"val_fraction", c.val_fraction},
          {"test_fraction", c.test_fraction},
          {"window_ms", c.window_ms},
          {"lasso", {{"max_iter", c.lasso.max_iter}, {"tol", c.lasso.tol}, {"lambda_count", c.lambda_count}, {"lambda_ratio", c.lambda_ratio}, {"lambda_patience", c.lambda_patience}}},
          {"cnnatt",
           {{"lr", c.train.lr},
            {"batch", c.train.batch},
            {"patience", c.train.patience},
            {"max_epochs", c.train.max_epochs},
            {"train_stride", c.train_stride},
            {"conv_channels", c.arch.conv_channels},
            {"kernel", c.arch.kernel},
            {"attention_dim", c.arch.attention_dim},
            {"hidden", c.arch.hidden}}}};
}

/// Missing keys keep their defaults.
inline DecodeConfig decode_config_from_json(const nlohmann::json& j) {
  DecodeConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.window_ms = j.value("window_ms", c.window_ms);
    if (j.contains("lasso")) {
      const auto& l = j["lasso"];
      c.lasso.max_iter = l.value("max_iter", c.lasso.max_iter);
      c.lasso.tol = l.value("tol", c.lasso.tol);
      c.lambda_count = l.value("lambda_count", c.lambda_count);
      c.lambda_ratio = l.value("lambda_ratio", c.lambda_ratio);
      c.lambda_patience = l.value("lambda_patience", c.lambda_patience);
    }
    if (j.contains("cnnatt")) {
      const auto& n = j["cnnatt"];
      c.train.lr = n.value("lr", c.train.lr);
      c.train.batch = n.value("batch", c.train.batch);
      c.train.patience = n.value("patience", c.train.patience);
      c.train.max_epochs = n.value("max_epochs", c.train.max_epochs);
      c.train_stride = n.value("train_stride", c.train_stride);
      c.arch.conv_channels = n.value("conv_channels", c.arch.conv_channels);
      c.arch.kernel = n.value("kernel", c.arch.kernel);
      c.arch.attention_dim = n.value("attention_dim", c.arch.attention_dim);
      c.arch.hidden = n.value("hidden", c.arch.hidden);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("decode config: ") + e.what());
  }
  if (c.train_stride < 1) throw ConfigError("decode config: cnnatt.train_stride must be >= 1");
  if (!(c.window_ms > 0.0)) throw ConfigError("decode config: window_ms must be > 0");
  c.train.validate();
  return c;
}

/// Standardized train / val / test windows of one modality.
struct PreparedData {
  decode::Split split;
  std::string split_hash;
  decode::Modality modality = decode::Modality::Both;
  features::StandardizationStats stats;
  decode::WindowSet train, val, test;
  std::vector<std::string> columns;
  std::map<std::string, std::vector<Eigen::Index>> groups;
};

inline PreparedData prepare(const pipeline::SessionFrames& session, decode::Modality m, const DecodeConfig& cfg) {
  PreparedData p;
  p.modality = m;
  p.split = decode::split_trials(session, cfg.seed, cfg.val_fraction, cfg.test_fraction);
  p.split_hash = decode::split_hash(session, p.split);
  const decode::FrameBlock train_raw = decode::make_block(session, p.split.train, m);
  p.stats = features::compute_stats(train_raw.frames);
  auto block = [&](const decode::FrameBlock& b) { return std::make_shared<const decode::FrameBlock>(decode::standardized(b, p.stats)); };
  const Eigen::Index lag = features::lag_frames(cfg.window_ms, train_raw.rate_hz);
  const auto train_block = block(train_raw);
  p.train = decode::WindowSet(train_block, lag);
  p.val = decode::WindowSet(block(decode::make_block(session, p.split.val, m)), lag);
  p.test = decode::WindowSet(block(decode::make_block(session, p.split.test, m)), lag);
  p.columns = train_raw.columns;
  p.groups = train_raw.groups;
  if (p.train.size() < 2 || p.val.size() < 2 || p.test.size() < 2) throw DataError("prepare: too few windows after splitting");
  return p;
}

struct FitResult {
  decode::Decoder decoder;
  std::vector<double> lambda_grid;
  std::vector<double> lambda_val_fvaf;
  std::string warning;
};

inline FitResult fit_linear(const PreparedData& d, const DecodeConfig& cfg) {
  const decode::GramProblem g = decode::gram_problem(d.train, d.train.targets());
  const auto grid = decode::lambda_grid(decode::lambda_max(g), cfg.lambda_count, cfg.lambda_ratio);
  decode::LambdaSelection sel = decode::select_lambda(g, d.train.lag(), d.val, grid, cfg.lasso, cfg.lambda_patience);
  FitResult r;
  r.decoder.model = std::move(sel.model);
  r.lambda_grid = sel.grid;
  r.lambda_val_fvaf = sel.val_fvaf;
  r.warning = sel.message;
  return r;
}

inline FitResult fit_cnnatt(const PreparedData& d, const DecodeConfig& cfg) {
  const decode::WindowSet train = cfg.train_stride == 1 ? d.train : decode::WindowSet(d.train.block_ptr(), d.train.lag(), cfg.train_stride);
  decode::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  FitResult r;
  decode::CnnAttModel m = decode::train_cnnatt(train, d.val, tc, cfg.arch);
  r.warning = m.message;
  r.decoder.model = std::move(m);
  return r;
}

/// Fits one model kind ("linear" or "cnnatt") and attaches the data description.
inline FitResult fit_decoder(const PreparedData& d, const std::string& kind, const DecodeConfig& cfg, const std::string& config_hash = "") {
  FitResult r;
  if (kind == "linear") r = fit_linear(d, cfg);
  else if (kind == "cnnatt") r = fit_cnnatt(d, cfg);
  else throw ConfigError("unknown model '" + kind + "' (linear|cnnatt)");
  r.decoder.modality = d.modality;
  r.decoder.columns = d.columns;
  r.decoder.groups = d.groups;
  r.decoder.stats = d.stats;
  r.decoder.config_hash = config_hash;
  r.decoder.seed = cfg.seed;
  return r;
}

/// Held-out scores of one decoder.
struct Scores {
  Eigen::Vector2d fvaf = Eigen::Vector2d::Zero();  ///< own hand, [left, right]
  Eigen::Matrix2d specificity = Eigen::Matrix2d::Zero();
  double val_fvaf = 0.0;  ///< mean over hands
};

inline Scores score(const decode::Decoder& dec, const PreparedData& d) {
  Scores s;
  const Eigen::MatrixXd y = d.test.targets();
  const Eigen::MatrixXd yhat = dec.predict(d.test);
  s.fvaf = fvaf_hands(y, yhat);
  s.specificity = specificity_matrix(yhat.col(0), yhat.col(1), y.col(0), y.col(1));
  s.val_fvaf = decode::mean_val_fvaf(d.val.targets(), dec.predict(d.val));
  return s;
}

}  // namespace bimodec::eval
