#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bimodec/core/error.hpp"
#include "bimodec/core/random.hpp"
#include "bimodec/decode/autograd.hpp"
#include "bimodec/decode/windows.hpp"
#include "bimodec/eval/metrics.hpp"

namespace bimodec::decode {

/// Layer sizes of the conv + attention decoder. The network maps a K x F
/// window to 2 outputs in standardized target units; out_scale/out_offset
/// map those back to %MVC.
struct CnnAttArchitecture {
  Eigen::Index lag = 11;
  Eigen::Index features = 0;
  Eigen::Index conv_channels = 64;
  Eigen::Index kernel = 3;
  Eigen::Index attention_dim = 64;
  Eigen::Index hidden = 32;
  double ln_eps = 1e-5;
  std::array<double, 2> out_scale{1.0, 1.0};
  std::array<double, 2> out_offset{0.0, 0.0};

  void validate() const {
    if (lag < 1 || features < 1 || conv_channels < 1 || attention_dim < 1 || hidden < 1) {
      throw ConfigError("cnnatt: every layer size must be >= 1");
    }
    if (kernel < 1 || kernel > lag) throw ConfigError("cnnatt: kernel must lie in [1, lag]");
    if (!(ln_eps > 0.0)) throw ConfigError("cnnatt: ln_eps must be > 0");
  }

  /// (name, rows, cols) of every parameter tensor, in storage order.
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> shapes() const {
    return {{"conv.w", kernel * features, conv_channels},
            {"conv.b", 1, conv_channels},
            {"norm.gain", 1, conv_channels},
            {"norm.bias", 1, conv_channels},
            {"att.wq", conv_channels, attention_dim},
            {"att.wk", conv_channels, attention_dim},
            {"att.wv", conv_channels, attention_dim},
            {"fc1.w", attention_dim, hidden},
            {"fc1.b", 1, hidden},
            {"fc2.w", hidden, 2},
            {"fc2.b", 1, 2}};
  }

  nlohmann::json layers() const {
    using nlohmann::json;
    return json::array({
        json{{"type", "conv1d_time"}, {"in", features}, {"out", conv_channels}, {"kernel", kernel}},
        json{{"type", "elu"}},
        json{{"type", "layer_norm"}, {"channels", conv_channels}, {"eps", ln_eps}},
        json{{"type", "self_attention"}, {"in", conv_channels}, {"dim", attention_dim}, {"heads", 1}},
        json{{"type", "mean_pool_time"}},
        json{{"type", "linear"}, {"in", attention_dim}, {"out", hidden}},
        json{{"type", "elu"}},
        json{{"type", "linear"}, {"in", hidden}, {"out", 2}},
    });
  }
};

inline void to_json(nlohmann::json& j, const CnnAttArchitecture& a) {
  j = {{"lag", a.lag},         {"features", a.features}, {"conv_channels", a.conv_channels},
       {"kernel", a.kernel},   {"attention_dim", a.attention_dim}, {"hidden", a.hidden},
       {"ln_eps", a.ln_eps},   {"out_scale", a.out_scale}, {"out_offset", a.out_offset},
       {"layers", a.layers()}};
}

inline void from_json(const nlohmann::json& j, CnnAttArchitecture& a) {
  a.lag = j.at("lag").get<Eigen::Index>();
  a.features = j.at("features").get<Eigen::Index>();
  a.conv_channels = j.at("conv_channels").get<Eigen::Index>();
  a.kernel = j.at("kernel").get<Eigen::Index>();
  a.attention_dim = j.at("attention_dim").get<Eigen::Index>();
  a.hidden = j.at("hidden").get<Eigen::Index>();
  a.ln_eps = j.at("ln_eps").get<double>();
  a.out_scale = j.at("out_scale").get<std::array<double, 2>>();
  a.out_offset = j.at("out_offset").get<std::array<double, 2>>();
}

enum CnnAttParam : std::size_t { kConvW, kConvB, kNormGain, kNormBias, kWq, kWk, kWv, kFc1W, kFc1B, kFc2W, kFc2B, kParamCount };

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_fvaf = 0.0;  ///< mean over hands, NaN if undefined
};

struct AdamState {
  std::vector<ag::Matrix> m, v;
  long step = 0;
};

struct CnnAttModel {
  CnnAttArchitecture arch;
  std::vector<ag::Matrix> params;
  AdamState adam;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_fvaf = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::string message;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit norm gain.
inline CnnAttModel init_cnnatt(const CnnAttArchitecture& arch, std::uint64_t seed, bool zero_final = false) {
  arch.validate();
  CnnAttModel m;
  m.arch = arch;
  std::mt19937_64 rng(derive_seed(seed, {0x494e4954ULL}));
  for (const auto& [name, rows, cols] : arch.shapes()) {
    ag::Matrix p = ag::Matrix::Zero(rows, cols);
    if (name == "norm.gain") p.setOnes();
    else if (rows > 1) {
      const double a = 1.0 / std::sqrt(static_cast<double>(rows));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) p(r, c) = u(rng);
      }
    }
    m.params.push_back(std::move(p));
  }
  if (zero_final) m.params[kFc2W].setZero();
  return m;
}

/// Differentiable graph of the network on a batch (B*K x F, item-major).
struct CnnAttGraph {
  ag::Var out;        ///< B x 2, standardized units
  ag::Var attention;  ///< self_attention node
  std::vector<ag::Var> params;
};

inline CnnAttGraph build_cnnatt_graph(ag::Tape& t, const CnnAttArchitecture& arch, const std::vector<ag::Matrix>& params,
                                      ag::Matrix x, bool requires_grad = true, bool input_grad = false) {
  if (params.size() != kParamCount) throw ShapeError("cnnatt: expected " + std::to_string(kParamCount) + " parameter tensors");
  if (x.cols() != arch.features || x.rows() % arch.lag != 0) {
    throw ShapeError("cnnatt: input " + ag::kernels::dims(x) + " is not B*K x F with K=" + std::to_string(arch.lag) +
                     ", F=" + std::to_string(arch.features));
  }
  CnnAttGraph g;
  const auto shapes = arch.shapes();
  for (std::size_t i = 0; i < params.size(); ++i) g.params.push_back(t.leaf(params[i], requires_grad, 0, std::get<0>(shapes[i])));
  const ag::Var in = t.leaf(std::move(x), input_grad, arch.lag, "input");
  ag::Var h = ag::conv1d_time(t, in, g.params[kConvW], g.params[kConvB], arch.kernel);
  h = ag::elu(t, h);
  h = ag::layer_norm(t, h, g.params[kNormGain], g.params[kNormBias], arch.ln_eps);
  g.attention = ag::self_attention(t, h, g.params[kWq], g.params[kWk], g.params[kWv]);
  h = ag::mean_pool_time(t, g.attention);
  h = ag::elu(t, ag::linear(t, h, g.params[kFc1W], g.params[kFc1B]));
  g.out = ag::linear(t, h, g.params[kFc2W], g.params[kFc2B]);
  return g;
}

/// Tape-free forward pass; returns B x 2 in %MVC.
inline ag::Matrix cnnatt_forward_batch(const CnnAttModel& m, const ag::Matrix& x) {
  const auto& a = m.arch;
  const auto& p = m.params;
  if (x.cols() != a.features || x.rows() % a.lag != 0) {
    throw ShapeError("cnnatt: input " + ag::kernels::dims(x) + " is not B*K x F with K=" + std::to_string(a.lag) +
                     ", F=" + std::to_string(a.features));
  }
  namespace k = ag::kernels;
  ag::Matrix h = (k::im2col(x, a.lag, a.kernel) * p[kConvW]).rowwise() + p[kConvB].row(0);
  h = k::elu(h);
  h = k::layer_norm(h, p[kNormGain].row(0), p[kNormBias].row(0), a.ln_eps);
  h = k::self_attention(h, a.lag - a.kernel + 1, p[kWq], p[kWk], p[kWv]);
  h = k::mean_pool(h, a.lag - a.kernel + 1);
  h = k::elu((h * p[kFc1W]).rowwise() + p[kFc1B].row(0));
  ag::Matrix y = (h * p[kFc2W]).rowwise() + p[kFc2B].row(0);
  for (Eigen::Index o = 0; o < 2; ++o) y.col(o) = y.col(o).array() * a.out_scale[static_cast<std::size_t>(o)] + a.out_offset[static_cast<std::size_t>(o)];
  return y;
}

/// One K x F window to [left, right] %MVC.
inline Eigen::Vector2d cnnatt_forward(const CnnAttModel& m, const Eigen::MatrixXd& window) {
  if (window.rows() != m.arch.lag || window.cols() != m.arch.features) {
    throw ShapeError("cnnatt predict: window is " + ag::kernels::dims(window) + ", model expects K=" + std::to_string(m.arch.lag) +
                     " x F=" + std::to_string(m.arch.features));
  }
  return cnnatt_forward_batch(m, window).row(0).transpose();
}

namespace detail {

inline ag::Matrix gather_windows(const WindowSet& w, const std::vector<Eigen::Index>& idx, std::size_t from, std::size_t count) {
  ag::Matrix x(static_cast<Eigen::Index>(count) * w.lag(), w.features());
  const auto& frames = w.block().frames;
  for (std::size_t b = 0; b < count; ++b) {
    const Eigen::Index end = w.ends()[static_cast<std::size_t>(idx[from + b])];
    x.middleRows(static_cast<Eigen::Index>(b) * w.lag(), w.lag()) = frames.middleRows(end - w.lag() + 1, w.lag());
  }
  return x;
}

inline bool all_finite(const std::vector<ag::Matrix>& ps) {
  for (const auto& p : ps) {
    if (!p.allFinite()) return false;
  }
  return true;
}

}  // namespace detail

/// N x 2 predictions (%MVC) for every window of the set, in batches.
inline Eigen::MatrixXd cnnatt_predict(const CnnAttModel& m, const WindowSet& w, std::size_t batch = 256) {
  if (w.lag() != m.arch.lag || w.features() != m.arch.features) throw ShapeError("cnnatt predict: window set does not match the model");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(w.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
  Eigen::MatrixXd out(w.size(), 2);
  for (std::size_t from = 0; from < idx.size(); from += batch) {
    const std::size_t n = std::min(batch, idx.size() - from);
    out.middleRows(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(n)) = cnnatt_forward_batch(m, detail::gather_windows(w, idx, from, n));
  }
  return out;
}

struct TrainConfig {
  double lr = 1e-3;
  int batch = 64;
  int patience = 10;
  int max_epochs = 60;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool zero_final = false;

  void validate() const {
    if (!(lr > 0.0) || batch < 1 || patience < 0 || max_epochs < 1) throw ConfigError("train: lr > 0, batch >= 1, patience >= 0, max_epochs >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) throw ConfigError("train: invalid Adam constants");
  }
};

inline void adam_step(CnnAttModel& m, const std::vector<ag::Matrix>& grads, const TrainConfig& cfg) {
  auto& s = m.adam;
  if (s.m.empty()) {
    for (const auto& p : m.params) {
      s.m.push_back(ag::Matrix::Zero(p.rows(), p.cols()));
      s.v.push_back(ag::Matrix::Zero(p.rows(), p.cols()));
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * grads[i];
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
    m.params[i].array() -= cfg.lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + cfg.eps);
  }
}

/// Mean validation FVAF over hands, NaN when undefined.
inline double validation_fvaf(const CnnAttModel& m, const WindowSet& val) {
  try {
    const Eigen::Vector2d f = eval::fvaf_hands(val.targets(), cnnatt_predict(m, val));
    return f.mean();
  } catch (const DataError&) {
    return std::numeric_limits<double>::quiet_NaN();
  } catch (const NumericError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

/// Adam on MSE with early stopping on validation FVAF. Training stops once
/// `patience` epochs have passed without improvement; the best-validation
/// parameters are returned. A non-finite loss or parameter aborts training and
/// returns the last finite checkpoint with `diverged` set.
inline CnnAttModel train_cnnatt(const WindowSet& train, const WindowSet& val, const TrainConfig& cfg, CnnAttArchitecture arch = {}) {
  cfg.validate();
  if (train.size() < 2) throw DataError("train_cnnatt: fewer than 2 training windows");
  if (val.size() < 2) throw DataError("train_cnnatt: fewer than 2 validation windows");
  if (train.lag() != val.lag() || train.features() != val.features()) throw ShapeError("train_cnnatt: train and val windows differ in shape");
  arch.lag = train.lag();
  arch.features = train.features();
  const Eigen::MatrixXd y = train.targets();
  for (Eigen::Index o = 0; o < 2; ++o) {
    const double mean = y.col(o).mean();
    const double sd = std::sqrt((y.col(o).array() - mean).square().mean());
    arch.out_offset[static_cast<std::size_t>(o)] = mean;
    arch.out_scale[static_cast<std::size_t>(o)] = sd > 0.0 ? sd : 1.0;
  }
  Eigen::MatrixXd y_std = y;
  for (Eigen::Index o = 0; o < 2; ++o) {
    y_std.col(o) = (y.col(o).array() - arch.out_offset[static_cast<std::size_t>(o)]) / arch.out_scale[static_cast<std::size_t>(o)];
  }

  CnnAttModel model = init_cnnatt(arch, cfg.seed, cfg.zero_final);
  std::vector<ag::Matrix> best = model.params;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  const auto batch = static_cast<std::size_t>(cfg.batch);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {0x45504f43ULL, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t from = 0; from < order.size(); from += batch) {
      const std::size_t n = std::min(batch, order.size() - from);
      ag::Matrix target(static_cast<Eigen::Index>(n), 2);
      for (std::size_t b = 0; b < n; ++b) target.row(static_cast<Eigen::Index>(b)) = y_std.row(order[from + b]);
      std::vector<ag::Matrix> grads;
      double loss = std::numeric_limits<double>::quiet_NaN();
      try {
        ag::Tape tape;
        const CnnAttGraph g = build_cnnatt_graph(tape, model.arch, model.params, detail::gather_windows(train, order, from, n));
        const ag::Var l = ag::mse_loss(tape, g.out, target);
        loss = tape.value(l)(0, 0);
        tape.backward(l);
        for (const auto& v : g.params) grads.push_back(tape.grad(v));
      } catch (const NumericError&) {
      }
      bool finite = std::isfinite(loss);
      for (const auto& gr : grads) finite = finite && gr.allFinite();
      std::vector<ag::Matrix> before;
      if (finite) {
        before = model.params;
        adam_step(model, grads, cfg);
        finite = detail::all_finite(model.params);
      }
      if (!finite) {
        model.diverged = true;
        model.message = "loss became non-finite in epoch " + std::to_string(epoch) + "; returning the last finite checkpoint";
        if (model.best_epoch >= 0) model.params = best;
        else if (!before.empty()) model.params = std::move(before);
        return model;
      }
      loss_sum += loss;
      ++batches;
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(batches), validation_fvaf(model, val)};
    model.log.push_back(entry);
    if (std::isfinite(entry.val_fvaf) && (model.best_epoch < 0 || entry.val_fvaf > model.best_val_fvaf)) {
      model.best_epoch = epoch;
      model.best_val_fvaf = entry.val_fvaf;
      best = model.params;
    }
    const int since = model.best_epoch < 0 ? epoch + 1 : epoch - model.best_epoch;
    if (since > cfg.patience) break;
  }
  if (model.best_epoch >= 0) model.params = std::move(best);
  return model;
}

/// Order-sensitive FNV-1a over the raw parameter bytes.
inline std::uint64_t parameter_checksum(const std::vector<ag::Matrix>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace bimodec::decode
