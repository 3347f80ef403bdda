#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/bimodec.hpp"

namespace testing_support {

using namespace bimodec;

/// Block of equal-length trials cut from row-stacked frames and targets.
inline std::shared_ptr<const decode::FrameBlock> block_of(const Eigen::MatrixXd& frames, const Eigen::MatrixXd& targets, Eigen::Index trial_rows,
                                                         std::size_t first_trial = 0) {
  auto b = std::make_shared<decode::FrameBlock>();
  b->frames = frames;
  b->targets = targets;
  for (Eigen::Index r = 0, t = 0; r < frames.rows(); r += trial_rows, ++t) {
    b->spans.push_back({first_trial + static_cast<std::size_t>(t), 1, r, std::min(trial_rows, frames.rows() - r)});
  }
  for (Eigen::Index c = 0; c < frames.cols(); ++c) b->columns.push_back("c" + std::to_string(c));
  return b;
}

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// y_t = sum_l W_l x_{t-K+1+l} + b + noise inside each trial; rows before the
/// first full window get the same formula on zero-padded history, they are
/// never scored.
struct PlantedLinear {
  Eigen::MatrixXd frames, targets, weights;  // weights 2 x K*F
  Eigen::Vector2d bias;
};

inline PlantedLinear planted_linear(Eigen::Index trials, Eigen::Index rows, Eigen::Index features, Eigen::Index lag, double noise_sd,
                                    std::mt19937_64& rng, int nonzeros = -1) {
  PlantedLinear p;
  p.frames = gaussian(trials * rows, features, rng);
  p.weights = Eigen::MatrixXd::Zero(2, lag * features);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  if (nonzeros < 0) {
    p.weights = gaussian(2, lag * features, rng, 1.0 / std::sqrt(static_cast<double>(lag * features)));
  } else {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(lag * features));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    for (int o = 0; o < 2; ++o) {
      std::shuffle(idx.begin(), idx.end(), rng);
      for (int k = 0; k < nonzeros; ++k) p.weights(o, idx[static_cast<std::size_t>(k)]) = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    }
  }
  p.bias = {3.0, -2.0};
  p.targets = gaussian(trials * rows, 2, rng, noise_sd);
  for (Eigen::Index t = 0; t < trials; ++t) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Vector2d y = p.bias;
      for (Eigen::Index l = 0; l < lag; ++l) {
        const Eigen::Index src = r - lag + 1 + l;
        if (src < 0) continue;
        y += p.weights.middleCols(l * features, features) * p.frames.row(t * rows + src).transpose();
      }
      p.targets.row(t * rows + r) += y.transpose();
    }
  }
  return p;
}

// ------------------------------------------------------------ gradient check

using BuildFn = std::function<decode::ag::Var(decode::ag::Tape&, const std::vector<decode::ag::Var>&)>;

struct GradCheck {
  double max_rel_err = 0.0;
  std::string worst;
};

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) per
/// input tensor, central differences with step h.
inline GradCheck grad_check(const std::vector<decode::ag::Matrix>& inputs, const std::vector<Eigen::Index>& steps, const BuildFn& build,
                            double h = 1e-6) {
  namespace ag = decode::ag;
  auto run = [&](const std::vector<ag::Matrix>& in, bool grads, std::vector<ag::Matrix>* out) {
    ag::Tape t;
    std::vector<ag::Var> vars;
    for (std::size_t i = 0; i < in.size(); ++i) vars.push_back(t.leaf(in[i], true, steps[i], "in" + std::to_string(i)));
    const ag::Var loss = build(t, vars);
    const double v = t.value(loss)(0, 0);
    if (grads) {
      t.backward(loss);
      for (const auto& x : vars) out->push_back(t.grad(x).size() ? t.grad(x) : ag::Matrix::Zero(t.value(x).rows(), t.value(x).cols()));
    }
    return v;
  };
  std::vector<ag::Matrix> analytic;
  run(inputs, true, &analytic);
  GradCheck r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ag::Matrix numeric(inputs[i].rows(), inputs[i].cols());
    auto in = inputs;
    for (Eigen::Index k = 0; k < in[i].size(); ++k) {
      const double x0 = in[i].data()[k];
      in[i].data()[k] = x0 + h;
      const double up = run(in, false, nullptr);
      in[i].data()[k] = x0 - h;
      const double down = run(in, false, nullptr);
      in[i].data()[k] = x0;
      numeric.data()[k] = (up - down) / (2.0 * h);
    }
    const double scale = std::max(analytic[i].norm(), numeric.norm());
    const double err = scale > 1e-10 ? (analytic[i] - numeric).norm() / scale : 0.0;
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst = "input " + std::to_string(i);
    }
  }
  return r;
}

struct PrimitiveCase {
  std::string name;
  std::vector<decode::ag::Matrix> inputs;
  std::vector<Eigen::Index> steps;
  BuildFn build;
};

/// One random small instance of every primitive, each probed by a random
/// weighted sum (mse for the loss itself).
inline std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng) {
  namespace ag = decode::ag;
  std::uniform_int_distribution<Eigen::Index> dim(2, 4);
  const Eigen::Index b = dim(rng), steps = dim(rng) + 1, f = dim(rng), c = dim(rng), kernel = 2;
  const Eigen::Index t_out = steps - kernel + 1;
  auto probe = [&](Eigen::Index rows, Eigen::Index cols) { return gaussian(rows, cols, rng); };
  std::vector<PrimitiveCase> cases;

  {
    const auto r = probe(b * t_out, c);
    cases.push_back({"conv1d_time",
                     {gaussian(b * steps, f, rng), gaussian(kernel * f, c, rng, 0.5), gaussian(1, c, rng)},
                     {steps, 0, 0},
                     [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::weighted_sum(t, ag::conv1d_time(t, v[0], v[1], v[2], kernel), r); }});
  }
  {
    // keep entries away from the kink at 0
    ag::Matrix x = gaussian(b * steps, c, rng);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += x.data()[i] >= 0 ? 0.05 : -0.05;
    const auto r = probe(b * steps, c);
    cases.push_back({"elu", {x}, {steps}, [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::weighted_sum(t, ag::elu(t, v[0]), r); }});
  }
  {
    const auto r = probe(b * steps, c);
    cases.push_back({"layer_norm",
                     {gaussian(b * steps, c, rng, 2.0), gaussian(1, c, rng), gaussian(1, c, rng)},
                     {steps, 0, 0},
                     [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::weighted_sum(t, ag::layer_norm(t, v[0], v[1], v[2]), r); }});
  }
  {
    const auto r = probe(b, f);
    cases.push_back({"linear",
                     {gaussian(b, c, rng), gaussian(c, f, rng), gaussian(1, f, rng)},
                     {0, 0, 0},
                     [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::weighted_sum(t, ag::linear(t, v[0], v[1], v[2]), r); }});
  }
  {
    const Eigen::Index d = dim(rng);
    const auto r = probe(b * steps, d);
    cases.push_back({"self_attention",
                     {gaussian(b * steps, c, rng), gaussian(c, d, rng, 0.7), gaussian(c, d, rng, 0.7), gaussian(c, d, rng, 0.7)},
                     {steps, 0, 0, 0},
                     [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::weighted_sum(t, ag::self_attention(t, v[0], v[1], v[2], v[3]), r); }});
  }
  {
    const auto r = probe(b * steps, c);
    cases.push_back({"add",
                     {gaussian(b * steps, c, rng), gaussian(b * steps, c, rng)},
                     {steps, steps},
                     [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::weighted_sum(t, ag::add(t, v[0], v[1]), r); }});
  }
  {
    const auto r = probe(b, c);
    cases.push_back({"mean_pool_time", {gaussian(b * steps, c, rng)}, {steps}, [=](ag::Tape& t, const std::vector<ag::Var>& v) {
                       return ag::weighted_sum(t, ag::mean_pool_time(t, v[0]), r);
                     }});
  }
  {
    const auto target = gaussian(b, 2, rng);
    cases.push_back({"mse_loss", {gaussian(b, 2, rng)}, {0}, [=](ag::Tape& t, const std::vector<ag::Var>& v) { return ag::mse_loss(t, v[0], target); }});
  }
  return cases;
}

/// The full network on a random small architecture and batch, mse loss,
/// gradients w.r.t. every parameter tensor and the input.
inline PrimitiveCase cnnatt_case(std::mt19937_64& rng) {
  namespace ag = decode::ag;
  std::uniform_int_distribution<Eigen::Index> dim(2, 4);
  decode::CnnAttArchitecture arch;
  arch.lag = dim(rng) + 2;
  arch.features = dim(rng);
  // two channels make layer_norm output +-gain whatever the input, and the
  // vanishing upstream gradients fall below finite-difference resolution
  arch.conv_channels = std::uniform_int_distribution<Eigen::Index>(3, 4)(rng);
  arch.kernel = 2;
  arch.attention_dim = dim(rng);
  arch.hidden = dim(rng);
  const Eigen::Index b = dim(rng);
  const decode::CnnAttModel m = decode::init_cnnatt(arch, rng());
  PrimitiveCase c;
  c.name = "cnnatt";
  c.inputs = m.params;
  // non-trivial norm affine and biases
  for (std::size_t i : {std::size_t{decode::kConvB}, std::size_t{decode::kNormBias}, std::size_t{decode::kFc1B}, std::size_t{decode::kFc2B}}) {
    c.inputs[i] = gaussian(c.inputs[i].rows(), c.inputs[i].cols(), rng, 0.3);
  }
  c.inputs[decode::kNormGain].array() += gaussian(1, arch.conv_channels, rng, 0.3).array();
  c.inputs.push_back(gaussian(b * arch.lag, arch.features, rng));
  c.steps.assign(c.inputs.size(), 0);
  c.steps.back() = arch.lag;
  const ag::Matrix target = gaussian(b, 2, rng);
  c.build = [arch, target](ag::Tape& t, const std::vector<ag::Var>& v) {
    namespace a = decode::ag;
    a::Var h = a::conv1d_time(t, v.back(), v[decode::kConvW], v[decode::kConvB], arch.kernel);
    h = a::elu(t, h);
    h = a::layer_norm(t, h, v[decode::kNormGain], v[decode::kNormBias], arch.ln_eps);
    h = a::self_attention(t, h, v[decode::kWq], v[decode::kWk], v[decode::kWv]);
    h = a::mean_pool_time(t, h);
    h = a::elu(t, a::linear(t, h, v[decode::kFc1W], v[decode::kFc1B]));
    return a::mse_loss(t, a::linear(t, h, v[decode::kFc2W], v[decode::kFc2B]), target);
  };
  return c;
}

}  // namespace testing_support
