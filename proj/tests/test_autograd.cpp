#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace bimodec;
namespace ag = bimodec::decode::ag;
using testing_support::gaussian;

TEST(Autograd, PrimitivesPassGradientCheck) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    for (const auto& c : testing_support::primitive_cases(rng)) {
      const auto r = testing_support::grad_check(c.inputs, c.steps, c.build);
      EXPECT_LE(r.max_rel_err, 1e-4) << c.name << " " << r.worst;
    }
  }
}

TEST(Autograd, ComposedNetworkPassesGradientCheck) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 10; ++k) {
    const auto c = testing_support::cnnatt_case(rng);
    const auto r = testing_support::grad_check(c.inputs, c.steps, c.build);
    EXPECT_LE(r.max_rel_err, 1e-4) << r.worst;
  }
}

TEST(Autograd, GraphMatchesTapeFreeForward) {
  std::mt19937_64 rng(13);
  decode::CnnAttArchitecture arch;
  arch.lag = 6;
  arch.features = 5;
  arch.conv_channels = 4;
  arch.attention_dim = 3;
  arch.hidden = 3;
  const auto m = decode::init_cnnatt(arch, 7);
  const ag::Matrix x = gaussian(3 * arch.lag, arch.features, rng);
  ag::Tape t;
  const auto g = decode::build_cnnatt_graph(t, arch, m.params, x, false);
  EXPECT_LT((t.value(g.out) - decode::cnnatt_forward_batch(m, x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autograd, AttentionRowsAreDistributions) {
  std::mt19937_64 rng(14);
  ag::Tape t;
  const auto x = t.leaf(gaussian(2 * 5, 3, rng), false, 5);
  const auto att = ag::self_attention(t, x, t.leaf(gaussian(3, 4, rng)), t.leaf(gaussian(3, 4, rng)), t.leaf(gaussian(3, 4, rng)));
  for (Eigen::Index item = 0; item < 2; ++item) {
    const auto& a = ag::attention_weights(t, att, item);
    EXPECT_TRUE((a.array() >= 0.0).all());
    EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(Autograd, GradientsAccumulateOverReuse) {
  ag::Tape t;
  const auto x = t.leaf(ag::Matrix::Constant(1, 1, 2.0), true);
  const auto y = ag::add(t, x, x);
  const auto l = ag::weighted_sum(t, y, ag::Matrix::Constant(1, 1, 3.0));
  t.backward(l);
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 6.0);
}

TEST(Autograd, RejectsBadShapes) {
  ag::Tape t;
  const auto a = t.leaf(ag::Matrix::Zero(2, 3));
  const auto b = t.leaf(ag::Matrix::Zero(3, 2));
  EXPECT_THROW(ag::add(t, a, b), ShapeError);
  EXPECT_THROW(ag::mse_loss(t, a, ag::Matrix::Zero(3, 3)), ShapeError);
  EXPECT_THROW(t.backward(a), ShapeError);
  EXPECT_THROW(t.leaf(ag::Matrix::Constant(1, 1, NAN)), NumericError);
}
