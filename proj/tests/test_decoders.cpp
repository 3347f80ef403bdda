#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace bimodec;
using testing_support::block_of;
using testing_support::gaussian;

namespace {

struct Planted {
  decode::WindowSet train, val;
};

Planted planted(std::uint64_t seed, Eigen::Index lag = 4, Eigen::Index f = 5) {
  std::mt19937_64 rng(seed);
  const auto p = testing_support::planted_linear(16, 40, f, lag, 0.05, rng);
  return {decode::WindowSet(block_of(p.frames.topRows(12 * 40), p.targets.topRows(12 * 40), 40), lag),
          decode::WindowSet(block_of(p.frames.bottomRows(4 * 40), p.targets.bottomRows(4 * 40), 40, 12), lag)};
}

decode::CnnAttArchitecture small_arch() {
  decode::CnnAttArchitecture a;
  a.conv_channels = 8;
  a.attention_dim = 8;
  a.hidden = 8;
  return a;
}

decode::Decoder wrap(decode::LinearModel m, Eigen::Index features) {
  decode::Decoder d;
  d.model = std::move(m);
  d.stats.mean = Eigen::VectorXd::Zero(features);
  d.stats.std = Eigen::VectorXd::Ones(features);
  d.stats.constant.assign(static_cast<std::size_t>(features), false);
  return d;
}

}  // namespace

TEST(CnnAtt, PatienceZeroStopsAtFirstNonImprovingEpoch) {
  const auto d = planted(31);
  decode::TrainConfig tc;
  tc.patience = 0;
  tc.max_epochs = 30;
  tc.lr = 3e-3;
  const auto m = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  ASSERT_FALSE(m.log.empty());
  // every epoch but the last improved on the best so far
  double best = -1e300;
  for (std::size_t e = 0; e + 1 < m.log.size(); ++e) {
    EXPECT_GT(m.log[e].val_fvaf, best) << e;
    best = std::max(best, m.log[e].val_fvaf);
  }
  if (static_cast<int>(m.log.size()) < tc.max_epochs) {
    EXPECT_LE(m.log.back().val_fvaf, best);
  }
  EXPECT_EQ(m.best_epoch, static_cast<int>(m.log.size()) - (static_cast<int>(m.log.size()) < tc.max_epochs ? 2 : 1));
}

TEST(CnnAtt, PatienceCountsEpochsSinceBest) {
  const auto d = planted(32);
  decode::TrainConfig tc;
  tc.patience = 3;
  tc.max_epochs = 40;
  const auto m = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  if (static_cast<int>(m.log.size()) < tc.max_epochs) {
    EXPECT_EQ(static_cast<int>(m.log.size()), m.best_epoch + tc.patience + 2);
  }
  EXPECT_DOUBLE_EQ(m.best_val_fvaf, m.log[static_cast<std::size_t>(m.best_epoch)].val_fvaf);
}

TEST(CnnAtt, RestoresBestEpochParameters) {
  const auto d = planted(33);
  decode::TrainConfig tc;
  tc.max_epochs = 8;
  const auto m = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  EXPECT_NEAR(decode::validation_fvaf(m, d.val), m.best_val_fvaf, 1e-9);
}

TEST(CnnAtt, TrainingIsDeterministic) {
  const auto d = planted(34);
  decode::TrainConfig tc;
  tc.max_epochs = 3;
  const auto a = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  const auto b = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  EXPECT_EQ(decode::parameter_checksum(a.params), decode::parameter_checksum(b.params));
  tc.seed = 99;
  const auto c = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  EXPECT_NE(decode::parameter_checksum(a.params), decode::parameter_checksum(c.params));
}

TEST(CnnAtt, LearnsPlantedMapping) {
  const auto d = planted(35);
  decode::TrainConfig tc;
  tc.max_epochs = 60;
  tc.lr = 3e-3;
  const auto m = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  EXPECT_FALSE(m.diverged);
  EXPECT_GT(m.best_val_fvaf, 50.0);
}

TEST(CnnAtt, DivergenceKeepsLastFiniteParameters) {
  const auto d = planted(36);
  decode::TrainConfig tc;
  tc.max_epochs = 5;
  tc.lr = 1e200;
  const auto m = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  EXPECT_TRUE(m.diverged);
  EXPECT_FALSE(m.message.empty());
  for (const auto& p : m.params) EXPECT_TRUE(p.allFinite());
}

TEST(Decoder, StreamingIsCausal) {
  std::mt19937_64 rng(37);
  const Eigen::Index lag = 5, f = 3;
  decode::LinearModel lm;
  lm.lag = lag;
  lm.features = f;
  lm.weights = gaussian(2, lag * f, rng);
  const auto dec = wrap(lm, f);

  features::FeatureStream s;
  s.frames = gaussian(40, f, rng);
  s.stats = dec.stats;
  const auto base = decode::predict_stream(dec, s);
  ASSERT_EQ(base.samples(), 40 - lag + 1);
  for (Eigen::Index j : {lag - 1, Eigen::Index{20}, Eigen::Index{39}}) {
    auto changed = s;
    changed.frames.row(j).array() += 10.0;
    const auto out = decode::predict_stream(dec, changed);
    for (Eigen::Index t = 0; t < out.samples(); ++t) {
      const bool sees = t + lag - 1 >= j && t <= j;
      if (t + lag - 1 < j) {
        EXPECT_EQ(out.data().col(t), base.data().col(t)) << "window " << t << " changed by frame " << j;
      }
      if (sees) {
        EXPECT_NE(out.data().col(t), base.data().col(t));
      }
    }
  }
}

TEST(Decoder, StreamingMatchesBatchPrediction) {
  std::mt19937_64 rng(38);
  const auto d = planted(38, 4, 3);
  decode::TrainConfig tc;
  tc.max_epochs = 2;
  decode::Decoder dec;
  dec.model = decode::train_cnnatt(d.train, d.val, tc, small_arch());
  dec.stats.mean = Eigen::VectorXd::Zero(3);
  dec.stats.std = Eigen::VectorXd::Ones(3);
  features::FeatureStream s;
  const auto& span = d.val.block().spans.front();
  s.frames = d.val.block().frames.middleRows(span.first_row, span.rows);
  s.stats = dec.stats;
  const auto stream = decode::predict_stream(dec, s);
  const Eigen::MatrixXd batch = dec.predict(d.val);
  for (Eigen::Index t = 0; t < stream.samples(); ++t) EXPECT_LT((stream.data().col(t) - batch.row(t).transpose()).norm(), 1e-9);
}

TEST(Decoder, StreamingRejectsForeignStandardization) {
  decode::LinearModel lm;
  lm.lag = 2;
  lm.features = 2;
  lm.weights = Eigen::MatrixXd::Ones(2, 4);
  const auto dec = wrap(lm, 2);
  features::FeatureStream s;
  s.frames = Eigen::MatrixXd::Ones(5, 2);
  EXPECT_THROW(decode::predict_stream(dec, s), DataError);
  s.stats = dec.stats;
  s.stats->mean[0] = 1.0;
  EXPECT_THROW(decode::predict_stream(dec, s), DataError);
  s.stats = dec.stats;
  s.frames = Eigen::MatrixXd::Ones(1, 2);
  EXPECT_THROW(decode::predict_stream(dec, s), DataError);
}

TEST(Windows, NeverStraddleTrials) {
  std::mt19937_64 rng(39);
  const auto b = block_of(gaussian(25, 2, rng), gaussian(25, 2, rng), 7);
  for (Eigen::Index stride : {1, 3}) {
    const decode::WindowSet w(b, 3, stride);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const Eigen::Index end = w.ends()[static_cast<std::size_t>(i)];
      bool inside = false;
      for (const auto& s : b->spans) inside = inside || (end - 2 >= s.first_row && end < s.first_row + s.rows);
      EXPECT_TRUE(inside) << end;
    }
  }
  // 3 full trials of 7 give 5 windows each, the last trial of 4 gives 2
  EXPECT_EQ(decode::WindowSet(b, 3).size(), 17);
}
