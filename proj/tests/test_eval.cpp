#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace bimodec;
using testing_support::block_of;
using testing_support::gaussian;

namespace {

/// Linear decoder on 4 columns in two groups; group "fnirs" carries all the signal.
struct Fixture {
  std::shared_ptr<const decode::FrameBlock> block;
  decode::Decoder dec;
};

Fixture fixture(double eeg_weight) {
  std::mt19937_64 rng(51);
  const Eigen::Index rows = 40, trials = 6;
  Eigen::MatrixXd frames = gaussian(rows * trials, 4, rng);
  // smooth columns so frame order matters
  for (Eigen::Index r = 1; r < frames.rows(); ++r) frames.row(r) = 0.9 * frames.row(r - 1) + 0.45 * frames.row(r);
  decode::LinearModel m;
  m.lag = 1;
  m.features = 4;
  m.weights = Eigen::MatrixXd::Zero(2, 4);
  m.weights(0, 0) = 1.0;
  m.weights(1, 1) = 1.0;
  m.weights(0, 2) = eeg_weight;
  m.weights(1, 3) = eeg_weight;
  Eigen::MatrixXd targets = frames * m.weights.transpose();
  targets += gaussian(targets.rows(), 2, rng, 0.05);
  Fixture f;
  f.block = block_of(frames, targets, rows);
  f.dec.model = m;
  f.dec.groups = {{"fnirs", {0, 1}}, {"eeg:beta", {2, 3}}, {"eeg", {2, 3}}};
  return f;
}

}  // namespace

TEST(Sensitivity, ReferenceRowsAreExact) {
  const auto f = fixture(0.5);
  eval::SensitivityOptions opt;
  opt.repetitions = 5;
  const auto r = eval::sensitivity_analysis(f.dec, *f.block, {}, opt);
  ASSERT_FALSE(r.degenerate);
  EXPECT_EQ(r.rows.front().group, "none");
  EXPECT_EQ(r.rows.back().group, "all");
  EXPECT_EQ(r.rows.front().percent_change, 0.0);
  EXPECT_EQ(r.rows.back().percent_change, 100.0);
  // bitwise, not within a few ulps
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    opt.seed = seed;
    EXPECT_EQ(eval::sensitivity_analysis(f.dec, *f.block, {}, opt).rows.back().percent_change, 100.0) << seed;
  }
  EXPECT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[1].group, "fnirs");
  EXPECT_EQ(r.rows[2].group, "eeg:beta");
}

TEST(Sensitivity, PlantedGroupDominates) {
  const auto f = fixture(0.0);
  eval::SensitivityOptions opt;
  opt.repetitions = 10;
  const auto r = eval::sensitivity_analysis(f.dec, *f.block, {}, opt);
  EXPECT_NEAR(r.rows[1].percent_change, 100.0, 1e-9);  // fnirs shuffled is all shuffled
  EXPECT_NEAR(r.rows[2].percent_change, 0.0, 1e-9);    // unused columns
}

TEST(Sensitivity, ShuffleKeepsEachColumnsValues) {
  const auto f = fixture(0.5);
  const auto perms = eval::detail::frame_permutations(*f.block, 1234);
  const auto s = eval::shuffle_columns(*f.block, {0, 2}, perms);
  for (const auto& span : f.block->spans) {
    for (Eigen::Index c = 0; c < 4; ++c) {
      std::vector<double> a(static_cast<std::size_t>(span.rows)), b(a.size());
      for (Eigen::Index r = 0; r < span.rows; ++r) {
        a[static_cast<std::size_t>(r)] = f.block->frames(span.first_row + r, c);
        b[static_cast<std::size_t>(r)] = s.frames(span.first_row + r, c);
      }
      if (c == 1 || c == 3) {
        EXPECT_EQ(a, b);
      }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_EQ(a, b) << "column " << c;
    }
    // shuffled columns move together
    for (Eigen::Index r = 0; r < span.rows; ++r) {
      const auto src = span.first_row + perms[&span - &f.block->spans[0]][static_cast<std::size_t>(r)];
      EXPECT_EQ(s.frames(span.first_row + r, 0), f.block->frames(src, 0));
      EXPECT_EQ(s.frames(span.first_row + r, 2), f.block->frames(src, 2));
    }
  }
  EXPECT_EQ(s.targets, f.block->targets);
}

TEST(Sensitivity, DeterministicAndThreadInvariant) {
  const auto f = fixture(0.7);
  eval::SensitivityOptions a;
  a.repetitions = 6;
  auto b = a;
  b.threads = 3;
  const auto ra = eval::sensitivity_analysis(f.dec, *f.block, {}, a);
  const auto rb = eval::sensitivity_analysis(f.dec, *f.block, {}, b);
  EXPECT_EQ(eval::to_json(ra).dump(), eval::to_json(rb).dump());
  b.seed = 7;
  EXPECT_NE(eval::to_json(ra).dump(), eval::to_json(eval::sensitivity_analysis(f.dec, *f.block, {}, b)).dump());
}

TEST(Sensitivity, DegenerateModelReportsRawDrops) {
  auto f = fixture(0.0);
  std::get<decode::LinearModel>(f.dec.model).weights.setZero();
  eval::SensitivityOptions opt;
  opt.repetitions = 2;
  const auto r = eval::sensitivity_analysis(f.dec, *f.block, {}, opt);
  EXPECT_TRUE(r.degenerate);
  for (const auto& row : r.rows) EXPECT_DOUBLE_EQ(row.percent_change, 0.0);
}

TEST(Sensitivity, UnknownGroup) {
  const auto f = fixture(0.5);
  EXPECT_THROW(eval::sensitivity_analysis(f.dec, *f.block, {"eeg:nope"}), ConfigError);
}

TEST(Sensitivity, GroupOrderFollowsBands) {
  std::map<std::string, std::vector<Eigen::Index>> g{{"eeg:beta", {0}}, {"eeg:delta", {1}}, {"fnirs", {2}}, {"eeg", {0, 1}}, {"fnirs:760", {2}}};
  EXPECT_EQ(eval::sensitivity_groups(g), (std::vector<std::string>{"fnirs", "eeg:delta", "eeg:beta"}));
  EXPECT_EQ(eval::sensitivity_groups({{"skin", {0, 1}}}), (std::vector<std::string>{"skin"}));
}

TEST(Latency, StatsByHand) {
  const auto s = eval::latency_stats({4.0, 1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(s.mean_ms, 2.5);
  EXPECT_NEAR(s.std_ms, std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_DOUBLE_EQ(s.p99_ms, 4.0);
  EXPECT_EQ(s.count, 4u);
  std::vector<double> v;
  for (int i = 1; i <= 200; ++i) v.push_back(i);
  EXPECT_DOUBLE_EQ(eval::latency_stats(v).p99_ms, 198.0);  // nearest rank ceil(0.99 * 200)
  EXPECT_EQ(eval::latency_stats({}).count, 0u);
}

TEST(Latency, BenchReportsEveryPart) {
  const auto f = fixture(0.5);
  eval::LatencyOptions opt;
  opt.warmup = 2;
  opt.repeats = 20;
  const auto r = eval::latency_bench(f.dec, *f.block, opt);
  EXPECT_EQ(r.per_window.count, 20u);
  EXPECT_GT(r.per_window.mean_ms, 0.0);
  EXPECT_EQ(r.windows_per_trial, 40u);
  EXPECT_EQ(r.per_trial.count, 4u * 3u);
  EXPECT_GE(r.per_window.p99_ms, r.per_window.mean_ms);
}

TEST(Report, CsvAndJsonRoundTrip) {
  eval::ModalityResult r;
  r.model = "linear";
  r.modality = "both";
  r.fvaf = {55.123456789012, 48.5};
  r.cross = {10.0, -3.25};
  r.val_fvaf = 50.0;
  r.split_hash = "abc";
  r.checkpoint = "model_linear_both.bmd";
  r.fit = {{"lambda", 0.1}};
  const auto back = eval::modality_result_from_json(eval::to_json(r));
  EXPECT_EQ(eval::to_json(back).dump(), eval::to_json(r).dump());
  const std::string csv = eval::results_csv({r});
  EXPECT_EQ(csv,
            "model,modality,hand,fvaf,cross_fvaf\n"
            "linear,both,left,55.12345679,10\n"
            "linear,both,right,48.5,-3.25\n");
}

TEST(Svg, DeterministicAndWellFormed) {
  eval::ModalityResult r;
  r.model = "cnnatt";
  r.modality = "eeg";
  r.fvaf = {40.0, 45.0};
  r.cross = {30.0, 35.0};
  const std::string a = io::fvaf_chart({r, r});
  EXPECT_EQ(a, io::fvaf_chart({r, r}));
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
  EXPECT_NE(a.find("</svg>"), std::string::npos);
  EXPECT_NE(a.find("eeg cnnatt"), std::string::npos);
  EXPECT_EQ(std::count(a.begin(), a.end(), '<') - std::count(a.begin(), a.end(), '>'), 0);

  const auto f = fixture(0.5);
  eval::SensitivityOptions opt;
  opt.repetitions = 3;
  const auto s = eval::sensitivity_analysis(f.dec, *f.block, {}, opt);
  EXPECT_EQ(io::sensitivity_chart(s, "t & <x>"), io::sensitivity_chart(s, "t & <x>"));
  EXPECT_NE(io::sensitivity_chart(s, "t & <x>").find("t &amp; &lt;x&gt;"), std::string::npos);
}

TEST(Config, RoundTripAndValidation) {
  app::AppConfig c;
  c.seed = 7;
  c.protocol.trials_per_condition = 5;
  c.forward_model.beta_sources = 2;
  c.decode.train.max_epochs = 9;
  c.features.log_power = true;
  const auto j = app::to_json(c);
  const auto back = app::config_from_json(j);
  EXPECT_EQ(app::to_json(back).dump(), j.dump());
  EXPECT_EQ(back.decode.seed, 7u);
  EXPECT_EQ(app::config_hash(back, "d"), app::config_hash(c, "d"));
  EXPECT_NE(app::config_hash(back, "d"), app::config_hash(back, "e"));

  // partial files keep the defaults
  const auto partial = app::config_from_json({{"forward_model", {{"erd_beta", {0.5, 0.1}}}}});
  EXPECT_EQ(partial.forward_model.beta_sources, synth::ForwardModelParams{}.beta_sources);
  EXPECT_DOUBLE_EQ(partial.forward_model.erd_beta.contra, 0.5);

  EXPECT_THROW(app::config_from_json({{"sede", 1}}), ConfigError);
  EXPECT_THROW(app::config_from_json({{"features", {{"feature_rate_hz", 0}}}}), ConfigError);
  EXPECT_THROW(app::config_from_json({{"forward_model", {{"beta_sources", 0}}}}), ConfigError);
  EXPECT_THROW(app::config_from_json({{"sensitivity", {{"repetitions", 0}}}}), ConfigError);
  EXPECT_THROW(app::config_from_json(nlohmann::json::array()), ConfigError);
}
