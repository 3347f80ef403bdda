#include <set>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace bimodec;

namespace {

const Recording& small_recording() {
  static const Recording rec = [] {
    synth::ProtocolConfig p;
    p.trials_per_condition = 3;
    p.lead_in_s = 5.0;
    return synth::gen_recording(synth::gen_protocol(3, p), synth::ForwardModelParams{}, 3);
  }();
  return rec;
}

pipeline::SessionOptions options(unsigned threads) {
  pipeline::SessionOptions o;
  o.threads = threads;
  return o;
}

}  // namespace

TEST(Protocol, BlockedDesignWithGridAlignedTimes) {
  synth::ProtocolConfig p;
  p.trials_per_condition = 3;
  const auto m = synth::gen_protocol(5, p);
  ASSERT_EQ(m.trials.size(), 12u);
  std::map<int, int> count;
  for (std::size_t i = 0; i < m.trials.size(); ++i) {
    ++count[m.trials[i].condition];
    if (i % 3 != 0) {
      EXPECT_EQ(m.trials[i].condition, m.trials[i - 1].condition);
    }
    const double k = m.trials[i].go_time_s / p.grid_s;
    EXPECT_NEAR(k, std::round(k), 1e-6);
    if (i > 0) {
      EXPECT_GT(m.trials[i].go_time_s, m.trials[i - 1].go_time_s + p.trial_s);
    }
  }
  for (int c = 1; c <= 4; ++c) EXPECT_EQ(count[c], 3);
  EXPECT_EQ(synth::gen_protocol(5, p).trials.front().go_time_s, m.trials.front().go_time_s);
}

TEST(Generator, SeedDeterminesOutput) {
  synth::ProtocolConfig p;
  p.trials_per_condition = 1;
  const auto m = synth::gen_protocol(1, p);
  const auto a = synth::gen_recording(m, synth::ForwardModelParams{}, 1);
  const auto b = synth::gen_recording(m, synth::ForwardModelParams{}, 1);
  const auto c = synth::gen_recording(m, synth::ForwardModelParams{}, 2);
  EXPECT_EQ(a.fnirs.data(), b.fnirs.data());
  EXPECT_EQ(a.eeg_segment(0).eeg.data(), b.eeg_segment(0).eeg.data());
  EXPECT_NE(a.fnirs.data(), c.fnirs.data());
}

TEST(Session, ThreadCountDoesNotChangeFrames) {
  const auto a = pipeline::process_session(small_recording(), options(1));
  const auto b = pipeline::process_session(small_recording(), options(3));
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].stream.frames, b.trials[i].stream.frames);
    EXPECT_EQ(a.trials[i].force, b.trials[i].force);
    EXPECT_EQ(a.trials[i].skin, b.trials[i].skin);
  }
  EXPECT_EQ(a.log, b.log);
}

TEST(Session, FramesAreFiniteAndGrouped) {
  const auto s = pipeline::process_session(small_recording(), options(2));
  ASSERT_FALSE(s.trials.empty());
  const auto& t = s.trials.front();
  EXPECT_TRUE(t.stream.frames.allFinite());
  EXPECT_TRUE(t.force.allFinite());
  EXPECT_EQ(t.stream.size(), t.force.rows());
  EXPECT_EQ(t.skin.rows(), t.force.rows());
  ASSERT_TRUE(t.stream.groups.count("eeg"));
  ASSERT_TRUE(t.stream.groups.count("fnirs"));
  EXPECT_EQ(t.stream.groups.at("eeg").size() + t.stream.groups.at("fnirs").size(), static_cast<std::size_t>(t.stream.width()));
  for (const auto& b : features::standard_bands()) EXPECT_TRUE(t.stream.groups.count("eeg:" + b.name)) << b.name;
  // each band group is a subset of eeg
  std::set<Eigen::Index> eeg(t.stream.groups.at("eeg").begin(), t.stream.groups.at("eeg").end());
  for (const auto& [name, cols] : t.stream.groups) {
    if (name.rfind("eeg:", 0) == 0) {
      for (auto c : cols) EXPECT_TRUE(eeg.count(c)) << name;
    }
  }
}

TEST(Session, SplitIsStratifiedAndStable) {
  const auto s = pipeline::process_session(small_recording(), options(2));
  const auto a = decode::split_trials(s, 42, 1.0 / 3.0, 1.0 / 3.0);
  const auto b = decode::split_trials(s, 42, 1.0 / 3.0, 1.0 / 3.0);
  EXPECT_EQ(decode::split_hash(s, a), decode::split_hash(s, b));
  std::set<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), a.train.size() + a.val.size() + a.test.size());
  EXPECT_EQ(all.size(), s.trials.size());
}

TEST(Protocol, RestRangeWithoutGridPointIsRejected) {
  synth::ProtocolConfig p;
  p.rest_min_s = p.rest_max_s = 15.0;  // 187.5 ticks
  EXPECT_THROW(synth::gen_protocol(1, p), ConfigError);
  p.rest_max_s = 15.04;
  EXPECT_NO_THROW(synth::gen_protocol(1, p));
}
