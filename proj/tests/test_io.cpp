#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace bimodec;
using testing_support::block_of;
using testing_support::gaussian;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bimodec_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

decode::Decoder trained(const std::string& kind) {
  std::mt19937_64 rng(41);
  const auto p = testing_support::planted_linear(8, 30, 3, 3, 0.1, rng);
  const decode::WindowSet tr(block_of(p.frames.topRows(180), p.targets.topRows(180), 30), 3);
  const decode::WindowSet va(block_of(p.frames.bottomRows(60), p.targets.bottomRows(60), 30, 6), 3);
  decode::Decoder d;
  if (kind == "linear") {
    d.model = decode::select_lambda(tr, va, {1.0, 0.1, 0.01}).model;
  } else {
    decode::TrainConfig tc;
    tc.max_epochs = 2;
    decode::CnnAttArchitecture a;
    a.conv_channels = a.attention_dim = a.hidden = 4;
    d.model = decode::train_cnnatt(tr, va, tc, a);
  }
  d.modality = decode::Modality::Fnirs;
  d.columns = {"a", "b", "c"};
  d.groups = {{"fnirs", {0, 1, 2}}, {"fnirs:760", {0}}};
  d.stats.mean = Eigen::Vector3d(0.1, 0.2, 0.3);
  d.stats.std = Eigen::Vector3d(1.0, 2.0, 3.0);
  d.stats.constant = {false, false, true};
  d.config_hash = "0123456789abcdef";
  d.seed = 42;
  return d;
}

synth::ProtocolConfig tiny_protocol() {
  synth::ProtocolConfig p;
  p.trials_per_condition = 1;
  p.lead_in_s = 5.0;
  p.rest_min_s = p.rest_max_s = 16.0;
  return p;
}

}  // namespace

TEST(Checkpoint, RoundTripKeepsPredictionsBitExact) {
  std::mt19937_64 rng(42);
  const auto b = block_of(gaussian(60, 3, rng), gaussian(60, 2, rng), 30);
  for (const std::string kind : {"linear", "cnnatt"}) {
    const auto d = trained(kind);
    const auto back = io::decode_checkpoint(io::encode_checkpoint(d));
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(back.modality, d.modality);
    EXPECT_EQ(back.columns, d.columns);
    EXPECT_EQ(back.groups, d.groups);
    EXPECT_EQ(back.stats.mean, d.stats.mean);
    EXPECT_EQ(back.stats.std, d.stats.std);
    EXPECT_EQ(back.stats.constant, d.stats.constant);
    EXPECT_EQ(back.config_hash, d.config_hash);
    EXPECT_EQ(back.seed, d.seed);
    const decode::WindowSet w(b, d.lag());
    EXPECT_EQ(back.predict(w), d.predict(w)) << kind;
    EXPECT_EQ(io::encode_checkpoint(back), io::encode_checkpoint(d));
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  const std::string bytes = io::encode_checkpoint(trained("cnnatt"));
  for (std::size_t at : {std::size_t{2}, std::size_t{20}, bytes.size() / 2, bytes.size() - 2}) {
    std::string bad = bytes;
    bad[at] = static_cast<char>(bad[at] ^ 0x5a);
    EXPECT_THROW(io::decode_checkpoint(bad), DataError) << at;
  }
  EXPECT_THROW(io::decode_checkpoint(bytes.substr(0, bytes.size() - 9)), DataError);
  EXPECT_THROW(io::decode_checkpoint("BMD1"), DataError);
}

TEST(Checkpoint, FileRoundTrip) {
  const fs::path dir = scratch("ckpt");
  fs::create_directories(dir);
  const auto d = trained("linear");
  io::save_checkpoint(dir / "m.bmd", d);
  EXPECT_EQ(io::encode_checkpoint(io::load_checkpoint(dir / "m.bmd")), io::encode_checkpoint(d));
  EXPECT_THROW(io::load_checkpoint(dir / "missing.bmd"), io::IoError);
  fs::remove_all(dir);
}

TEST(SeriesFile, RoundTripAtFloatPrecision) {
  std::mt19937_64 rng(43);
  SignalMatrix x = gaussian(3, 17, rng);
  const TimeSeries ts(x, 12.5, 4.08, {"a", "b", "c"}, SignalKind::FnirsIntensity);
  const auto back = io::decode_series(io::encode_series(ts), ts.labels(), "test");
  EXPECT_EQ(back.kind(), ts.kind());
  EXPECT_EQ(back.rate_hz(), ts.rate_hz());
  EXPECT_EQ(back.t0_s(), ts.t0_s());
  EXPECT_EQ(back.labels(), ts.labels());
  for (Eigen::Index i = 0; i < x.size(); ++i) EXPECT_EQ(back.data().data()[i], static_cast<double>(static_cast<float>(x.data()[i])));
}

TEST(SeriesFile, RejectsMalformedInput) {
  std::mt19937_64 rng(44);
  const TimeSeries ts(gaussian(2, 5, rng), 10.0, 0.0, {"a", "b"}, SignalKind::Force);
  const std::string bytes = io::encode_series(ts);
  EXPECT_THROW(io::decode_series("XXXX" + bytes.substr(4), ts.labels(), "t"), DataError);
  EXPECT_THROW(io::decode_series(bytes.substr(0, bytes.size() - 4), ts.labels(), "t"), DataError);
  EXPECT_THROW(io::decode_series(bytes, {"a"}, "t"), DataError);
}

TEST(Dataset, RoundTripMatchesGenerator) {
  const fs::path dir = scratch("dataset");
  const auto m = synth::gen_protocol(7, tiny_protocol());
  const auto rec = synth::gen_recording(m, synth::ForwardModelParams{}, 7);
  io::write_dataset(dir, rec, {{"seed", 7}}, 2);
  const auto ds = io::read_dataset(dir);
  EXPECT_EQ(ds.recording.manifest.trials.size(), m.trials.size());
  auto same = [](const TimeSeries& a, const TimeSeries& b) {
    ASSERT_EQ(a.channels(), b.channels());
    ASSERT_EQ(a.samples(), b.samples());
    EXPECT_EQ(a.rate_hz(), b.rate_hz());
    EXPECT_EQ(a.labels(), b.labels());
    for (Eigen::Index i = 0; i < a.data().size(); ++i) ASSERT_EQ(a.data().data()[i], static_cast<double>(static_cast<float>(b.data().data()[i])));
  };
  same(ds.recording.fnirs, rec.fnirs);
  same(ds.recording.skin, rec.skin);
  same(ds.recording.force, rec.force);
  const auto seg = ds.recording.eeg_segment(1);
  const auto ref = rec.eeg_segment(1);
  same(seg.eeg, ref.eeg);
  same(seg.eog, ref.eog);
  // the hash follows the content
  EXPECT_EQ(io::read_dataset(dir).hash, ds.hash);
  fs::remove_all(dir);
}

TEST(Dataset, ChecksumCorruptionIsReported) {
  const fs::path dir = scratch("corrupt");
  const auto m = synth::gen_protocol(8, tiny_protocol());
  io::write_dataset(dir, synth::gen_recording(m, synth::ForwardModelParams{}, 8));
  {
    std::fstream f(dir / "fnirs.bts", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  try {
    io::read_dataset(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("fnirs"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Dataset, LazyEegCorruptionSurfacesOnAccess) {
  const fs::path dir = scratch("lazy");
  const auto m = synth::gen_protocol(9, tiny_protocol());
  io::write_dataset(dir, synth::gen_recording(m, synth::ForwardModelParams{}, 9));
  {
    std::fstream f(dir / "eeg" / "trial_002.bts", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x01');
  }
  const auto ds = io::read_dataset(dir);
  EXPECT_NO_THROW(ds.recording.eeg_segment(0));
  EXPECT_THROW(ds.recording.eeg_segment(2), DataError);
  fs::remove_all(dir);
}

TEST(Dataset, UnwritableDestinationFailsCleanly) {
  const fs::path dir = scratch("blocked");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  const auto m = synth::gen_protocol(10, tiny_protocol());
  const auto rec = synth::gen_recording(m, synth::ForwardModelParams{}, 10);
  EXPECT_THROW(io::write_dataset(dir / "file" / "data", rec), io::IoError);

  if (::geteuid() != 0) {
    const fs::path ro = dir / "ro";
    fs::create_directories(ro);
    fs::permissions(ro, fs::perms::owner_read | fs::perms::owner_exec);
    EXPECT_THROW(io::write_dataset(ro, rec), io::IoError);
    fs::permissions(ro, fs::perms::owner_all);
    EXPECT_TRUE(fs::is_empty(ro));
  }
  fs::remove_all(dir);
}

TEST(Dataset, MissingManifest) {
  const fs::path dir = scratch("missing");
  fs::create_directories(dir);
  EXPECT_THROW(io::read_dataset(dir), io::IoError);
  std::ofstream(dir / "manifest.json") << "{";
  EXPECT_THROW(io::read_dataset(dir), DataError);
  fs::remove_all(dir);
}
