#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <tuple>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimodec/core/parallel.hpp"
#include "bimodec/core/recording.hpp"
#include "bimodec/core/session.hpp"
#include "bimodec/core/time_series.hpp"
#include "bimodec/io/files.hpp"

/// Dataset directory: manifest.json plus one BTS1 file per signal (EEG, EOG
/// and commanded target per trial, the slow modalities and force whole).
///
/// BTS1 layout: "BTS1" | u32 version | u32 kind length | kind | f64 rate_hz |
/// f64 t0_s | u32 channels | u64 samples | f32 samples, one channel after the
/// other, little-endian. Labels and crc32 of every file live in the manifest.
namespace bimodec::io {

inline constexpr std::uint32_t kSeriesVersion = 1;
inline constexpr const char* kDatasetFormat = "bimodec-dataset";
inline constexpr double kTargetRateHz = 100.0;

inline std::string encode_series(const TimeSeries& ts) {
  ByteWriter w;
  w.str("BTS1");
  w.u32(kSeriesVersion);
  const std::string kind(to_string(ts.kind()));
  w.u32(static_cast<std::uint32_t>(kind.size()));
  w.str(kind);
  w.f64(ts.rate_hz());
  w.f64(ts.t0_s());
  w.u32(static_cast<std::uint32_t>(ts.channels()));
  w.u64(static_cast<std::uint64_t>(ts.samples()));
  w.data().reserve(w.data().size() + static_cast<std::size_t>(ts.data().size()) * 4);
  for (Eigen::Index c = 0; c < ts.channels(); ++c) {
    for (Eigen::Index i = 0; i < ts.samples(); ++i) w.f32(static_cast<float>(ts.data()(c, i)));
  }
  return w.data();
}

inline TimeSeries decode_series(std::string_view bytes, std::vector<std::string> labels, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.take(4) != "BTS1") throw DataError(what + ": bad magic (expected BTS1)");
  const std::uint32_t version = r.u32();
  if (version != kSeriesVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  const std::uint32_t kind_len = r.u32();
  const SignalKind kind = signal_kind_from_string(r.take(kind_len));
  const double rate = r.f64();
  const double t0 = r.f64();
  const std::uint32_t channels = r.u32();
  const std::uint64_t samples = r.u64();
  if (samples > r.remaining() || channels * samples * 4 != r.remaining()) throw DataError(what + ": sample block size does not match the header");
  SignalMatrix data(channels, static_cast<Eigen::Index>(samples));
  for (Eigen::Index c = 0; c < data.rows(); ++c) {
    for (Eigen::Index i = 0; i < data.cols(); ++i) data(c, i) = r.f32();
  }
  try {
    return TimeSeries(std::move(data), rate, t0, std::move(labels), kind);
  } catch (const DataError& e) {
    throw DataError(what + ": " + e.what());
  }
}

/// One manifest file entry.
struct FileEntry {
  std::string path;  ///< relative to the dataset directory
  std::string kind;
  double rate_hz = 0.0;
  double t0_s = 0.0;
  std::uint32_t channels = 0;
  std::uint64_t samples = 0;
  std::vector<std::string> labels;
  std::uint32_t crc32 = 0;
  std::uint64_t bytes = 0;
};

inline void to_json(nlohmann::json& j, const FileEntry& f) {
  j = {{"path", f.path}, {"kind", f.kind}, {"rate_hz", f.rate_hz}, {"t0_s", f.t0_s}, {"channels", f.channels},
       {"samples", f.samples}, {"labels", f.labels}, {"crc32", f.crc32}, {"bytes", f.bytes}};
}

inline void from_json(const nlohmann::json& j, FileEntry& f) {
  f.path = j.at("path").get<std::string>();
  f.kind = j.at("kind").get<std::string>();
  f.rate_hz = j.at("rate_hz").get<double>();
  f.t0_s = j.at("t0_s").get<double>();
  f.channels = j.at("channels").get<std::uint32_t>();
  f.samples = j.at("samples").get<std::uint64_t>();
  f.labels = j.at("labels").get<std::vector<std::string>>();
  f.crc32 = j.at("crc32").get<std::uint32_t>();
  f.bytes = j.at("bytes").get<std::uint64_t>();
}

namespace detail {

inline std::string trial_path(const char* dir, std::size_t trial) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s/trial_%03zu.bts", dir, trial);
  return buf;
}

inline FileEntry entry_for(const std::string& path, const TimeSeries& ts, const std::string& bytes) {
  return {path, std::string(to_string(ts.kind())), ts.rate_hz(), ts.t0_s(), static_cast<std::uint32_t>(ts.channels()),
          static_cast<std::uint64_t>(ts.samples()), ts.labels(), crc32_of(bytes), bytes.size()};
}

/// Removes what a failed write left behind.
class Cleanup {
 public:
  explicit Cleanup(fs::path dir) : dir_(std::move(dir)) {}
  ~Cleanup() {
    if (done_) return;
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(dir_ / p, ec);
    for (const char* d : {"eeg", "eog", "target"}) fs::remove(dir_ / d, ec);  // only if now empty
  }
  void add(const std::string& p) { paths_.push_back(p); }
  void commit() { done_ = true; }

 private:
  fs::path dir_;
  std::vector<std::string> paths_;
  bool done_ = false;
};

}  // namespace detail

/// Writes a whole recording. Extra JSON (generator settings, effective config)
/// is stored under "generator" in the manifest. The manifest is written last,
/// so a failed write never leaves a readable dataset.
inline void write_dataset(const fs::path& dir, const Recording& rec, const nlohmann::json& generator = nlohmann::json::object(),
                          unsigned threads = 1) {
  ensure_writable_dir(dir);
  for (const char* d : {"eeg", "eog", "target"}) ensure_writable_dir(dir / d);
  detail::Cleanup cleanup(dir);
  std::map<std::string, FileEntry> files;

  auto put = [&](const std::string& key, const std::string& path, const TimeSeries& ts) {
    const std::string bytes = encode_series(ts);
    cleanup.add(path);
    write_file_atomic(dir / path, bytes);
    files[key] = detail::entry_for(path, ts, bytes);
  };
  put("fnirs", "fnirs.bts", rec.fnirs);
  put("skin", "skin.bts", rec.skin);
  put("force", "force.bts", rec.force);

  const auto& m = rec.manifest;
  const std::size_t n = m.trials.size();
  std::vector<FileEntry> eeg(n), eog(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    cleanup.add(detail::trial_path("eeg", i));
    cleanup.add(detail::trial_path("eog", i));
    cleanup.add(detail::trial_path("target", i));
  }
  parallel_for(n, threads, [&](std::size_t i) {
    const EegSegment seg = rec.eeg_segment(i);
    for (auto [ts, dirname, slot] : {std::tuple{&seg.eeg, "eeg", &eeg[i]}, std::tuple{&seg.eog, "eog", &eog[i]}}) {
      const std::string path = detail::trial_path(dirname, i);
      const std::string bytes = encode_series(*ts);
      write_file_atomic(dir / path, bytes);
      *slot = detail::entry_for(path, *ts, bytes);
    }
    // commanded profile over the same span as the EEG segment
    const double t0 = seg.eeg.t0_s();
    const auto samples = static_cast<Eigen::Index>(std::llround(seg.eeg.duration_s() * kTargetRateHz));
    SignalMatrix tgt = rec.target ? rec.target(i, kTargetRateHz, t0, samples) : SignalMatrix::Zero(2, samples);
    const TimeSeries t(std::move(tgt), kTargetRateHz, t0, {"left", "right"}, SignalKind::Force);
    const std::string path = detail::trial_path("target", i);
    const std::string bytes = encode_series(t);
    write_file_atomic(dir / path, bytes);
    target[i] = detail::entry_for(path, t, bytes);
  });
  for (std::size_t i = 0; i < n; ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "%03zu", i);
    files[std::string("eeg/") + key] = eeg[i];
    files[std::string("eog/") + key] = eog[i];
    files[std::string("target/") + key] = target[i];
  }

  nlohmann::json manifest = {{"format", kDatasetFormat}, {"version", 1}, {"session", m}, {"files", files}, {"generator", generator}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  cleanup.commit();
}

struct Dataset {
  fs::path dir;
  nlohmann::json manifest;
  Recording recording;
  std::string hash;  ///< FNV-1a of manifest.json, which holds every file checksum
};

inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Verifies checksum and header against the manifest entry.
inline TimeSeries load_series(const fs::path& dir, const FileEntry& e) {
  const fs::path path = dir / e.path;
  const std::string bytes = read_file(path);
  if (bytes.size() != e.bytes || crc32_of(bytes) != e.crc32) throw DataError(path.string() + ": checksum mismatch with manifest");
  TimeSeries ts = decode_series(bytes, e.labels, path.string());
  if (std::string(to_string(ts.kind())) != e.kind || static_cast<std::uint32_t>(ts.channels()) != e.channels ||
      static_cast<std::uint64_t>(ts.samples()) != e.samples) {
    throw DataError(path.string() + ": header does not match manifest");
  }
  return ts;
}

/// Reads the manifest and the slow signals; EEG, EOG and targets load per
/// trial on demand.
inline Dataset read_dataset(const fs::path& dir) {
  Dataset d;
  d.dir = dir;
  const std::string text = read_file(dir / "manifest.json");
  d.hash = fnv1a_hex(text);
  std::map<std::string, FileEntry> files;
  try {
    d.manifest = nlohmann::json::parse(text);
    if (d.manifest.value("format", "") != kDatasetFormat) throw DataError((dir / "manifest.json").string() + ": not a bimodec dataset");
    d.recording.manifest = d.manifest.at("session").get<SessionManifest>();
    files = d.manifest.at("files").get<std::map<std::string, FileEntry>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  d.recording.manifest.validate();
  auto entry = [&](const std::string& key) {
    const auto it = files.find(key);
    if (it == files.end()) throw DataError((dir / "manifest.json").string() + ": no file entry '" + key + "'");
    return it->second;
  };
  d.recording.fnirs = load_series(dir, entry("fnirs"));
  d.recording.skin = load_series(dir, entry("skin"));
  d.recording.force = load_series(dir, entry("force"));

  const std::size_t n = d.recording.manifest.trials.size();
  auto eeg = std::make_shared<std::vector<FileEntry>>(), eog = std::make_shared<std::vector<FileEntry>>(), tgt = std::make_shared<std::vector<FileEntry>>();
  for (std::size_t i = 0; i < n; ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "%03zu", i);
    eeg->push_back(entry(std::string("eeg/") + key));
    eog->push_back(entry(std::string("eog/") + key));
    tgt->push_back(entry(std::string("target/") + key));
  }
  d.recording.eeg_segment = [dir, eeg, eog](std::size_t trial) {
    if (trial >= eeg->size()) throw DataError("dataset: no EEG for trial " + std::to_string(trial));
    return EegSegment{load_series(dir, (*eeg)[trial]), load_series(dir, (*eog)[trial])};
  };
  d.recording.target = [dir, tgt](std::size_t trial, double rate_hz, double t0_s, Eigen::Index samples) {
    if (trial >= tgt->size()) throw DataError("dataset: no target for trial " + std::to_string(trial));
    const TimeSeries t = load_series(dir, (*tgt)[trial]);
    SignalMatrix out = SignalMatrix::Zero(2, samples);
    for (Eigen::Index i = 0; i < samples; ++i) {
      const double u = (t0_s + static_cast<double>(i) / rate_hz - t.t0_s()) * t.rate_hz();
      if (u < 0.0 || u > static_cast<double>(t.samples() - 1)) continue;
      const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), t.samples() - 2);
      const double f = u - static_cast<double>(k);
      out.col(i) = (1.0 - f) * t.data().col(k) + f * t.data().col(k + 1);
    }
    return out;
  };
  return d;
}

}  // namespace bimodec::io
