#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"
#include "bimodec/core/random.hpp"
#include "bimodec/features/features.hpp"
#include "bimodec/pipeline/session.hpp"

namespace bimodec::decode {

enum class Modality { Eeg, Fnirs, Both, Skin };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::Eeg: return "eeg";
    case Modality::Fnirs: return "fnirs";
    case Modality::Both: return "both";
    case Modality::Skin: return "skin";
  }
  return "?";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "eeg") return Modality::Eeg;
  if (s == "fnirs") return Modality::Fnirs;
  if (s == "both") return Modality::Both;
  if (s == "skin") return Modality::Skin;
  throw ConfigError("unknown modality '" + s + "' (eeg|fnirs|both|skin)");
}

struct TrialSpan {
  std::size_t trial = 0;  ///< session trial index
  int condition = 1;
  Eigen::Index first_row = 0;
  Eigen::Index rows = 0;
};

/// Frames of several trials stacked row-wise, with their force targets.
/// Windows never straddle two trials.
struct FrameBlock {
  Eigen::MatrixXd frames;   ///< rows x features
  Eigen::MatrixXd targets;  ///< rows x 2, %MVC
  std::vector<TrialSpan> spans;
  std::vector<std::string> columns;
  std::map<std::string, std::vector<Eigen::Index>> groups;
  double rate_hz = 12.5;

  Eigen::Index width() const { return frames.cols(); }
};

/// Column subset of the session stream for a modality; groups are re-indexed
/// and kept only if all their columns survive.
inline std::vector<Eigen::Index> modality_columns(const features::FeatureStream& s, Modality m) {
  std::vector<Eigen::Index> cols;
  auto take = [&](const char* g) {
    auto it = s.groups.find(g);
    if (it != s.groups.end()) cols.insert(cols.end(), it->second.begin(), it->second.end());
  };
  if (m == Modality::Eeg || m == Modality::Both) take("eeg");
  if (m == Modality::Fnirs || m == Modality::Both) take("fnirs");
  std::sort(cols.begin(), cols.end());
  return cols;
}

inline FrameBlock make_block(const pipeline::SessionFrames& session, const std::vector<std::size_t>& positions, Modality m) {
  if (positions.empty()) throw DataError("make_block: no trials");
  FrameBlock b;
  const auto& first = session.trials.at(positions.front());
  std::vector<Eigen::Index> cols;
  if (m == Modality::Skin) {
    b.columns = first.skin_columns;
    for (std::size_t i = 0; i < b.columns.size(); ++i) b.groups["skin"].push_back(static_cast<Eigen::Index>(i));
  } else {
    cols = modality_columns(first.stream, m);
    if (cols.empty()) throw DataError("make_block: session has no " + to_string(m) + " columns");
    std::map<Eigen::Index, Eigen::Index> remap;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      remap[cols[i]] = static_cast<Eigen::Index>(i);
      b.columns.push_back(first.stream.columns[static_cast<std::size_t>(cols[i])]);
    }
    for (const auto& [name, idx] : first.stream.groups) {
      std::vector<Eigen::Index> mapped;
      for (Eigen::Index c : idx) {
        auto it = remap.find(c);
        if (it == remap.end()) break;
        mapped.push_back(it->second);
      }
      if (mapped.size() == idx.size()) b.groups[name] = std::move(mapped);
    }
  }
  b.rate_hz = first.stream.rate_hz;
  Eigen::Index rows = 0;
  for (std::size_t p : positions) rows += session.trials.at(p).force.rows();
  b.frames.resize(rows, static_cast<Eigen::Index>(b.columns.size()));
  b.targets.resize(rows, 2);
  Eigen::Index r = 0;
  for (std::size_t p : positions) {
    const auto& t = session.trials.at(p);
    const Eigen::Index n = t.force.rows();
    if (m == Modality::Skin) {
      b.frames.middleRows(r, n) = t.skin;
    } else {
      for (std::size_t c = 0; c < cols.size(); ++c) b.frames.col(static_cast<Eigen::Index>(c)).segment(r, n) = t.stream.frames.col(cols[c]);
    }
    b.targets.middleRows(r, n) = t.force;
    b.spans.push_back({t.trial, t.condition, r, n});
    r += n;
  }
  return b;
}

inline FrameBlock standardized(const FrameBlock& b, const features::StandardizationStats& stats) {
  FrameBlock out = b;
  out.frames = features::apply_stats(b.frames, stats);
  return out;
}

/// Every causal K-frame window of a block: window i ends at row ends[i] and
/// covers rows ends[i]-K+1 .. ends[i] of the same trial.
class WindowSet {
 public:
  /// Windows whose end rows advance by `stride` inside one trial.
  struct Run {
    Eigen::Index first_window;
    Eigen::Index first_end;
    Eigen::Index count;
  };

  WindowSet() = default;
  WindowSet(std::shared_ptr<const FrameBlock> block, Eigen::Index lag, Eigen::Index stride = 1)
      : block_(std::move(block)), lag_(lag), stride_(stride) {
    if (!block_) throw DataError("WindowSet: null block");
    if (lag_ < 1 || stride_ < 1) throw ConfigError("WindowSet: lag and stride must be >= 1");
    for (const auto& s : block_->spans) {
      if (s.rows < lag_) continue;
      Run run{static_cast<Eigen::Index>(ends_.size()), s.first_row + lag_ - 1, 0};
      for (Eigen::Index e = s.first_row + lag_ - 1; e < s.first_row + s.rows; e += stride_) {
        ends_.push_back(e);
        ++run.count;
      }
      runs_.push_back(run);
    }
  }

  const FrameBlock& block() const { return *block_; }
  const std::shared_ptr<const FrameBlock>& block_ptr() const { return block_; }
  Eigen::Index lag() const { return lag_; }
  Eigen::Index stride() const { return stride_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(ends_.size()); }
  Eigen::Index features() const { return block_->frames.cols(); }
  Eigen::Index width() const { return lag_ * features(); }
  const std::vector<Eigen::Index>& ends() const { return ends_; }
  const std::vector<Run>& runs() const { return runs_; }

  /// K x F, oldest frame first.
  Eigen::MatrixXd window(Eigen::Index i) const { return block_->frames.middleRows(ends_[static_cast<std::size_t>(i)] - lag_ + 1, lag_); }
  Eigen::Vector2d target(Eigen::Index i) const { return block_->targets.row(ends_[static_cast<std::size_t>(i)]).transpose(); }

  Eigen::MatrixXd targets() const {
    Eigen::MatrixXd y(size(), 2);
    for (Eigen::Index i = 0; i < size(); ++i) y.row(i) = block_->targets.row(ends_[static_cast<std::size_t>(i)]);
    return y;
  }

  /// Flattened design, column index = lag * F + feature (lag 0 oldest). Only for small sets.
  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd x(size(), width());
    const Eigen::Index f = features();
    for (Eigen::Index i = 0; i < size(); ++i) {
      for (Eigen::Index l = 0; l < lag_; ++l) x.row(i).segment(l * f, f) = block_->frames.row(ends_[static_cast<std::size_t>(i)] - lag_ + 1 + l);
    }
    return x;
  }

 private:
  std::shared_ptr<const FrameBlock> block_;
  Eigen::Index lag_ = 1;
  Eigen::Index stride_ = 1;
  std::vector<Eigen::Index> ends_;
  std::vector<Run> runs_;
};

struct Split {
  std::vector<std::size_t> train, val, test;  ///< positions in SessionFrames::trials
};

/// Trial-level split stratified by condition. Per condition, round(n * (val + test))
/// trials are held out and shared between val and test in proportion, test
/// rounding down; 30 trials give 21 / 5 / 4.
inline Split split_trials(const pipeline::SessionFrames& session, std::uint64_t seed, double val_fraction = 0.15,
                          double test_fraction = 0.15) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    throw ConfigError("split: fractions must be >= 0 and leave room for training");
  }
  std::map<int, std::vector<std::size_t>> by_condition;
  for (std::size_t p = 0; p < session.trials.size(); ++p) by_condition[session.trials[p].condition].push_back(p);
  Split s;
  for (auto& [cond, pos] : by_condition) {
    std::mt19937_64 rng(derive_seed(seed, {0x53504c54ULL, static_cast<std::uint64_t>(cond)}));
    std::shuffle(pos.begin(), pos.end(), rng);
    const auto n = static_cast<double>(pos.size());
    const auto held = static_cast<std::size_t>(std::llround(n * (val_fraction + test_fraction)));
    const double share = val_fraction + test_fraction > 0.0 ? test_fraction / (val_fraction + test_fraction) : 0.0;
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(held) * share + 1e-9));
    const std::size_t n_val = held - n_test;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      if (k < n_test) s.test.push_back(pos[k]);
      else if (k < n_test + n_val) s.val.push_back(pos[k]);
      else s.train.push_back(pos[k]);
    }
  }
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  if (s.train.empty() || s.val.empty() || s.test.empty()) throw DataError("split: too few trials for a train/val/test split");
  return s;
}

/// FNV-1a over the session trial indices of each part; identical splits hash identically.
inline std::string split_hash(const pipeline::SessionFrames& session, const Split& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    mix(0xffffffffULL);
    for (std::size_t p : *part) mix(session.trials.at(p).trial);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bimodec::decode
