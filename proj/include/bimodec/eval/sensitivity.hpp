#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bimodec/core/error.hpp"
#include "bimodec/core/parallel.hpp"
#include "bimodec/core/random.hpp"
#include "bimodec/decode/decoder.hpp"
#include "bimodec/decode/windows.hpp"
#include "bimodec/eval/metrics.hpp"
#include "bimodec/features/features.hpp"

namespace bimodec::eval {

struct SensitivityOptions {
  int repetitions = 20;
  std::uint64_t seed = 42;
  unsigned threads = 1;
};

struct SensitivityRow {
  std::string group;
  std::size_t columns = 0;
  double fvaf = 0.0;            ///< mean over repetitions and hands
  double percent_change = 0.0;  ///< or the raw FVAF drop when degenerate
  double percent_change_sd = 0.0;
  bool reference = false;  ///< the "none" and "all" rows
};

struct SensitivityResult {
  double fvaf_intact = 0.0;
  double fvaf_all = 0.0;
  bool degenerate = false;  ///< intact == all-shuffled, rows hold raw drops
  int repetitions = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> repetition_seeds;
  std::vector<SensitivityRow> rows;  ///< "none", groups..., "all"
};

/// fNIRS as one group plus one group per EEG band, in band order; only groups
/// the decoder actually has. A skin decoder gets its single group.
inline std::vector<std::string> sensitivity_groups(const std::map<std::string, std::vector<Eigen::Index>>& groups) {
  std::vector<std::string> out;
  if (groups.count("fnirs")) out.push_back("fnirs");
  for (const auto& b : features::standard_bands()) {
    if (groups.count("eeg:" + b.name)) out.push_back("eeg:" + b.name);
  }
  if (out.empty() && groups.count("skin")) out.push_back("skin");
  return out;
}

namespace detail {

/// One permutation of row offsets per trial span, shared by every column and
/// every group within a repetition.
inline std::vector<std::vector<Eigen::Index>> frame_permutations(const decode::FrameBlock& b, std::uint64_t rep_seed) {
  std::vector<std::vector<Eigen::Index>> perms;
  perms.reserve(b.spans.size());
  for (std::size_t s = 0; s < b.spans.size(); ++s) {
    std::vector<Eigen::Index> p(static_cast<std::size_t>(b.spans[s].rows));
    std::iota(p.begin(), p.end(), Eigen::Index{0});
    std::mt19937_64 rng(derive_seed(rep_seed, {b.spans[s].trial}));
    std::shuffle(p.begin(), p.end(), rng);
    perms.push_back(std::move(p));
  }
  return perms;
}

}  // namespace detail

/// Copy of `b` whose `columns` have their frames permuted within each trial.
inline decode::FrameBlock shuffle_columns(const decode::FrameBlock& b, const std::vector<Eigen::Index>& columns,
                                          const std::vector<std::vector<Eigen::Index>>& perms) {
  if (perms.size() != b.spans.size()) throw ShapeError("shuffle_columns: one permutation per trial expected");
  decode::FrameBlock out = b;
  for (std::size_t s = 0; s < b.spans.size(); ++s) {
    const auto& span = b.spans[s];
    const auto& p = perms[s];
    for (const Eigen::Index c : columns) {
      if (c < 0 || c >= b.width()) throw ShapeError("shuffle_columns: column " + std::to_string(c) + " out of range");
      for (Eigen::Index r = 0; r < span.rows; ++r) out.frames(span.first_row + r, c) = b.frames(span.first_row + p[static_cast<std::size_t>(r)], c);
    }
  }
  return out;
}

/// Perturbation sensitivity on a standardized block (normally the test split).
/// PC_g = 100 (F0 - F_g) / (F0 - F_all) with F the hand-averaged FVAF, each
/// shuffled F averaged over the repetitions.
inline SensitivityResult sensitivity_analysis(const decode::Decoder& dec, const decode::FrameBlock& block,
                                              std::vector<std::string> groups = {}, const SensitivityOptions& opt = {}) {
  if (opt.repetitions < 1) throw ConfigError("sensitivity: repetitions must be >= 1");
  if (block.width() != dec.features()) throw ShapeError("sensitivity: block has " + std::to_string(block.width()) + " columns, model expects " + std::to_string(dec.features()));
  if (groups.empty()) groups = sensitivity_groups(dec.groups);
  if (groups.empty()) throw ConfigError("sensitivity: no feature groups to perturb");

  std::vector<std::vector<Eigen::Index>> cols;
  for (const auto& g : groups) {
    const auto it = dec.groups.find(g);
    if (it == dec.groups.end()) throw ConfigError("sensitivity: model has no feature group '" + g + "'");
    cols.push_back(it->second);
  }
  std::vector<Eigen::Index> every(static_cast<std::size_t>(block.width()));
  std::iota(every.begin(), every.end(), Eigen::Index{0});

  auto score = [&](const decode::FrameBlock& b) {
    const decode::WindowSet w(std::make_shared<const decode::FrameBlock>(b), dec.lag());
    if (w.size() < 2) throw DataError("sensitivity: too few windows");
    const Eigen::Vector2d f = fvaf_hands(w.targets(), dec.predict(w));
    return f.mean();
  };

  SensitivityResult res;
  res.repetitions = opt.repetitions;
  res.seed = opt.seed;
  for (int r = 0; r < opt.repetitions; ++r) res.repetition_seeds.push_back(derive_seed(opt.seed, {0x53484646ULL, static_cast<std::uint64_t>(r)}));
  res.fvaf_intact = score(block);

  // slot (g, r); the last group index is "all"
  const std::size_t ng = groups.size() + 1;
  const std::size_t nr = static_cast<std::size_t>(opt.repetitions);
  std::vector<double> f(ng * nr, 0.0);
  parallel_for(ng * nr, opt.threads, [&](std::size_t i) {
    const std::size_t g = i / nr, r = i % nr;
    const auto perms = detail::frame_permutations(block, res.repetition_seeds[r]);
    f[i] = score(shuffle_columns(block, g < groups.size() ? cols[g] : every, perms));
  });
  auto mean_of = [&](std::size_t g) {
    double s = 0.0;
    for (std::size_t r = 0; r < nr; ++r) s += f[g * nr + r];
    return s / static_cast<double>(nr);
  };
  res.fvaf_all = mean_of(ng - 1);
  const double denom = res.fvaf_intact - res.fvaf_all;
  res.degenerate = !(std::abs(denom) > 1e-12);
  // dividing first keeps the "all" row at exactly 100
  auto change = [&](double fg) { return res.degenerate ? res.fvaf_intact - fg : 100.0 * ((res.fvaf_intact - fg) / denom); };

  res.rows.push_back({"none", 0, res.fvaf_intact, change(res.fvaf_intact), 0.0, true});
  for (std::size_t g = 0; g < ng; ++g) {
    SensitivityRow row;
    row.group = g < groups.size() ? groups[g] : "all";
    row.columns = g < groups.size() ? cols[g].size() : every.size();
    row.reference = g == groups.size();
    row.fvaf = mean_of(g);
    row.percent_change = change(row.fvaf);
    double ss = 0.0;
    for (std::size_t r = 0; r < nr; ++r) ss += std::pow(change(f[g * nr + r]) - row.percent_change, 2);
    row.percent_change_sd = nr > 1 ? std::sqrt(ss / static_cast<double>(nr - 1)) : 0.0;
    res.rows.push_back(row);
  }
  return res;
}

}  // namespace bimodec::eval
