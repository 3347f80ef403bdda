#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimodec/decode/decoder.hpp"
#include "bimodec/io/files.hpp"

/// Model checkpoint container:
///   "BMD1" | u32 version | u64 json length | json | u64 value count |
///   f64 values (little-endian) | u32 crc32 of everything before it.
/// The JSON lists every tensor (name, rows, cols) in blob order, column-major.
namespace bimodec::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
};

inline std::vector<Tensor> decoder_tensors(const decode::Decoder& d) {
  std::vector<Tensor> t;
  t.push_back({"stats.mean", d.stats.mean});
  t.push_back({"stats.std", d.stats.std});
  if (const auto* l = d.linear()) {
    t.push_back({"linear.weights", l->weights});
    t.push_back({"linear.bias", l->bias});
  } else {
    const auto shapes = d.cnnatt()->arch.shapes();
    for (std::size_t i = 0; i < shapes.size(); ++i) t.push_back({std::get<0>(shapes[i]), d.cnnatt()->params[i]});
  }
  return t;
}

}  // namespace detail

inline std::string encode_checkpoint(const decode::Decoder& d) {
  using nlohmann::json;
  json meta;
  meta["kind"] = d.kind();
  meta["modality"] = decode::to_string(d.modality);
  meta["columns"] = d.columns;
  meta["groups"] = d.groups;
  meta["constant_columns"] = d.stats.constant;
  meta["config_hash"] = d.config_hash;
  meta["seed"] = d.seed;
  if (const auto* l = d.linear()) {
    meta["linear"] = {{"lag", l->lag}, {"features", l->features}, {"lambda", l->lambda}, {"converged", l->converged}, {"sweeps", l->sweeps}};
  } else {
    const auto& m = *d.cnnatt();
    meta["architecture"] = m.arch;
    json log = json::array();
    for (const auto& e : m.log) log.push_back({e.epoch, e.train_loss, std::isfinite(e.val_fvaf) ? json(e.val_fvaf) : json(nullptr)});
    meta["training"] = {{"best_epoch", m.best_epoch}, {"diverged", m.diverged}, {"log", log}};
  }
  const auto tensors = detail::decoder_tensors(d);
  std::uint64_t count = 0;
  json index = json::array();
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    count += static_cast<std::uint64_t>(t.value.size());
  }
  meta["tensors"] = index;

  const std::string text = meta.dump();
  ByteWriter w;
  w.str("BMD1");
  w.u32(kCheckpointVersion);
  w.u64(text.size());
  w.str(text);
  w.u64(count);
  for (const auto& t : tensors) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) w.f64(t.value.data()[i]);
  }
  w.u32(crc32_of(w.data()));
  return w.data();
}

inline decode::Decoder decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  using nlohmann::json;
  if (bytes.size() < 4 + 4 + 8 + 8 + 4) throw DataError(what + ": file too short");
  if (bytes.substr(0, 4) != "BMD1") throw DataError(what + ": bad magic (expected BMD1)");
  ByteReader crc_reader(bytes.substr(bytes.size() - 4), what);
  if (crc_reader.u32() != crc32_of(bytes.data(), bytes.size() - 4)) throw DataError(what + ": checksum mismatch");
  ByteReader r(bytes.substr(0, bytes.size() - 4), what);
  r.take(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  const std::uint64_t len = r.u64();
  json meta;
  try {
    meta = json::parse(r.take(static_cast<std::size_t>(len)));
  } catch (const json::exception& e) {
    throw DataError(what + ": bad metadata: " + e.what());
  }
  const std::uint64_t count = r.u64();
  if (count * 8 != r.remaining()) throw DataError(what + ": parameter blob size mismatch");

  decode::Decoder d;
  try {
    d.modality = decode::modality_from_string(meta.at("modality").get<std::string>());
    d.columns = meta.at("columns").get<std::vector<std::string>>();
    d.groups = meta.at("groups").get<std::map<std::string, std::vector<Eigen::Index>>>();
    d.stats.constant = meta.at("constant_columns").get<std::vector<bool>>();
    d.config_hash = meta.at("config_hash").get<std::string>();
    d.seed = meta.at("seed").get<std::uint64_t>();
    std::map<std::string, Eigen::MatrixXd> t;
    std::vector<std::string> order;
    for (const auto& e : meta.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      Eigen::MatrixXd m(e.at("rows").get<Eigen::Index>(), e.at("cols").get<Eigen::Index>());
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
      if (!m.allFinite()) throw NumericError(what + ": non-finite values in tensor " + name);
      order.push_back(name);
      t[name] = std::move(m);
    }
    d.stats.mean = t.at("stats.mean").col(0);
    d.stats.std = t.at("stats.std").col(0);
    const auto kind = meta.at("kind").get<std::string>();
    if (kind == "linear") {
      decode::LinearModel l;
      const auto& lm = meta.at("linear");
      l.lag = lm.at("lag").get<Eigen::Index>();
      l.features = lm.at("features").get<Eigen::Index>();
      l.lambda = lm.at("lambda").get<double>();
      l.converged = lm.at("converged").get<bool>();
      l.sweeps = lm.at("sweeps").get<std::vector<int>>();
      l.weights = t.at("linear.weights");
      l.bias = t.at("linear.bias").col(0);
      if (l.weights.rows() != 2 || l.weights.cols() != l.lag * l.features) throw DataError(what + ": linear weights have the wrong shape");
      d.model = std::move(l);
    } else if (kind == "cnnatt") {
      decode::CnnAttModel m;
      m.arch = meta.at("architecture").get<decode::CnnAttArchitecture>();
      m.arch.validate();
      for (const auto& [name, rows, cols] : m.arch.shapes()) {
        const auto& p = t.at(name);
        if (p.rows() != rows || p.cols() != cols) throw DataError(what + ": tensor " + name + " has the wrong shape");
        m.params.push_back(p);
      }
      const auto& tr = meta.at("training");
      m.best_epoch = tr.at("best_epoch").get<int>();
      m.diverged = tr.at("diverged").get<bool>();
      for (const auto& e : tr.at("log")) {
        m.log.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).is_null() ? std::nan("") : e.at(2).get<double>()});
        if (m.log.back().epoch == m.best_epoch) m.best_val_fvaf = m.log.back().val_fvaf;
      }
      d.model = std::move(m);
    } else {
      throw DataError(what + ": unknown model kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(what + ": bad metadata: " + e.what());
  } catch (const std::out_of_range&) {
    throw DataError(what + ": missing tensor");
  }
  if (static_cast<std::size_t>(d.stats.mean.size()) != d.columns.size() || d.stats.std.size() != d.stats.mean.size() ||
      d.stats.constant.size() != d.columns.size() || d.features() != static_cast<Eigen::Index>(d.columns.size())) {
    throw DataError(what + ": column metadata does not match the model");
  }
  return d;
}

inline void save_checkpoint(const fs::path& path, const decode::Decoder& d) { write_file_atomic(path, encode_checkpoint(d)); }

inline decode::Decoder load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path), path.string()); }

}  // namespace bimodec::io
