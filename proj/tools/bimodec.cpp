// bimodec command-line tool: synth, preprocess, features, run, sensitivity,
// bench, report and config init.
#include <chrono>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bimodec/bimodec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bimodec;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

unsigned thread_count(const Common& c) { return c.threads > 0 ? c.threads : default_thread_count(); }

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

app::AppConfig load_config(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    try {
      j = json::parse(io::read_file(c.config_path));
    } catch (const json::exception& e) {
      throw ConfigError(c.config_path + ": " + e.what());
    }
  }
  app::AppConfig cfg = app::config_from_json(j);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.decode.seed = *c.seed;
  }
  return cfg;
}

void write_text(const fs::path& p, const std::string& s) { io::write_file_atomic(p, s); }

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

/// Re-throws with the stage name in front, keeping the error category.
template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(name + ": " + e.what());
  } catch (const Error& e) {
    throw DataError(name + ": " + e.what());
  }
}

pipeline::SessionFrames preprocess(const io::Dataset& ds, const app::AppConfig& cfg, unsigned threads) {
  return stage("preprocess", [&] { return pipeline::process_session(ds.recording, app::session_options(cfg, threads)); });
}

std::vector<decode::Modality> modalities_from(const std::string& s) {
  if (s == "all") return {decode::Modality::Eeg, decode::Modality::Fnirs, decode::Modality::Both, decode::Modality::Skin};
  return {decode::modality_from_string(s)};
}

std::vector<std::string> models_from(const std::string& s) {
  if (s == "all") return {"linear", "cnnatt"};
  if (s != "linear" && s != "cnnatt") throw ConfigError("unknown model '" + s + "' (linear|cnnatt|all)");
  return {s};
}

json fit_summary(const eval::FitResult& r) {
  if (const auto* l = r.decoder.linear()) {
    return {{"lambda", l->lambda}, {"nonzeros", l->nonzeros()}, {"converged", l->converged}, {"lambda_grid", r.lambda_grid}, {"lambda_val_fvaf", r.lambda_val_fvaf}};
  }
  const auto& m = *r.decoder.cnnatt();
  json log = json::array();
  for (const auto& e : m.log) log.push_back({e.epoch, e.train_loss, e.val_fvaf});
  return {{"epochs", m.log.size()}, {"best_epoch", m.best_epoch}, {"best_val_fvaf", m.best_val_fvaf}, {"diverged", m.diverged}, {"log", log}};
}

std::string checkpoint_name(const std::string& model, decode::Modality m) { return "model_" + model + "_" + decode::to_string(m) + ".bmd"; }

// ---------------------------------------------------------------- commands

int cmd_config_init(const std::string& out) {
  const json j = app::to_json(app::AppConfig{});
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(out, j);
  }
  return 0;
}

int cmd_synth(const Common& c, const std::string& out, std::optional<int> tpc) {
  app::AppConfig cfg = load_config(c);
  if (tpc) cfg.protocol.trials_per_condition = *tpc;
  const unsigned threads = thread_count(c);
  const auto rec = stage("synth", [&] {
    const SessionManifest m = synth::gen_protocol(cfg.seed, cfg.protocol);
    return synth::gen_recording(m, cfg.forward_model, cfg.seed);
  });
  const json generator = {{"seed", cfg.seed}, {"protocol", app::to_json(cfg.protocol)}, {"forward_model", json(cfg.forward_model)}};
  stage("write dataset", [&] { io::write_dataset(out, rec, generator, threads); });
  write_json(fs::path(out) / "config.json", app::to_json(cfg));
  const io::Dataset ds = io::read_dataset(out);
  std::cout << "wrote " << rec.manifest.trials.size() << " trials to " << out << " (dataset " << ds.hash << ")\n";
  return 0;
}

int cmd_preprocess(const Common& c, const std::string& data, const std::string& out) {
  const app::AppConfig cfg = load_config(c);
  const io::Dataset ds = stage("load dataset", [&] { return io::read_dataset(data); });
  const auto session = preprocess(ds, cfg, thread_count(c));
  io::ensure_writable_dir(out);
  io::ensure_writable_dir(fs::path(out) / "force");
  json trials = json::array();
  for (const auto& t : session.trials) {
    SignalMatrix f(4, t.force.rows());
    f.topRows(2) = t.force.transpose();
    f.bottomRows(2) = t.target.rows() == t.force.rows() ? Eigen::MatrixXd(t.target.transpose()) : Eigen::MatrixXd::Zero(2, t.force.rows());
    const TimeSeries ts(std::move(f), t.stream.rate_hz, t.stream.time_at(0), {"force:left", "force:right", "target:left", "target:right"}, SignalKind::Force);
    char name[48];
    std::snprintf(name, sizeof name, "force/trial_%03zu.bts", t.trial);
    write_text(fs::path(out) / name, io::encode_series(ts));
    trials.push_back({{"trial", t.trial}, {"condition", t.condition}, {"go_time_s", t.go_time_s}, {"file", name}, {"log", t.log}});
  }
  json rejected = json::array();
  for (const auto& r : session.rejected) rejected.push_back({{"trial", r.trial_index}, {"reason", r.reason}});
  write_json(fs::path(out) / "preprocess.json", {{"dataset_hash", ds.hash}, {"config", app::to_json(cfg)}, {"trials", trials}, {"rejected", rejected}, {"log", session.log}});
  std::cout << "preprocessed " << session.trials.size() << " trials, " << session.rejected.size() << " rejected\n";
  return session.trials.empty() ? 3 : 0;
}

int cmd_features(const Common& c, const std::string& data, const std::string& out) {
  const app::AppConfig cfg = load_config(c);
  const io::Dataset ds = stage("load dataset", [&] { return io::read_dataset(data); });
  const auto session = preprocess(ds, cfg, thread_count(c));
  if (session.trials.empty()) throw DataError("features: no trials survived preprocessing");
  io::ensure_writable_dir(fs::path(out) / "features");
  json trials = json::array();
  for (const auto& t : session.trials) {
    const TimeSeries ts(SignalMatrix(t.stream.frames.transpose()), t.stream.rate_hz, t.stream.time_at(0), t.stream.columns, SignalKind::Feature);
    char name[48];
    std::snprintf(name, sizeof name, "features/trial_%03zu.bts", t.trial);
    write_text(fs::path(out) / name, io::encode_series(ts));
    trials.push_back({{"trial", t.trial}, {"condition", t.condition}, {"file", name}, {"frames", t.stream.size()}});
  }
  const auto& s0 = session.trials.front().stream;
  write_json(fs::path(out) / "features.json", {{"dataset_hash", ds.hash}, {"rate_hz", s0.rate_hz}, {"columns", s0.columns}, {"groups", s0.groups}, {"trials", trials}, {"config", app::to_json(cfg)}});
  std::cout << "wrote " << session.trials.size() << " feature streams, " << s0.width() << " columns\n";
  return 0;
}

struct RunOptions {
  std::string data, out, model = "all", modality = "all";
  std::optional<int> max_epochs;
  std::optional<int> train_stride;
};

int cmd_run(const Common& c, const RunOptions& o) {
  const auto started = iso_now();
  const auto t0 = std::chrono::steady_clock::now();
  app::AppConfig cfg = load_config(c);
  if (o.max_epochs) cfg.decode.train.max_epochs = *o.max_epochs;
  if (o.train_stride) cfg.decode.train_stride = *o.train_stride;
  cfg.decode.train.validate();
  if (cfg.decode.train_stride < 1) throw ConfigError("--train-stride must be >= 1");
  const auto models = models_from(o.model);
  const auto mods = modalities_from(o.modality);

  const io::Dataset ds = stage("load dataset", [&] { return io::read_dataset(o.data); });
  io::ensure_writable_dir(o.out);
  const std::string hash = app::config_hash(cfg, ds.hash);
  const auto session = preprocess(ds, cfg, thread_count(c));

  eval::EvalReport rep;
  rep.dataset_hash = ds.hash;
  rep.config_hash = hash;
  rep.seed = cfg.seed;
  rep.config = app::to_json(cfg);
  for (const auto m : mods) {
    const std::string name = decode::to_string(m);
    const auto prepared = stage("split " + name, [&] { return eval::prepare(session, m, cfg.decode); });
    for (const auto& model : models) {
      const auto fit = stage("train " + model + "/" + name, [&] { return eval::fit_decoder(prepared, model, cfg.decode, hash); });
      const auto s = stage("evaluate " + model + "/" + name, [&] { return eval::score(fit.decoder, prepared); });
      eval::ModalityResult r;
      r.model = model;
      r.modality = name;
      r.fvaf = s.fvaf;
      r.cross = {s.specificity(1, 0), s.specificity(0, 1)};
      r.val_fvaf = s.val_fvaf;
      r.split_hash = prepared.split_hash;
      r.checkpoint = checkpoint_name(model, m);
      r.fit = fit_summary(fit);
      r.warning = fit.warning;
      io::save_checkpoint(fs::path(o.out) / r.checkpoint, fit.decoder);
      std::cout << model << "/" << name << ": FVAF left " << r.fvaf[0] << " right " << r.fvaf[1] << " | cross left " << r.cross[0] << " right " << r.cross[1]
                << (r.warning.empty() ? "" : " | " + r.warning) << "\n";
      rep.results.push_back(std::move(r));
    }
  }
  rep.validate();
  write_json(fs::path(o.out) / "report.json", eval::to_json(rep));
  write_text(fs::path(o.out) / "report.csv", eval::results_csv(rep.results));
  write_text(fs::path(o.out) / "fvaf.svg", io::fvaf_chart(rep.results));
  write_json(fs::path(o.out) / "config.json", app::to_json(cfg));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(fs::path(o.out) / "run_meta.json", {{"started", started}, {"finished", iso_now()}, {"seconds", secs}, {"threads", thread_count(c)}});
  return 0;
}

/// Checkpoint, dataset and config must describe the same training run.
eval::PreparedData prepare_for(const decode::Decoder& dec, const io::Dataset& ds, const app::AppConfig& cfg, unsigned threads) {
  const std::string hash = app::config_hash(cfg, ds.hash);
  if (hash != dec.config_hash) {
    throw ConfigError("checkpoint was trained with config hash " + dec.config_hash + ", dataset and config give " + hash +
                      " (pass the run's config.json with --config and the same dataset)");
  }
  const auto session = preprocess(ds, cfg, threads);
  auto d = stage("split", [&] { return eval::prepare(session, dec.modality, cfg.decode); });
  if (!d.stats.mean.isApprox(dec.stats.mean, 1e-9) || !d.stats.std.isApprox(dec.stats.std, 1e-9)) {
    throw ConfigError("standardization of this dataset differs from the checkpoint's");
  }
  return d;
}

std::string default_config_for(const std::string& checkpoint, const std::string& given) {
  if (!given.empty()) return given;
  const fs::path beside = fs::path(checkpoint).parent_path() / "config.json";
  return fs::exists(beside) ? beside.string() : "";
}

int cmd_sensitivity(Common c, const std::string& checkpoint, const std::string& data, const std::string& out, std::optional<int> reps) {
  c.config_path = default_config_for(checkpoint, c.config_path);
  const app::AppConfig cfg = load_config(c);
  const auto dec = stage("load checkpoint", [&] { return io::load_checkpoint(checkpoint); });
  const io::Dataset ds = stage("load dataset", [&] { return io::read_dataset(data); });
  const auto d = prepare_for(dec, ds, cfg, thread_count(c));
  eval::SensitivityOptions so;
  so.repetitions = reps ? *reps : cfg.sensitivity.repetitions;
  so.seed = cfg.seed;
  so.threads = thread_count(c);
  const auto res = stage("sensitivity", [&] { return eval::sensitivity_analysis(dec, d.test.block(), {}, so); });
  io::ensure_writable_dir(out);
  const std::string tag = dec.kind() + "_" + decode::to_string(dec.modality);
  write_text(fs::path(out) / ("sensitivity_" + tag + ".csv"), eval::sensitivity_csv(res));
  write_text(fs::path(out) / ("sensitivity_" + tag + ".svg"), io::sensitivity_chart(res, "Sensitivity " + dec.kind() + " / " + decode::to_string(dec.modality)));
  write_json(fs::path(out) / ("sensitivity_" + tag + ".json"), {{"checkpoint", fs::path(checkpoint).filename().string()}, {"config_hash", dec.config_hash}, {"result", eval::to_json(res)}});
  for (const auto& r : res.rows) std::cout << r.group << ": " << r.percent_change << (res.degenerate ? " (raw FVAF drop)" : " %") << "\n";
  return 0;
}

int cmd_bench(Common c, const std::string& checkpoint, const std::string& data, const std::string& out, std::optional<int> repeats) {
  c.config_path = default_config_for(checkpoint, c.config_path);
  const app::AppConfig cfg = load_config(c);
  const auto dec = stage("load checkpoint", [&] { return io::load_checkpoint(checkpoint); });
  const io::Dataset ds = stage("load dataset", [&] { return io::read_dataset(data); });
  const auto d = prepare_for(dec, ds, cfg, thread_count(c));
  eval::LatencyOptions lo;
  lo.warmup = cfg.bench.warmup;
  lo.repeats = repeats ? *repeats : cfg.bench.repeats;
  const auto rep = stage("bench", [&] { return eval::latency_bench(dec, d.test.block(), lo); });
  const json j = {{"checkpoint", fs::path(checkpoint).filename().string()}, {"model", dec.kind()}, {"modality", decode::to_string(dec.modality)},
                  {"features", dec.features()}, {"latency", eval::to_json(rep)}, {"timestamp", iso_now()}};
  if (!out.empty()) write_json(out, j);
  std::cout << dec.kind() << "/" << decode::to_string(dec.modality) << ": " << rep.per_window.mean_ms << " +- " << rep.per_window.std_ms << " ms/window (p99 "
            << rep.per_window.p99_ms << "), " << rep.per_trial.mean_ms << " ms/trial of " << rep.windows_per_trial << " windows"
            << (rep.note.empty() ? "" : " [" + rep.note + "]") << "\n";
  return 0;
}

/// Merges the results of one or more run directories and re-renders CSV + SVG.
int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<eval::ModalityResult> all;
  for (const auto& in : inputs) {
    json j;
    try {
      j = json::parse(io::read_file(fs::path(in) / "report.json"));
      for (const auto& r : j.at("results")) all.push_back(eval::modality_result_from_json(r));
    } catch (const json::exception& e) {
      throw DataError(in + "/report.json: " + e.what());
    }
  }
  if (all.empty()) throw DataError("report: no results found");
  io::ensure_writable_dir(out);
  write_text(fs::path(out) / "report.csv", eval::results_csv(all));
  write_text(fs::path(out) / "fvaf.svg", io::fvaf_chart(all));
  std::cout << "rendered " << all.size() << " results to " << out << "\n";
  return 0;
}

int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 3;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bimodec: bimodal EEG + fNIRS force decoding"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON config file (see `config init`)");
    sub->add_option("--seed", common.seed, "overrides the config seed");
    sub->add_option("--threads", common.threads, "worker threads (default: BIMODEC_THREADS or all cores)")->check(CLI::PositiveNumber);
  };

  auto* config = app.add_subcommand("config", "configuration helpers");
  auto* init = config->add_subcommand("init", "print or write every default setting");
  std::string init_out;
  init->add_option("-o,--out", init_out, "write to this file instead of stdout");
  config->require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic session dataset");
  std::string synth_out;
  std::optional<int> tpc;
  synth->add_option("-o,--out", synth_out, "dataset directory")->required();
  synth->add_option("--trials-per-condition", tpc, "overrides protocol.trials_per_condition")->check(CLI::PositiveNumber);
  add_common(synth);

  auto* pre = app.add_subcommand("preprocess", "run preprocessing and write per-trial force and a log");
  std::string pre_data, pre_out;
  pre->add_option("-d,--data", pre_data, "dataset directory")->required();
  pre->add_option("-o,--out", pre_out, "output directory")->required();
  add_common(pre);

  auto* feat = app.add_subcommand("features", "write per-trial feature streams");
  std::string feat_data, feat_out;
  feat->add_option("-d,--data", feat_data, "dataset directory")->required();
  feat->add_option("-o,--out", feat_out, "output directory")->required();
  add_common(feat);

  auto* run = app.add_subcommand("run", "preprocess, split, train and evaluate");
  RunOptions ro;
  run->add_option("-d,--data", ro.data, "dataset directory")->required();
  run->add_option("-o,--out", ro.out, "output directory")->required();
  run->add_option("-m,--model", ro.model, "linear|cnnatt|all");
  run->add_option("--modality", ro.modality, "eeg|fnirs|both|skin|all");
  run->add_option("--max-epochs", ro.max_epochs, "overrides decode.cnnatt.max_epochs")->check(CLI::PositiveNumber);
  run->add_option("--train-stride", ro.train_stride, "overrides decode.cnnatt.train_stride")->check(CLI::PositiveNumber);
  add_common(run);

  auto* sens = app.add_subcommand("sensitivity", "perturbation sensitivity of a trained checkpoint");
  std::string sens_ckpt, sens_data, sens_out;
  std::optional<int> reps;
  sens->add_option("-k,--checkpoint", sens_ckpt, "model checkpoint (.bmd)")->required();
  sens->add_option("-d,--data", sens_data, "dataset directory")->required();
  sens->add_option("-o,--out", sens_out, "output directory")->required();
  sens->add_option("--repetitions", reps, "shuffle repetitions per group")->check(CLI::PositiveNumber);
  add_common(sens);

  auto* bench = app.add_subcommand("bench", "per-window and per-trial prediction latency");
  std::string bench_ckpt, bench_data, bench_out;
  std::optional<int> repeats;
  bench->add_option("-k,--checkpoint", bench_ckpt, "model checkpoint (.bmd)")->required();
  bench->add_option("-d,--data", bench_data, "dataset directory")->required();
  bench->add_option("-o,--out", bench_out, "write the result as JSON");
  bench->add_option("--repeats", repeats, "timed windows")->check(CLI::PositiveNumber);
  add_common(bench);

  auto* report = app.add_subcommand("report", "merge run reports and re-render CSV and SVG");
  std::vector<std::string> report_in;
  std::string report_out;
  report->add_option("-i,--in", report_in, "run directories")->required();
  report->add_option("-o,--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (init->parsed()) return cmd_config_init(init_out);
    if (synth->parsed()) return cmd_synth(common, synth_out, tpc);
    if (pre->parsed()) return cmd_preprocess(common, pre_data, pre_out);
    if (feat->parsed()) return cmd_features(common, feat_data, feat_out);
    if (run->parsed()) return cmd_run(common, ro);
    if (sens->parsed()) return cmd_sensitivity(common, sens_ckpt, sens_data, sens_out, reps);
    if (bench->parsed()) return cmd_bench(common, bench_ckpt, bench_data, bench_out, repeats);
    if (report->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_of(e);
  }
  return 0;
}
