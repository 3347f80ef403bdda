// Acceptance checks A1-A10. Prints one line per criterion and exits non-zero
// if any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "filter_specs.hpp"
#include "support.hpp"

using namespace bimodec;
using testing_support::gaussian;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(const char* id, const char* title, const std::function<void(Outcome&)>& fn, double budget_s) {
  Outcome o;
  const auto t0 = clock_type::now();
  try {
    fn(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  if (budget_s > 0.0) o.require(secs < budget_s, "runtime budget");
  if (!o.pass) ++failures;
  char time_buf[64];
  std::snprintf(time_buf, sizeof time_buf, " (%.1f s", secs);
  std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << " " << title << ":" << o.detail.str() << time_buf
            << (budget_s > 0.0 ? ", budget " + std::to_string(static_cast<int>(budget_s)) + " s)" : ")") << std::endl;
}

std::string fmt(double v, int prec = 2) {
  char b[32];
  std::snprintf(b, sizeof b, "%.*f", prec, v);
  return b;
}

// ------------------------------------------------------------------ A1

void a1(Outcome& o) {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd y = gaussian(64, 1, rng, 1.0 + k).col(0);
    worst = std::max(worst, std::abs(eval::fvaf(y, y) - 100.0));
    worst = std::max(worst, std::abs(eval::fvaf(y, Eigen::VectorXd::Constant(y.size(), y.mean()))));
  }
  const double hand = eval::fvaf(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 4));
  o.detail << " max identity error " << worst << " (tol 1e-9); [1,2,3]/[1,2,4] = " << fmt(hand, 12);
  o.require(worst < 1e-9, "identities");
  o.require(std::abs(hand - 50.0) < 1e-9, "hand case");
}

// ------------------------------------------------------------------ A2

double atten_db(const dsp::IirFilter& f, double hz) { return -f.magnitude_db(hz); }

void a2(Outcome& o) {
  const auto specs = filter_specs::design_specs(pipeline::PipelineConfig{});
  std::map<std::string, double> worst;
  for (const auto& s : specs) {
    double w = 1e300;
    for (double hz : s.stop_hz) w = std::min(w, atten_db(s.filter, hz));
    const std::string family = s.name.substr(0, s.name.find(' ', s.name.find(' ') + 1));
    worst[family] = worst.count(family) ? std::min(worst[family], w) : w;
    o.require(w >= s.min_atten_db, s.name);
  }
  o.detail << " " << specs.size() << " designs;";
  for (const auto& [name, w] : worst) o.detail << " " << name << " min " << (w > 300 ? std::string("inf") : fmt(w, 1)) << " dB;";
  o.detail << " bounds notch/hp/lp >= 40 dB, force bp >= 30 dB";
}

// ------------------------------------------------------------------ A3

void a3(Outcome& o) {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  std::string where;
  int checks = 0;
  for (int k = 0; k < 100; ++k) {
    for (const auto& c : testing_support::primitive_cases(rng)) {
      const auto r = testing_support::grad_check(c.inputs, c.steps, c.build);
      ++checks;
      if (r.max_rel_err > worst) {
        worst = r.max_rel_err;
        where = c.name;
      }
    }
    const auto c = testing_support::cnnatt_case(rng);
    const auto r = testing_support::grad_check(c.inputs, c.steps, c.build);
    ++checks;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      where = c.name;
    }
  }
  o.detail << " " << checks << " checks (100 instances x 8 primitives + cnnatt), max rel err " << worst << " in " << where << " (tol 1e-4)";
  o.require(worst <= 1e-4, "gradient error");
}

// ------------------------------------------------------------------ A4

void a4(Outcome& o) {
  std::mt19937_64 rng(4);
  decode::LassoOptions opt;
  opt.tol = 1e-12;
  opt.max_iter = 100000;
  double st_err = 0.0, ols_err = 0.0;
  bool monotone = true;
  std::size_t sweeps = 0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index n = 64, p = 10;
    Eigen::MatrixXd raw = gaussian(n, p, rng);
    raw.rowwise() -= raw.colwise().mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    const Eigen::MatrixXd x = (qr.householderQ() * Eigen::MatrixXd::Identity(n, p)) * std::sqrt(static_cast<double>(n));
    const Eigen::VectorXd y = gaussian(n, 1, rng, 2.0).col(0);
    const Eigen::VectorXd z = x.transpose() * (y.array() - y.mean()).matrix() / static_cast<double>(n);
    const auto cs = decode::detail::column_stats(decode::DenseDesign(x));
    for (double lambda : {0.01, 0.1, 0.3}) {
      const auto fit = decode::lasso_fit_column(decode::DenseDesign(x), cs, y, lambda, opt);
      for (Eigen::Index j = 0; j < p; ++j) st_err = std::max(st_err, std::abs(fit.w[j] - std::copysign(std::max(std::abs(z[j]) - lambda, 0.0), z[j])));
    }

    const Eigen::MatrixXd xg = gaussian(80, 8, rng);
    const Eigen::VectorXd yg = (xg * gaussian(8, 1, rng) + gaussian(80, 1, rng, 0.3)).col(0).array() + 1.0;
    Eigen::MatrixXd xa(80, 9);
    xa << xg, Eigen::VectorXd::Ones(80);
    const Eigen::VectorXd ols = (xa.transpose() * xa).ldlt().solve(xa.transpose() * yg);
    Eigen::MatrixXd y2(80, 2);
    y2 << yg, yg;
    const auto g = decode::gram_problem(xg, y2);
    const auto gf = decode::lasso_fit_gram(g, 0, 0.0, opt);
    const auto csg = decode::detail::column_stats(decode::DenseDesign(xg));
    const auto cf = decode::lasso_fit_column(decode::DenseDesign(xg), csg, yg, 0.0, opt);
    ols_err = std::max({ols_err, (gf.w - ols.head(8)).cwiseAbs().maxCoeff(), (cf.w - ols.head(8)).cwiseAbs().maxCoeff(), std::abs(gf.bias - ols[8]),
                        std::abs(cf.bias - ols[8])});

    const auto path = decode::lasso_fit_gram(g, 1, 0.02, opt);
    const auto col = decode::lasso_fit_column(decode::DenseDesign(xg), csg, yg, 0.02, opt);
    for (const auto* obj : {&path.objective, &col.objective}) {
      sweeps += obj->size();
      for (std::size_t i = 1; i < obj->size(); ++i) monotone = monotone && (*obj)[i] <= (*obj)[i - 1] + 1e-12;
    }
  }
  o.detail << " soft-threshold err " << st_err << ", OLS err " << ols_err << " (tol 1e-6); objective monotone over " << sweeps << " sweeps";
  o.require(st_err <= 1e-6, "soft threshold");
  o.require(ols_err <= 1e-6, "OLS");
  o.require(monotone, "monotone objective");
}

// ------------------------------------------------------------------ shared session

struct Trained {
  eval::Scores scores;
  decode::Decoder decoder;
  eval::PreparedData data;
};

using Results = std::map<std::pair<std::string, std::string>, Trained>;  // (modality, model)

Results train_all(const synth::ForwardModelParams& fm, int tpc, const std::vector<decode::Modality>& modalities, unsigned threads) {
  app::AppConfig cfg;
  cfg.forward_model = fm;
  cfg.protocol.trials_per_condition = tpc;
  const auto rec = synth::gen_recording(synth::gen_protocol(cfg.seed, cfg.protocol), cfg.forward_model, cfg.seed);
  const auto session = pipeline::process_session(rec, app::session_options(cfg, threads));
  Results out;
  for (const auto m : modalities) {
    auto d = eval::prepare(session, m, cfg.decode);
    for (const std::string model : {"linear", "cnnatt"}) {
      auto fit = eval::fit_decoder(d, model, cfg.decode);
      const auto s = eval::score(fit.decoder, d);
      out[{decode::to_string(m), model}] = {s, std::move(fit.decoder), d};
    }
  }
  return out;
}

double mean_fvaf(const Results& r, const std::string& mod, const std::string& model) { return r.at({mod, model}).scores.fvaf.mean(); }

nlohmann::json load_baseline() {
  std::ifstream in(BIMODEC_ACCEPTANCE_BASELINE);
  if (!in) return nlohmann::json::object();
  return nlohmann::json::parse(in);
}

// ------------------------------------------------------------------ A10 helpers

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BIMODEC_CLI) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  std::cout << "bimodec acceptance" << std::endl;
  report("A1", "metric identities", a1, 1.0);
  report("A2", "filter specs", a2, 10.0);
  report("A3", "autograd gradient checks", a3, 60.0);
  report("A4", "lasso oracles", a4, 10.0);

  const unsigned threads = default_thread_count();
  Results main_run;
  double session_s = 0.0;
  std::string session_error;
  {
    const auto t0 = clock_type::now();
    try {
      main_run = train_all(synth::ForwardModelParams{}, synth::ProtocolConfig{}.trials_per_condition,
                           {decode::Modality::Eeg, decode::Modality::Fnirs, decode::Modality::Both, decode::Modality::Skin}, threads);
    } catch (const std::exception& e) {
      session_error = e.what();
    }
    session_s = std::chrono::duration<double>(clock_type::now() - t0).count();
  }
  const auto baseline = load_baseline();
  auto need_session = [&](Outcome& o) {
    if (!session_error.empty()) throw std::runtime_error("default session failed: " + session_error);
    (void)o;
  };

  report(
      "A5", "fusion structure",
      [&](Outcome& o) {
        need_session(o);
        o.require(session_s < 900.0, "session under 15 min");
        o.detail << " seed 42, hand-averaged held-out FVAF;";
        for (const std::string model : {"linear", "cnnatt"}) {
          const double b = mean_fvaf(main_run, "both", model), e = mean_fvaf(main_run, "eeg", model), f = mean_fvaf(main_run, "fnirs", model);
          o.detail << " " << model << " both " << fmt(b) << " eeg " << fmt(e) << " fnirs " << fmt(f) << " (margins +" << fmt(b - e) << "/+" << fmt(b - f) << ");";
          o.require(b >= e + 5.0, model + " both >= eeg + 5");
          o.require(b >= f + 5.0, model + " both >= fnirs + 5");
          if (baseline.contains("A5")) {
            const auto& pin = baseline["A5"][model];
            const double tol = baseline["A5"]["tolerance"].get<double>();
            o.require(std::abs((b - e) - pin["margin_eeg"].get<double>()) <= tol, model + " eeg margin matches pinned baseline");
            o.require(std::abs((b - f) - pin["margin_fnirs"].get<double>()) <= tol, model + " fnirs margin matches pinned baseline");
          }
        }
        o.detail << (baseline.contains("A5") ? " pinned margins within " + fmt(baseline["A5"]["tolerance"].get<double>()) : std::string(" no pinned baseline"));
        o.detail << "; session " << fmt(session_s, 0) << " s (budget 900 s)";
      },
      0.0);

  report(
      "A6", "skin control",
      [&](Outcome& o) {
        need_session(o);
        for (const std::string model : {"linear", "cnnatt"}) {
          const auto& s = main_run.at({"skin", model}).scores.fvaf;
          const auto& f = main_run.at({"fnirs", model}).scores.fvaf;
          o.detail << " " << model << " skin " << fmt(s[0]) << "/" << fmt(s[1]) << " fnirs " << fmt(f[0]) << "/" << fmt(f[1]) << ";";
          o.require(s.maxCoeff() < 5.0, model + " skin < 5");
          o.require(f.minCoeff() >= 25.0, model + " fnirs >= 25");
        }
        o.detail << " per hand, skin < 5 and fnirs >= 25";
      },
      0.0);

  report(
      "A7", "hand specificity",
      [&](Outcome& o) {
        need_session(o);
        o.detail << " EEG+fNIRS decoders, own vs other hand's output on the same real hand;";
        for (const std::string model : {"linear", "cnnatt"}) {
          const auto& s = main_run.at({"both", model}).scores;
          const char* hand[2] = {"left", "right"};
          for (int h = 0; h < 2; ++h) {
            const double own = s.specificity(h, h), cross = s.specificity(1 - h, h);
            o.detail << " " << model << " " << hand[h] << " " << fmt(own) << " > " << fmt(cross) << ";";
            o.require(own > cross, model + " " + hand[h]);
          }
        }
      },
      0.0);

  report(
      "A8", "sensitivity endpoints",
      [&](Outcome& o) {
        synth::ForwardModelParams planted;
        planted.erd_beta = {0.0, 0.0};
        planted.erd_low_gamma = {0.0, 0.0};
        const auto r = train_all(planted, 15, {decode::Modality::Both}, threads);
        o.detail << " EEG decoupled from force, EEG+fNIRS decoders, 20 repetitions;";
        for (const std::string model : {"linear", "cnnatt"}) {
          const auto& t = r.at({"both", model});
          eval::SensitivityOptions so;
          so.threads = threads;
          const auto s = eval::sensitivity_analysis(t.decoder, t.data.test.block(), {}, so);
          o.require(!s.degenerate, model + " not degenerate");
          o.require(s.rows.front().percent_change == 0.0 && s.rows.back().percent_change == 100.0, model + " endpoints exactly 0 and 100");
          double max_eeg = -1e300, fnirs = 0.0;
          for (const auto& row : s.rows) {
            if (row.group == "fnirs") fnirs = row.percent_change;
            if (row.group.rfind("eeg:", 0) == 0) max_eeg = std::max(max_eeg, row.percent_change);
          }
          o.detail << " " << model << " none " << s.rows.front().percent_change << " all " << s.rows.back().percent_change << " fnirs " << fmt(fnirs, 1)
                   << " max eeg band " << fmt(max_eeg, 1) << ";";
          o.require(fnirs >= 80.0, model + " fnirs >= 80");
          o.require(max_eeg <= 20.0, model + " eeg bands <= 20");
        }
      },
      0.0);

  report(
      "A9", "latency ordering",
      [&](Outcome& o) {
        need_session(o);
        std::map<std::string, eval::LatencyReport> lat;
        for (const std::string model : {"linear", "cnnatt"}) {
          const auto& t = main_run.at({"both", model});
          lat[model] = eval::latency_bench(t.decoder, t.data.test.block());
          const auto& w = lat[model].per_window;
          o.detail << " " << model << " " << fmt(w.mean_ms, 4) << " +- " << fmt(w.std_ms, 4) << " ms/window (p99 " << fmt(w.p99_ms, 4) << ");";
          o.require(w.mean_ms < 50.0, model + " < 50 ms");
        }
        o.require(lat["linear"].per_window.mean_ms < lat["cnnatt"].per_window.mean_ms, "linear < cnnatt");
        o.detail << " EEG+fNIRS windows, linear < cnnatt < 50 ms";
      },
      0.0);

  report(
      "A10", "determinism",
      [&](Outcome& o) {
        const fs::path root = fs::temp_directory_path() / ("bimodec_a10_" + std::to_string(::getpid()));
        fs::remove_all(root);
        const std::string data = (root / "data").string();
        o.require(run_cli("synth --out " + data + " --trials-per-condition 8") == 0, "synth");
        const std::string common = " --data " + data + " --seed 42 --max-epochs 5";
        o.require(run_cli("run --out " + (root / "a").string() + common + " --threads 1") == 0, "first run");
        o.require(run_cli("run --out " + (root / "b").string() + common + " --threads 2") == 0, "second run");
        int same = 0, files = 0;
        for (const auto& e : fs::directory_iterator(root / "a")) {
          const auto name = e.path().filename().string();
          if (name == "run_meta.json") continue;  // wall-clock timestamps
          ++files;
          const bool eq = slurp(e.path()) == slurp(root / "b" / name) && !slurp(e.path()).empty();
          same += eq;
          o.require(eq, name + " identical");
        }
        o.require(files >= 5, "outputs present");
        o.detail << " cmd_run twice on the same dataset and seed (1 and 2 threads): " << same << "/" << files
                 << " files byte-identical (run_meta.json holds the timestamps and is excluded)";
        fs::remove_all(root);
      },
      0.0);

  if (!session_error.empty()) std::cout << "note: default session error: " << session_error << std::endl;
  // margins for pinning
  if (session_error.empty()) {
    nlohmann::json m;
    for (const std::string model : {"linear", "cnnatt"}) {
      const double b = mean_fvaf(main_run, "both", model);
      m[model] = {{"margin_eeg", b - mean_fvaf(main_run, "eeg", model)}, {"margin_fnirs", b - mean_fvaf(main_run, "fnirs", model)}};
    }
    std::cout << "A5 margins: " << m.dump() << std::endl;
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
