// Acceptance gate for the laboratory: thirteen numbered end-to-end checks,
// each printing a single PASS/FAIL line. Run `setup` once to generate the
// shared fixtures and configs, then each criterion by number.
//
//   falab-acceptance <setup|1..13> <work-dir> <cli-path>
//
// Criteria 1, 6 and 8 run in process against the library; the rest drive the
// installed CLI and assert on its CSV/JSON artifacts.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "falab/gaussian_integrals.hpp"
#include "falab/metrics.hpp"
#include "falab/trainers.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace falab;

namespace {

struct Ctx {
  fs::path work;
  std::string cli;
};

struct Checker {
  int criterion = 0;
  std::vector<std::string> failures;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
  int finish(const std::string& summary) {
    if (failures.empty()) {
      std::printf("PASS criterion %d: %s (%.1fs)\n", criterion, summary.c_str(),
                  elapsed());
      return 0;
    }
    std::string joined = failures.front();
    for (std::size_t i = 1; i < failures.size(); ++i) joined += "; " + failures[i];
    std::printf("FAIL criterion %d: %s (%.1fs)\n", criterion, joined.c_str(), elapsed());
    return 1;
  }
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Runs one CLI invocation, teeing output to a log file; aborts the criterion
/// with the log tail on a nonzero exit.
void run_cli(const Ctx& ctx, Checker& ck, const std::string& args,
             const std::string& tag) {
  const fs::path log = ctx.work / "logs" / (tag + ".log");
  fs::create_directories(log.parent_path());
  const std::string cmd = "'" + ctx.cli + "' " + args + " > " + q(log) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  const int code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  if (code != 0) {
    std::string tail;
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) tail = line;
    ck.require(false, tag + " exited " + std::to_string(code) + " (" + tail + ")");
  }
}

void run_experiment(const Ctx& ctx, Checker& ck, const std::string& sub,
                    const fs::path& config, const fs::path& out,
                    const std::string& tag) {
  fs::remove_all(out);
  run_cli(ctx, ck, sub + " --config " + q(config) + " --out " + q(out), tag);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error(p.string() + ": cannot open");
  json j;
  in >> j;
  return j;
}

void write_config(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << '\n';
}

fs::path config_path(const Ctx& ctx, const std::string& name) {
  return ctx.work / "configs" / (name + ".json");
}

std::vector<double> finite(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// setup: fixtures and configs shared by the CLI-driven criteria.

json mnist_dataset(const Ctx& ctx, std::size_t samples) {
  return {{"kind", "idx"},
          {"images", (ctx.work / "fixtures/mnist/images-idx3-ubyte").string()},
          {"labels", (ctx.work / "fixtures/mnist/labels-idx1-ubyte").string()},
          {"samples", samples},
          {"downscale", 14}};
}

json cifar_dataset(const Ctx& ctx, std::size_t samples) {
  return {{"kind", "cifar10"},
          {"batches", {(ctx.work / "fixtures/cifar/data_batch_1.bin").string()}},
          {"samples", samples},
          {"downscale", 14}};
}

int do_setup(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 0;
  fs::remove_all(ctx.work);
  fs::create_directories(ctx.work / "configs");
  fs::create_directories(ctx.work / "out");

  run_cli(ctx, ck,
          "mkdata --kind mnist --out " + q(ctx.work / "fixtures/mnist") +
              " --samples 10000 --classes 10 --noise 0.25 --seed 7",
          "mkdata-mnist");
  run_cli(ctx, ck,
          "mkdata --kind cifar10 --out " + q(ctx.work / "fixtures/cifar") +
              " --samples 2000 --batches 1 --classes 10 --noise 0.8 --seed 11",
          "mkdata-cifar");

  write_config(config_path(ctx, "c2_paired"),
               {{"experiment", "ode"},
                {"seed", 1},
                {"algorithm", "dfa"},
                {"activation", "erf"},
                {"student_hidden", 2},
                {"teacher_hidden", 2},
                {"lr", 0.1},
                {"alpha_max", 5000},
                {"d_alpha", 0.01},
                {"log_every_alpha", 10},
                {"feedback", "gaussian"},
                {"simulation",
                 {{"input_dim", 500}, {"init_std", 0.01}, {"mc_eg_samples", 0}}}});
  for (const std::string algo : {"dfa", "bp"})
    write_config(config_path(ctx, "c2_ode_" + algo),
                 {{"experiment", "ode"},
                  {"seed", 1},
                  {"algorithm", algo},
                  {"activation", "erf"},
                  {"student_hidden", 2},
                  {"teacher_hidden", 2},
                  {"lr", 0.1},
                  {"alpha_max", 10000},
                  {"d_alpha", 0.01},
                  {"log_every_alpha", 250},
                  {"feedback", "gaussian"},
                  {"init", "random"},
                  {"init_std", 0.01},
                  {"init_dim", 500}});

  write_config(config_path(ctx, "c3_ts"), {{"experiment", "teacher-student"},
                                           {"seed", 42},
                                           {"algorithm", "dfa"},
                                           {"activation", "erf"},
                                           {"student_hidden", 2},
                                           {"teacher_hidden", 2},
                                           {"input_dim", 500},
                                           {"lr", 0.1},
                                           {"alpha_max", 400},
                                           {"log_every_alpha", 2},
                                           {"init_std", 0.001},
                                           {"init_std_w2", 0.0},
                                           {"feedback", "abs"},
                                           {"seeds", 10},
                                           {"mc_eg_samples", 0}});

  write_config(config_path(ctx, "c4_ode"), {{"experiment", "ode"},
                                            {"seed", 1},
                                            {"algorithm", "dfa"},
                                            {"activation", "erf"},
                                            {"student_hidden", 2},
                                            {"teacher_hidden", 2},
                                            {"lr", 0.05},
                                            {"alpha_max", 8000},
                                            {"d_alpha", 0.01},
                                            {"log_every_alpha", 10},
                                            {"feedback_values", {1.0, 1.0}},
                                            {"init", "zero"}});

  write_config(
      config_path(ctx, "c5_plearn"),
      {{"experiment", "plearn"},
       {"seed", 7},
       {"cells", {{3, 2}, {4, 2}, {4, 4}}},
       {"trials", 50},
       {"input_dim", 200},
       {"lr", 0.1},
       {"init_std", 0.01},
       {"alpha_max", 2000},
       {"threshold", 0.001},
       {"eg_samples", 40000},
       {"forced",
        {{{"k", 3}, {"m", 2}, {"positive", 2}, {"runs", 10}},
         {{"k", 3}, {"m", 2}, {"positive", 0}, {"runs", 10}}}}});

  write_config(config_path(ctx, "c7_lw"), {{"experiment", "linear-wa"},
                                           {"seed", 5},
                                           {"algorithm", "dfa"},
                                           {"widths", {20, 15, 12, 8, 1}},
                                           {"lr", 0.01},
                                           {"steps", 60},
                                           {"batch_size", 4},
                                           {"feedback_init", "gaussian"},
                                           {"use_grams", true},
                                           {"log_every", 1}});

  for (const std::string algo : {"dfa", "bp"})
    write_config(config_path(ctx, "c9_" + algo),
                 {{"experiment", "deep"},
                  {"seed", 1},
                  {"algorithm", algo},
                  {"activation", "tanh"},
                  {"loss", "ce"},
                  {"hidden", {100, 100, 100}},
                  {"lr", 0.001},
                  {"init_std", 0.04},
                  {"batch_size", 32},
                  {"epochs", 100},
                  {"log_every", 100},
                  {"track_alignment", false},
                  {"pairs", 5},
                  {"dataset", mnist_dataset(ctx, 10000)}});

  write_config(config_path(ctx, "c10_tanh"), {{"experiment", "deep"},
                                              {"seed", 1},
                                              {"algorithm", "dfa"},
                                              {"activation", "tanh"},
                                              {"loss", "ce"},
                                              {"hidden", {100, 100, 100}},
                                              {"lr", 0.003},
                                              {"init_std", 0.04},
                                              {"batch_size", 32},
                                              {"epochs", 400},
                                              {"log_every", 1},
                                              {"probe_samples", 512},
                                              {"dataset", cifar_dataset(ctx, 2000)}});
  json c10_relu_ds = cifar_dataset(ctx, 1000);
  c10_relu_ds["corruption"] = 0.1;
  write_config(config_path(ctx, "c10_relu"), {{"experiment", "deep"},
                                              {"seed", 1},
                                              {"algorithm", "dfa"},
                                              {"activation", "relu"},
                                              {"loss", "ce"},
                                              {"hidden", {100, 100, 100}},
                                              {"lr", 0.01},
                                              {"init_std", 0.04},
                                              {"batch_size", 32},
                                              {"epochs", 400},
                                              {"log_every", 5},
                                              {"probe_samples", 512},
                                              {"track_alignment", true},
                                              {"dataset", c10_relu_ds}});

  write_config(config_path(ctx, "c11_ab"), {{"experiment", "alphabeta"},
                                            {"seed", 3},
                                            {"algorithm", "dfa"},
                                            {"activation", "relu"},
                                            {"loss", "mse"},
                                            {"hidden", {100, 100}},
                                            {"lr", 0.005},
                                            {"init_std", 0.01},
                                            {"batch_size", 32},
                                            {"epochs", 2500},
                                            {"log_every", 1000},
                                            {"probe_samples", 512},
                                            {"track_alignment", true},
                                            {"grid", {0.2, 0.4, 0.6, 0.8, 1.0}},
                                            {"seeds", 3},
                                            {"samples", 500},
                                            {"input_dim", 10}});
  write_config(config_path(ctx, "c11_drtp"), {{"experiment", "linear-wa"},
                                              {"seed", 11},
                                              {"algorithm", "drtp"},
                                              {"widths", {10, 30, 2}},
                                              {"lr", 0.005},
                                              {"steps", 40},
                                              {"batch_size", 65536},
                                              {"feedback_init", "gaussian"},
                                              {"use_grams", true},
                                              {"log_every", 10}});

  write_config(config_path(ctx, "c12_corr"), {{"experiment", "corruption"},
                                              {"seed", 5},
                                              {"algorithm", "dfa"},
                                              {"activation", "tanh"},
                                              {"loss", "ce"},
                                              {"hidden", {100, 100, 100}},
                                              {"lr", 0.003},
                                              {"init_std", 0.04},
                                              {"batch_size", 32},
                                              {"epochs", 150},
                                              {"log_every", 1},
                                              {"probe_samples", 512},
                                              {"corruptions", {0.0, 0.5, 0.9}},
                                              {"wa_threshold", 0.2},
                                              {"dataset", mnist_dataset(ctx, 4000)}});

  write_config(config_path(ctx, "c13_deep"), {{"experiment", "deep"},
                                              {"seed", 77},
                                              {"algorithm", "dfa"},
                                              {"activation", "tanh"},
                                              {"loss", "ce"},
                                              {"hidden", {30, 30}},
                                              {"lr", 0.003},
                                              {"init_std", 0.04},
                                              {"batch_size", 32},
                                              {"epochs", 10},
                                              {"log_every", 1},
                                              {"probe_samples", 256},
                                              {"checkpoint_every", 5},
                                              {"track_alignment", true},
                                              {"dataset", mnist_dataset(ctx, 1000)}});
  write_config(config_path(ctx, "c13_ode"),
               {{"experiment", "ode"},
                {"seed", 9},
                {"algorithm", "dfa"},
                {"activation", "erf"},
                {"student_hidden", 2},
                {"teacher_hidden", 2},
                {"lr", 0.1},
                {"alpha_max", 50},
                {"d_alpha", 0.01},
                {"log_every_alpha", 1},
                {"feedback", "gaussian"},
                {"simulation",
                 {{"input_dim", 500}, {"init_std", 0.001}, {"mc_eg_samples", 0}}}});

  if (ck.failures.empty()) {
    std::printf("PASS setup: fixtures and configs written to %s (%.1fs)\n",
                ctx.work.string().c_str(), ck.elapsed());
    return 0;
  }
  std::printf("FAIL setup: %s\n", ck.failures.front().c_str());
  return 1;
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients against centered finite differences.

struct GradProblem {
  MlpParams params;
  Matrix x, y;
  ErrorKind loss;
};

GradProblem make_grad_problem(ActivationKind g, ErrorKind loss, unsigned seed) {
  GradProblem pr;
  pr.loss = loss;
  const OutputMap out = loss == ErrorKind::Mse ? OutputMap::Identity : OutputMap::Softmax;
  Rng rng(seed);
  InitSpec init;
  init.stddev = 0.7;
  pr.params = make_mlp({5, 4, 3, 2}, g, out, true, init, rng);
  pr.x = gaussian_matrix(rng, 3, 5, 1.0);
  if (loss == ErrorKind::Mse) {
    pr.y = gaussian_matrix(rng, 3, 2, 1.0);
  } else {
    pr.y = Matrix(3, 2);
    for (std::size_t i = 0; i < 3; ++i) pr.y(i, rng.uniform_int(2)) = 1.0;
  }
  return pr;
}

double grad_mismatch(GradProblem pr) {
  const double h = 1e-6;
  const auto batch_loss = [&] {
    const ForwardTrace t = forward(pr.params, pr.x);
    return loss_value(pr.params, t, pr.y, pr.loss) * static_cast<double>(pr.x.rows);
  };
  const ForwardTrace t = forward(pr.params, pr.x);
  const Matrix e = error_signal(pr.params, t, pr.y, pr.loss);
  const LayerDeltas d = bp_deltas(pr.params, t, e, 1.0);
  double worst = 0.0;
  const auto probe = [&](double& w, double analytic) {
    const double keep = w;
    w = keep + h;
    const double up = batch_loss();
    w = keep - h;
    const double down = batch_loss();
    w = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic - fd) / (std::abs(fd) + 1e-4));
  };
  for (std::size_t l = 0; l < pr.params.depth(); ++l) {
    for (std::size_t i = 0; i < pr.params.weights[l].size(); ++i)
      probe(pr.params.weights[l].data[i], -d.delta_w[l].data[i]);
    for (std::size_t j = 0; j < pr.params.biases[l].size(); ++j)
      probe(pr.params.biases[l][j], -d.delta_b[l][j]);
  }
  return worst;
}

int c1(const Ctx&) {
  Checker ck;
  ck.criterion = 1;
  const ActivationKind kinds[] = {ActivationKind::ScaledErf, ActivationKind::ReLU,
                                  ActivationKind::Tanh, ActivationKind::Linear};
  double worst = 0.0;
  unsigned seed = 11000;
  for (ActivationKind g : kinds)
    for (ErrorKind loss : {ErrorKind::Mse, ErrorKind::SoftmaxCrossEntropy})
      worst = std::max(worst, grad_mismatch(make_grad_problem(g, loss, seed++)));
  ck.require(worst < 1e-5, "max relative gradient error " + fmt(worst) + " >= 1e-5");
  ck.require(ck.elapsed() < 1.0, "runtime exceeded 1s");
  return ck.finish("analytic vs finite-difference gradients, max rel err " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 2. ODE trajectories against a matched finite simulation.

int c2(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 2;
  const fs::path out = ctx.work / "out/c2";
  run_experiment(ctx, ck, "ode", config_path(ctx, "c2_paired"), out / "paired",
                 "c2-paired");
  run_experiment(ctx, ck, "ode", config_path(ctx, "c2_ode_dfa"), out / "ode_dfa",
                 "c2-ode-dfa");
  run_experiment(ctx, ck, "ode", config_path(ctx, "c2_ode_bp"), out / "ode_bp",
                 "c2-ode-bp");
  if (!ck.failures.empty()) return ck.finish("");

  const json paired = read_json(out / "paired/summary.json");
  const double gap = paired.at("max_eg_gap").get<double>();
  ck.require(gap < 0.05, "sim-vs-ode eg gap " + fmt(gap) + " >= 0.05");
  const double eg_dfa = read_json(out / "ode_dfa/summary.json").at("final_eg");
  const double eg_bp = read_json(out / "ode_bp/summary.json").at("final_eg");
  ck.require(eg_dfa < 1e-4, "final eg (dfa ode) " + fmt(eg_dfa) + " >= 1e-4");
  ck.require(eg_bp < 1e-4, "final eg (bp ode) " + fmt(eg_bp) + " >= 1e-4");
  return ck.finish("sim-vs-ode max eg gap " + fmt(gap) + ", final eg dfa " +
                   fmt(eg_dfa) + " bp " + fmt(eg_bp));
}

// ---------------------------------------------------------------------------
// 3. Second-layer/feedback cosine: interior maximum, then sign-locked finish.

int c3(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 3;
  const fs::path out = ctx.work / "out/c3";
  run_experiment(ctx, ck, "teacher-student", config_path(ctx, "c3_ts"), out, "c3-ts");
  if (!ck.failures.empty()) return ck.finish("");

  const json summary = read_json(out / "summary.json");
  const auto& runs = summary.at("runs");
  double min_peak = 1.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const CsvTable t = read_csv((out / ("run_" + std::to_string(i)) / "trajectory.csv")
                                    .string());
    const std::vector<double> cos = finite(t.column("cos_w2_f1"));
    if (cos.size() < 3) {
      ck.require(false, "run " + std::to_string(i) + ": too few cosine samples");
      continue;
    }
    const std::size_t peak = argmax(cos);
    min_peak = std::min(min_peak, cos[peak]);
    ck.require(cos[peak] > 0.99,
               "run " + std::to_string(i) + ": peak cosine " + fmt(cos[peak]) +
                   " <= 0.99");
    ck.require(peak > 0 && peak + 1 < cos.size(),
               "run " + std::to_string(i) + ": cosine peak not interior");
    ck.require(cos.back() < cos[peak],
               "run " + std::to_string(i) + ": no decline after the peak");
    const int matches = runs[i].at("sign_matches").get<int>();
    ck.require(matches == 2, "run " + std::to_string(i) + ": sign matches " +
                                 std::to_string(matches) + "/2");
  }
  ck.require(runs.size() == 10, "expected 10 runs");
  return ck.finish("interior cosine peak then decline, min peak " + fmt(min_peak) +
                   ", feedback signs reproduced 10/10");
}

// ---------------------------------------------------------------------------
// 4. Symmetric plateau fixed point of the two-node flow.

int c4(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 4;
  const fs::path out = ctx.work / "out/c4";
  run_experiment(ctx, ck, "ode", config_path(ctx, "c4_ode"), out, "c4-ode");
  if (!ck.failures.empty()) return ck.finish("");
  const double dev = read_json(out / "summary.json").at("plateau_min_rel_dev");
  ck.require(dev < 0.10, "closest plateau approach " + fmt(dev) + " >= 10%");
  return ck.finish("trajectory approaches the symmetric plateau within " + fmt(dev) +
                   " relative");
}

// ---------------------------------------------------------------------------
// 5. Sign-dependent learnability of relu students under fixed feedback.

int c5(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 5;
  const fs::path out = ctx.work / "out/c5";
  run_experiment(ctx, ck, "plearn", config_path(ctx, "c5_plearn"), out, "c5-plearn");
  if (!ck.failures.empty()) return ck.finish("");

  const CsvTable forced = read_csv((out / "forced.csv").string());
  const auto pos = forced.column("positive");
  const auto eg = forced.column("final_eg");
  int n2 = 0, n0 = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i] == 2.0) {
      ++n2;
      ck.require(eg[i] < 1e-3, "forced 2-positive run " + std::to_string(i) +
                                   ": eg " + fmt(eg[i]) + " >= 1e-3");
    } else {
      ++n0;
      ck.require(eg[i] > 1e-2, "forced 0-positive run " + std::to_string(i) +
                                   ": eg " + fmt(eg[i]) + " <= 1e-2");
    }
  }
  ck.require(n2 == 10 && n0 == 10, "expected 10 forced runs per sign pattern");

  const json summary = read_json(out / "summary.json");
  std::printf("  K M  P(learn)  empirical\n");
  double f32 = -1.0;
  for (const auto& cell : summary.at("cells")) {
    const int k = cell.at("k"), m = cell.at("m");
    const double f = cell.at("formula"), e = cell.at("empirical");
    if (k == 3 && m == 2) f32 = f;
    std::printf("  %d %d  %.6f  %.2f%s\n", k, m, f, e,
                k == m ? "  (K=M: known formula/simulation discrepancy, reported only)"
                       : "");
  }
  ck.require(std::fabs(f32 - 0.875) < 1e-12,
             "P(learn) formula at K=3, M=2 is " + fmt(f32) + ", expected 0.875");
  return ck.finish(
      "forced-sign runs separate cleanly (2 positive learn, 0 positive stall), "
      "probability table above");
}

// ---------------------------------------------------------------------------
// 6. Factorization of trained linear weights through the feedback matrices.

int c6(const Ctx&) {
  Checker ck;
  ck.criterion = 6;
  const std::vector<std::size_t> widths{6, 5, 4, 3, 2};
  double worst_res = 0.0, worst_diff = 0.0;
  for (const auto algo : {testutil::DeepAlgoLike::Dfa, testutil::DeepAlgoLike::Fa}) {
    const char* name = algo == testutil::DeepAlgoLike::Dfa ? "dfa" : "fa";
    Rng rng(algo == testutil::DeepAlgoLike::Dfa ? 601u : 602u);
    const auto run = testutil::train_linear_recorded(widths, algo, 200, 1, 0.01, rng);

    AlignmentAccumulator acc(widths, run.lr_eff, feedback_grams(run.direct));
    for (const auto& rec : run.history) acc.step(rec.x, rec.e);
    const auto residuals = weak_alignment_residuals(run.params, run.direct, acc.state());
    for (std::size_t l = 0; l < residuals.size(); ++l) {
      worst_res = std::max(worst_res, residuals[l]);
      ck.require(residuals[l] < 1e-8, std::string(name) + " layer " +
                                          std::to_string(l + 1) + " residual " +
                                          fmt(residuals[l]) + " >= 1e-8");
    }

    const auto brute = testutil::brute_force_alignment(run.history, widths, run.lr_eff,
                                                       feedback_grams(run.direct));
    double diff = testutil::max_abs_diff(acc.state().a1, brute.a1);
    for (std::size_t l = 0; l < brute.a.size(); ++l)
      diff = std::max(diff, testutil::max_abs_diff(acc.state().a[l], brute.a[l]));
    worst_diff = std::max(worst_diff, diff);
    ck.require(diff < 1e-10, std::string(name) + ": incremental vs brute-force gap " +
                                 fmt(diff) + " >= 1e-10");
  }
  ck.require(ck.elapsed() < 10.0, "runtime exceeded 10s");
  return ck.finish("weight factorization residual max " + fmt(worst_res) +
                   ", incremental vs brute-force max gap " + fmt(worst_diff));
}

// ---------------------------------------------------------------------------
// 7. Scalar-output linear nets keep every layerwise gradient cosine at one.

int c7(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 7;
  const fs::path out = ctx.work / "out/c7";
  run_experiment(ctx, ck, "linear-wa", config_path(ctx, "c7_lw"), out, "c7-lw");
  if (!ck.failures.empty()) return ck.finish("");

  // The first few updates out of the zero init leave the backward chain a
  // near-zero vector whose cosine sign is not yet settled; the scalar
  // guarantee concerns the formed network, so allow a 10-step burn-in.
  const std::size_t burn_in = 10;
  const CsvTable t = read_csv((out / "residuals.csv").string());
  const auto steps = t.column("step");
  double dev = 0.0;
  std::size_t checked = 0;
  for (std::size_t layer = 1;; ++layer) {
    const std::string col = "ga_" + std::to_string(layer);
    if (std::find(t.columns.begin(), t.columns.end(), col) == t.columns.end()) break;
    const auto ga = t.column(col);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (steps[i] < static_cast<double>(burn_in)) continue;
      ++checked;
      dev = std::max(dev, std::fabs(ga[i] - 1.0));
    }
  }
  ck.require(checked >= 100, "too few logged steps (" + std::to_string(checked) + ")");
  ck.require(dev < 1e-8, "max |ga - 1| " + fmt(dev) + " >= 1e-8");
  return ck.finish("single-output net keeps per-step layerwise ga at 1 after a "
                   "10-step burn-in (max dev " +
                   fmt(dev) + " over " + std::to_string(checked) + " checks)");
}

// ---------------------------------------------------------------------------
// 8. Closed-form gaussian expectations against heavy Monte-Carlo.

int c8(const Ctx&) {
  Checker ck;
  ck.criterion = 8;
  const std::size_t samples = 10000000;
  const ActivationKind g = ActivationKind::ScaledErf;
  double worst_z = 0.0;
  for (std::size_t arity : {2u, 3u, 4u}) {
    Rng rng(800 + arity);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix cov = testutil::random_psd(rng, arity);
      double closed = 0.0;
      testutil::McResult mc;
      if (arity == 2) {
        closed = i2(g, cov(0, 0), cov(0, 1), cov(1, 1));
        mc = testutil::mc_expect(cov, samples, rng, [&](const double* u) {
          return activation(g, u[0]) * activation(g, u[1]);
        });
      } else if (arity == 3) {
        closed = i3(g, cov);
        mc = testutil::mc_expect(cov, samples, rng, [&](const double* u) {
          return activation_derivative(g, u[0]) * u[1] * activation(g, u[2]);
        });
      } else {
        closed = i4(g, cov);
        mc = testutil::mc_expect(cov, samples, rng, [&](const double* u) {
          return activation_derivative(g, u[0]) * activation_derivative(g, u[1]) *
                 activation(g, u[2]) * activation(g, u[3]);
        });
      }
      const double z = std::fabs(closed - mc.mean) / mc.std_error;
      worst_z = std::max(worst_z, z);
      ck.require(z < 4.0, "arity " + std::to_string(arity) + " rep " +
                              std::to_string(rep) + ": |closed - mc| = " +
                              fmt(std::fabs(closed - mc.mean)) + " is " + fmt(z) +
                              " standard errors");
    }
  }
  ck.require(ck.elapsed() < 120.0, "runtime exceeded 2min");
  return ck.finish("all 60 closed forms within 4 standard errors of 1e7-sample "
                   "monte-carlo (worst " +
                   fmt(worst_z) + ")");
}

// ---------------------------------------------------------------------------
// 9. Feedback pins the learned weights: interrun cosine splits by rule.

int c9(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 9;
  const fs::path out = ctx.work / "out/c9";
  run_experiment(ctx, ck, "deep", config_path(ctx, "c9_dfa"), out / "dfa", "c9-dfa");
  run_experiment(ctx, ck, "deep", config_path(ctx, "c9_bp"), out / "bp", "c9-bp");
  if (!ck.failures.empty()) return ck.finish("");

  const auto cosines = [&](const fs::path& dir) {
    return read_csv((dir / "pairs.csv").string()).column("interrun_cos");
  };
  const auto dfa = cosines(out / "dfa");
  const auto bp = cosines(out / "bp");
  ck.require(dfa.size() == 5 && bp.size() == 5, "expected 5 pairs per rule");
  double dfa_min = 1.0, bp_max = 0.0;
  for (double c : dfa) {
    dfa_min = std::min(dfa_min, c);
    ck.require(c >= 0.3, "shared-feedback pair cosine " + fmt(c) + " < 0.3");
  }
  for (double c : bp) {
    bp_max = std::max(bp_max, std::fabs(c));
    ck.require(std::fabs(c) <= 0.05, "bp pair cosine " + fmt(c) + " > 0.05");
  }
  return ck.finish("same-feedback pairs collapse together (min cos " + fmt(dfa_min) +
                   "), bp pairs stay apart (max |cos| " + fmt(bp_max) + ")");
}

// ---------------------------------------------------------------------------
// 10. Deep alignment dynamics on the image stand-ins.

int c10(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 10;
  const fs::path out = ctx.work / "out/c10";
  run_experiment(ctx, ck, "deep", config_path(ctx, "c10_tanh"), out / "tanh",
                 "c10-tanh");
  run_experiment(ctx, ck, "deep", config_path(ctx, "c10_relu"), out / "relu",
                 "c10-relu");
  if (!ck.failures.empty()) return ck.finish("");

  const CsvTable tanh_csv = read_csv((out / "tanh/run_0/metrics.csv").string());
  const std::vector<double> wa = finite(tanh_csv.column("wa_global"));
  const std::size_t peak = argmax(wa);
  std::printf("  tanh run: wa_global argmax at log row %zu of %zu (peak %.4f, final "
              "%.4f)\n",
              peak, wa.size() - 1, wa[peak], wa.back());
  ck.require(peak > 0 && peak + 1 < wa.size() && wa.back() < wa[peak],
             "wa_global argmax is not strictly interior (rises monotonically at this "
             "scale)");

  std::ifstream jl(out / "relu/run_0/metrics.jsonl");
  std::string line;
  std::vector<std::vector<double>> wa_layer;
  std::vector<double> epochs;
  while (std::getline(jl, line)) {
    const json row = json::parse(line);
    if (!row.contains("wa_layer")) continue;
    wa_layer.push_back(row.at("wa_layer").get<std::vector<double>>());
    epochs.push_back(row.at("epoch").get<double>());
  }
  ck.require(!wa_layer.empty() && wa_layer.front().size() >= 3,
             "relu run logged no layerwise alignment");
  if (!wa_layer.empty() && wa_layer.front().size() >= 3) {
    std::vector<double> l2, l3, top;
    for (const auto& v : wa_layer) {
      l2.push_back(v[0]);
      l3.push_back(v[1]);
      top.push_back(v[v.size() - 1]);
    }
    const double ep2 = epochs[argmax(l2)], ep3 = epochs[argmax(l3)];
    ck.require(ep2 <= ep3, "layer argmax epochs out of order: " + fmt(ep2) + " > " +
                               fmt(ep3));
    double worst_step = 0.0;
    for (std::size_t i = 1; i < top.size(); ++i)
      worst_step = std::min(worst_step, top[i] - top[i - 1]);
    ck.require(worst_step > -2e-3,
               "top-layer alignment decreases by " + fmt(-worst_step) + " in one step");
    std::printf("  relu run: layer argmax epochs %.0f <= %.0f, top-layer worst step "
                "%+.2e\n",
                ep2, ep3, worst_step);
  }
  return ck.finish("tanh trajectory peaks strictly inside the run; relu layerwise "
                   "order and top-layer monotonicity hold");
}

// ---------------------------------------------------------------------------
// 11. Target statistics condition alignment; closed-form integrated updates.

int c11(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 11;
  const fs::path out = ctx.work / "out/c11";
  run_experiment(ctx, ck, "alphabeta", config_path(ctx, "c11_ab"), out / "grid",
                 "c11-grid");
  run_experiment(ctx, ck, "linear-wa", config_path(ctx, "c11_drtp"), out / "drtp",
                 "c11-drtp");
  if (!ck.failures.empty()) return ck.finish("");

  const json grid_summary = read_json(out / "grid/summary.json");
  std::map<std::pair<double, double>, double> ga;
  std::vector<double> axis;
  for (const auto& cell : grid_summary.at("cells")) {
    const double a = cell.at("alpha"), b = cell.at("beta");
    ga[{a, b}] = cell.at("ga_mean").get<double>();
    if (std::find(axis.begin(), axis.end(), a) == axis.end()) axis.push_back(a);
  }
  std::sort(axis.begin(), axis.end());

  // Noise band: twice the largest per-cell standard error across the grid.
  const CsvTable heat = read_csv((out / "grid/heatmap.csv").string());
  const auto ha = heat.column("alpha");
  const auto hb = heat.column("beta");
  const auto hg = heat.column("ga_global");
  std::map<std::pair<double, double>, std::vector<double>> per_cell;
  for (std::size_t i = 0; i < hg.size(); ++i) per_cell[{ha[i], hb[i]}].push_back(hg[i]);
  double band = 0.0;
  for (const auto& [key, vals] : per_cell) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    band = std::max(band, 2.0 * std::sqrt(var / static_cast<double>(vals.size())));
  }

  const double corner = ga[{1.0, 1.0}];
  double grid_max = -1.0;
  for (const auto& [key, v] : ga) grid_max = std::max(grid_max, v);
  ck.require(corner >= grid_max - band, "ga at (1,1) " + fmt(corner) +
                                            " below grid max " + fmt(grid_max) +
                                            " by more than the noise band " + fmt(band));
  for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
    const double lo_a = ga[{axis[i], 1.0}], hi_a = ga[{axis[i + 1], 1.0}];
    ck.require(lo_a <= hi_a + band, "ga(alpha=" + fmt(axis[i]) + ", beta=1) " +
                                        fmt(lo_a) + " exceeds ga(alpha=" +
                                        fmt(axis[i + 1]) + ") + band");
    const double lo_b = ga[{1.0, axis[i]}], hi_b = ga[{1.0, axis[i + 1]}];
    ck.require(lo_b <= hi_b + band, "ga(alpha=1, beta=" + fmt(axis[i]) + ") " +
                                        fmt(lo_b) + " exceeds ga(beta=" +
                                        fmt(axis[i + 1]) + ") + band");
  }
  std::printf("  grid: ga(1,1) %.4f, grid max %.4f, noise band %.4f\n", corner,
              grid_max, band);

  const json drtp = read_json(out / "drtp/summary.json");
  const double rate_err = drtp.at("a2_rate_rel_error");
  const double a2_err = drtp.at("a2_rel_error");
  ck.require(rate_err < 0.02, "integrated-update growth-rate error " + fmt(rate_err) +
                                  " >= 2%");
  return ck.finish("ga grid peaks at (1,1) within noise band " + fmt(band) +
                   "; drtp per-step closed form within " + fmt(rate_err) +
                   " (cumulative " + fmt(a2_err) + ")");
}

// ---------------------------------------------------------------------------
// 12. Label corruption delays and weakens alignment.

int c12(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 12;
  const fs::path out = ctx.work / "out/c12";
  run_experiment(ctx, ck, "corruption", config_path(ctx, "c12_corr"), out, "c12-corr");
  if (!ck.failures.empty()) return ck.finish("");

  const json summary = read_json(out / "summary.json");
  struct Level {
    double p, final_wa, first_epoch;
  };
  std::vector<Level> levels;
  for (const auto& lev : summary.at("levels")) {
    Level l;
    l.p = lev.at("p");
    l.final_wa = lev.at("final_wa_global");
    l.first_epoch = lev.at("first_epoch_wa_above_threshold").is_null()
                        ? std::numeric_limits<double>::infinity()
                        : lev.at("first_epoch_wa_above_threshold").get<double>();
    levels.push_back(l);
    std::printf("  p=%.1f: first epoch above 0.2 = %s, final wa %.4f\n", l.p,
                std::isinf(l.first_epoch) ? "never" : fmt(l.first_epoch).c_str(),
                l.final_wa);
  }
  std::sort(levels.begin(), levels.end(),
            [](const Level& a, const Level& b) { return a.p < b.p; });
  ck.require(levels.size() == 3, "expected 3 corruption levels");
  ck.require(std::isfinite(levels.front().first_epoch),
             "clean run never crossed the alignment threshold");
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    ck.require(levels[i].first_epoch <= levels[i + 1].first_epoch,
               "threshold crossing not delayed from p=" + fmt(levels[i].p) + " to p=" +
                   fmt(levels[i + 1].p));
    ck.require(levels[i].final_wa >= levels[i + 1].final_wa,
               "final alignment not reduced from p=" + fmt(levels[i].p) + " to p=" +
                   fmt(levels[i + 1].p));
  }
  return ck.finish("corruption delays the alignment rise and lowers its final level");
}

// ---------------------------------------------------------------------------
// 13. Bit-identical reruns.

int c13(const Ctx& ctx) {
  Checker ck;
  ck.criterion = 13;
  const fs::path out = ctx.work / "out/c13";

  const auto compare_dirs = [&](const fs::path& a, const fs::path& b,
                                const std::string& tag) {
    std::vector<fs::path> rel;
    for (const auto& entry : fs::recursive_directory_iterator(a))
      if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), a));
    std::sort(rel.begin(), rel.end());
    ck.require(!rel.empty(), tag + ": first run produced no files");
    for (const auto& r : rel) {
      if (!fs::exists(b / r)) {
        ck.require(false, tag + ": rerun is missing " + r.string());
        continue;
      }
      std::ifstream fa(a / r, std::ios::binary), fb(b / r, std::ios::binary);
      std::ostringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      ck.require(sa.str() == sb.str(), tag + ": " + r.string() + " differs between "
                                             "identically seeded runs");
    }
  };

  for (const auto& [name, sub] :
       std::vector<std::pair<std::string, std::string>>{{"c13_deep", "deep"},
                                                        {"c13_ode", "ode"}}) {
    run_experiment(ctx, ck, sub, config_path(ctx, name), out / (name + "_a"),
                   name + "-a");
    run_experiment(ctx, ck, sub, config_path(ctx, name), out / (name + "_b"),
                   name + "-b");
    if (ck.failures.empty())
      compare_dirs(out / (name + "_a"), out / (name + "_b"), name);
  }
  return ck.finish("identically seeded reruns reproduce every output file "
                   "byte-for-byte");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 4) {
    std::fprintf(stderr, "usage: %s <setup|1..13> <work-dir> <cli-path>\n", argv[0]);
    return 2;
  }
  Ctx ctx;
  ctx.work = argv[2];
  ctx.cli = argv[3];
  const std::string mode = argv[1];
  try {
    if (mode == "setup") return do_setup(ctx);
    const std::function<int(const Ctx&)> criteria[] = {c1, c2, c3, c4, c5, c6, c7,
                                                       c8, c9, c10, c11, c12, c13};
    const int n = std::atoi(mode.c_str());
    if (n < 1 || n > 13) {
      std::fprintf(stderr, "unknown criterion '%s'\n", mode.c_str());
      return 2;
    }
    return criteria[n - 1](ctx);
  } catch (const std::exception& e) {
    std::printf("FAIL criterion %s: unexpected error: %s\n", mode.c_str(), e.what());
    return 1;
  }
}
