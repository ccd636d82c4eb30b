#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "config_json.hpp"
#include "falab/metrics.hpp"
#include "falab/ode.hpp"
#include "falab/runner.hpp"
#include "falab/teacher_student.hpp"

namespace falab {

namespace cfg {

Json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace cfg

namespace {

namespace fs = std::filesystem;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double opt_value(const std::optional<double>& v) { return v ? *v : kNan; }

/// Independent 64-bit seed for a named sub-run: drawn from a substream so it
/// depends on both the root seed and the label path.
std::uint64_t derive_seed(const Rng& root, std::string_view label, std::uint64_t index) {
  Rng s = root.substream(label, index);
  return s.next_u64();
}

void write_json_file(const std::string& path, const cfg::Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

ActivationKind parse_activation(const std::string& s, const cfg::View& ctx) {
  if (s == "erf") return ActivationKind::ScaledErf;
  if (s == "relu") return ActivationKind::ReLU;
  if (s == "tanh") return ActivationKind::Tanh;
  if (s == "linear") return ActivationKind::Linear;
  ctx.fail("activation '" + s + "' is not one of erf, relu, tanh, linear");
}

DeepAlgo parse_algo(const std::string& s, const cfg::View& ctx) {
  if (s == "bp") return DeepAlgo::Bp;
  if (s == "fa") return DeepAlgo::Fa;
  if (s == "dfa") return DeepAlgo::Dfa;
  if (s == "drtp") return DeepAlgo::Drtp;
  ctx.fail("algorithm '" + s + "' is not one of bp, fa, dfa, drtp");
}

ErrorKind parse_loss(const std::string& s, const cfg::View& ctx) {
  if (s == "mse") return ErrorKind::Mse;
  if (s == "ce") return ErrorKind::SoftmaxCrossEntropy;
  ctx.fail("loss '" + s + "' is not one of mse, ce");
}

FeedbackInit parse_feedback_init(const cfg::View& v) {
  FeedbackInit init;
  const std::string s = v.str("feedback_init", "uniform");
  if (s == "uniform")
    init.kind = FeedbackInit::Kind::Uniform;
  else if (s == "gaussian")
    init.kind = FeedbackInit::Kind::Gaussian;
  else if (s == "orthogonal")
    init.kind = FeedbackInit::Kind::LeftOrthogonal;
  else
    v.fail("feedback_init '" + s + "' is not one of uniform, gaussian, orthogonal");
  init.stddev = v.num("feedback_std", 1.0);
  return init;
}

/// Feedback choice for the shallow commands: explicit values, or one
/// gaussian draw per student node, optionally folded to all-positive.
struct FeedbackChoice {
  std::vector<double> values;  // empty when drawn at run time
  bool abs = false;
};

FeedbackChoice parse_feedback_choice(const cfg::View& v, std::size_t k) {
  FeedbackChoice c;
  if (v.has("feedback_values")) {
    c.values = v.num_list("feedback_values");
    if (c.values.size() != k)
      v.fail("feedback_values must have one entry per student node (" + std::to_string(k) +
             ")");
    return c;
  }
  const std::string mode = v.str("feedback", "gaussian");
  if (mode != "gaussian" && mode != "abs")
    v.fail("feedback '" + mode + "' is not one of gaussian, abs");
  c.abs = mode == "abs";
  return c;
}

std::vector<double> draw_feedback(const FeedbackChoice& c, std::size_t k, Rng& rng) {
  if (!c.values.empty()) return c.values;
  std::vector<double> f(k);
  for (auto& x : f) x = rng.gaussian();
  if (c.abs)
    for (auto& x : f) x = std::fabs(x);
  return f;
}

std::vector<std::string> overlap_columns(std::size_t k, std::size_t m) {
  std::vector<std::string> cols{"alpha", "eg", "cos_w2_f1"};
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      cols.push_back("q_" + std::to_string(a) + "_" + std::to_string(b));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t n = 0; n < m; ++n)
      cols.push_back("r_" + std::to_string(a) + "_" + std::to_string(n));
  for (std::size_t a = 0; a < k; ++a) cols.push_back("w2_" + std::to_string(a));
  return cols;
}

std::vector<double> overlap_row(double alpha, double eg, std::optional<double> cos,
                                const Matrix& q, const Matrix& r,
                                const std::vector<double>& w2) {
  std::vector<double> row{alpha, eg, opt_value(cos)};
  row.insert(row.end(), q.data.begin(), q.data.end());
  row.insert(row.end(), r.data.begin(), r.data.end());
  row.insert(row.end(), w2.begin(), w2.end());
  return row;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// ---------------------------------------------------------------------------
// teacher-student

void cmd_teacher_student(const cfg::View& v, const std::string& out_dir,
                         std::uint64_t seed, std::size_t workers) {
  const std::string algorithm = v.str("algorithm", "dfa");
  const ShallowRule rule = algorithm == "bp" ? ShallowRule::Bp : ShallowRule::Dfa;
  if (algorithm != "bp" && algorithm != "dfa")
    v.fail("algorithm '" + algorithm + "' is not one of bp, dfa");
  const ActivationKind g = parse_activation(v.str("activation", "erf"), v);
  const std::size_t k = v.size("student_hidden");
  const std::size_t m = v.size("teacher_hidden");
  const std::size_t n = v.size("input_dim", 500);
  TeacherSpec tspec;
  tspec.orthogonal_rows = v.flag("teacher_orthogonal", true);
  if (v.str("teacher_second_layer", "ones") == "gaussian")
    tspec.second_layer = TeacherSpec::SecondLayer::Gaussian;
  ShallowRunOptions run;
  run.lr = v.num("lr", 0.1);
  const double alpha_max = v.num("alpha_max", 100.0);
  const double log_every = v.num("log_every_alpha", 1.0);
  run.steps = static_cast<std::size_t>(std::llround(alpha_max * static_cast<double>(n)));
  run.cadence = static_cast<std::size_t>(std::llround(log_every * static_cast<double>(n)));
  run.mc_eg_samples = v.size("mc_eg_samples", 20000);
  const double init_std = v.num("init_std", 1e-3);
  const double init_std_w2 = v.num("init_std_w2", init_std);
  const std::size_t seeds = v.size("seeds", 1);
  const FeedbackChoice fb_choice = parse_feedback_choice(v, k);
  v.finish();

  const Rng root(seed);
  struct RunSummary {
    double final_eg = 0.0;
    std::vector<double> feedback, final_w2;
    int sign_matches = 0;
  };
  std::vector<RunSummary> summaries(seeds);

  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < seeds; ++i) {
    tasks.push_back([&, i] {
      Rng t_rng = root.substream("teacher", i);
      Rng s_rng = root.substream("student", i);
      Rng f_rng = root.substream("feedback", i);
      Rng d_rng = root.substream("data", i);
      const Teacher teacher = make_teacher(m, n, g, tspec, t_rng);
      Matrix w1 = gaussian_matrix(s_rng, k, n, init_std);
      std::vector<double> w2 =
          init_std_w2 > 0.0 ? gaussian_vector(s_rng, k, init_std_w2)
                            : std::vector<double>(k, 0.0);
      const std::vector<double> f1 = draw_feedback(fb_choice, k, f_rng);
      const auto rows = online_train(w1, w2, teacher, rule, f1, run, d_rng);

      const std::string dir = out_dir + "/run_" + std::to_string(i);
      fs::create_directories(dir);
      CsvWriter csv(dir + "/trajectory.csv", overlap_columns(k, m));
      for (const auto& row : rows)
        csv.row(overlap_row(row.alpha, row.eg, row.cos_w2_f1, row.op.q, row.op.r,
                            row.op.w2));

      RunSummary s;
      s.final_eg = rows.back().eg;
      s.feedback = f1;
      s.final_w2 = rows.back().op.w2;
      for (std::size_t a = 0; a < k; ++a)
        if (sign_of(s.final_w2[a]) == sign_of(f1[a])) ++s.sign_matches;
      summaries[i] = std::move(s);
    });
  }
  run_parallel(std::move(tasks), workers);

  cfg::Json runs = cfg::Json::array();
  for (const auto& s : summaries) {
    cfg::Json j;
    j["final_eg"] = s.final_eg;
    j["feedback"] = s.feedback;
    j["final_w2"] = s.final_w2;
    j["sign_matches"] = s.sign_matches;
    runs.push_back(j);
  }
  write_json_file(out_dir + "/summary.json", cfg::Json{{"runs", runs}});
}

// ---------------------------------------------------------------------------
// ode

void cmd_ode(const cfg::View& v, const std::string& out_dir, std::uint64_t seed,
             std::size_t /*workers*/) {
  const std::string algorithm = v.str("algorithm", "dfa");
  if (algorithm != "bp" && algorithm != "dfa")
    v.fail("algorithm '" + algorithm + "' is not one of bp, dfa");
  const ActivationKind g = parse_activation(v.str("activation", "erf"), v);
  const std::size_t k = v.size("student_hidden");
  const std::size_t m = v.size("teacher_hidden");

  OdeSystem sys;
  sys.bp = algorithm == "bp";
  sys.lr = v.num("lr", 0.1);
  sys.activation = g;
  sys.teacher_w2 = v.num_list("teacher_w2", std::vector<double>(m, 1.0));
  if (sys.teacher_w2.size() != m) v.fail("teacher_w2 must have teacher_hidden entries");

  OdeRunOptions opt;
  opt.d_alpha = v.num("d_alpha", 1e-2);
  opt.alpha_max = v.num("alpha_max", 100.0);
  opt.log_every = v.num("log_every_alpha", 1.0);
  opt.method = v.str("method", "euler") == "rk4" ? OdeMethod::Rk4 : OdeMethod::Euler;
  if (v.str("method", "euler") != "euler" && v.str("method", "euler") != "rk4")
    v.fail("method must be euler or rk4");

  const Rng root(seed);
  Rng f_rng = root.substream("feedback");
  sys.f1 = draw_feedback(parse_feedback_choice(v, k), k, f_rng);

  OdeState state;
  std::vector<std::vector<double>> sim_eg_rows;
  bool paired = v.has("simulation");
  double max_eg_gap = kNan;

  if (paired) {
    const cfg::View sv = v.object("simulation");
    const std::size_t n = sv.size("input_dim", 500);
    const double init_std = sv.num("init_std", 1e-3);
    const double init_std_w2 = sv.num("init_std_w2", init_std);
    const std::size_t mc_eg = sv.size("mc_eg_samples", 0);
    sv.finish();

    Rng t_rng = root.substream("teacher");
    Rng s_rng = root.substream("student");
    Rng d_rng = root.substream("data");
    TeacherSpec tspec;
    const Teacher teacher = make_teacher(m, n, g, tspec, t_rng);
    Matrix w1 = gaussian_matrix(s_rng, k, n, init_std);
    std::vector<double> w2 = init_std_w2 > 0.0 ? gaussian_vector(s_rng, k, init_std_w2)
                                               : std::vector<double>(k, 0.0);
    const OrderParams op0 = order_params_from_weights(w1, w2, teacher);
    state.q = op0.q;
    state.r = op0.r;
    state.w2 = op0.w2;
    sys.t = op0.t;
    sys.teacher_w2 = teacher.w2;

    ShallowRunOptions run;
    run.lr = sys.lr;
    run.steps =
        static_cast<std::size_t>(std::llround(opt.alpha_max * static_cast<double>(n)));
    run.cadence =
        static_cast<std::size_t>(std::llround(opt.log_every * static_cast<double>(n)));
    run.mc_eg_samples = mc_eg;
    const ShallowRule rule = sys.bp ? ShallowRule::Bp : ShallowRule::Dfa;
    const auto rows = online_train(w1, w2, teacher, rule, sys.f1, run, d_rng);
    CsvWriter sim_csv(out_dir + "/sim.csv", overlap_columns(k, m));
    for (const auto& row : rows) {
      sim_csv.row(overlap_row(row.alpha, row.eg, row.cos_w2_f1, row.op.q, row.op.r,
                              row.op.w2));
      sim_eg_rows.push_back({row.alpha, row.eg});
    }
  } else {
    sys.t = Matrix(m, m);
    for (std::size_t i = 0; i < m; ++i) sys.t(i, i) = 1.0;
    const std::string init = v.str("init", "zero");
    state.q = Matrix(k, k);
    state.r = Matrix(k, m);
    state.w2.assign(k, 0.0);
    if (init == "plateau") {
      state = plateau_state(sys.f1);
    } else if (init == "random") {
      // Overlaps of a small random finite-dimensional student against an
      // orthonormal teacher: a realisable, slightly asymmetric start.
      const std::size_t init_dim = v.size("init_dim", 1000);
      const double init_std = v.num("init_std", 1e-3);
      const double init_std_w2 = v.num("init_std_w2", init_std);
      Rng t_rng = root.substream("teacher");
      Rng s_rng = root.substream("student");
      const Teacher teacher = make_teacher(m, init_dim, g, TeacherSpec{}, t_rng);
      const Matrix w1 = gaussian_matrix(s_rng, k, init_dim, init_std);
      const std::vector<double> w2 = init_std_w2 > 0.0
                                         ? gaussian_vector(s_rng, k, init_std_w2)
                                         : std::vector<double>(k, 0.0);
      const OrderParams op0 = order_params_from_weights(w1, w2, teacher);
      state.q = op0.q;
      state.r = op0.r;
      state.w2 = op0.w2;
      sys.t = op0.t;
      sys.teacher_w2 = teacher.w2;
    } else if (init != "zero") {
      v.fail("init '" + init + "' is not one of zero, plateau, random");
    }
  }
  v.finish();

  const auto rows = integrate(state, sys, opt);
  CsvWriter csv(out_dir + "/ode.csv", overlap_columns(k, m));
  for (const auto& row : rows)
    csv.row(overlap_row(row.alpha, row.eg, cosine(row.state.w2, sys.f1), row.state.q,
                        row.state.r, row.state.w2));

  if (paired) {
    max_eg_gap = 0.0;
    const std::size_t common = std::min(rows.size(), sim_eg_rows.size());
    for (std::size_t i = 0; i < common; ++i)
      max_eg_gap = std::max(max_eg_gap, std::fabs(rows[i].eg - sim_eg_rows[i][1]));
  }

  // Closest approach to the symmetric plateau, in max relative deviation
  // over all overlap entries (sign-dressed by the feedback).
  double plateau_dev = kNan;
  if (k == m && !sys.bp) {
    const PlateauValues p = plateau_values(k);
    plateau_dev = std::numeric_limits<double>::infinity();
    for (const auto& row : rows) {
      double dev = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        const double sa = sign_of(sys.f1[a]);
        dev = std::max(dev, std::fabs(sa * row.state.w2[a] - p.w2) / p.w2);
        for (std::size_t b = 0; b < k; ++b) {
          const double sb = sign_of(sys.f1[b]);
          dev = std::max(dev, std::fabs(sa * sb * row.state.q(a, b) - p.q) / p.q);
        }
        for (std::size_t nn = 0; nn < m; ++nn)
          dev = std::max(dev, std::fabs(sa * row.state.r(a, nn) - p.r) / p.r);
      }
      plateau_dev = std::min(plateau_dev, dev);
    }
  }

  cfg::Json summary;
  summary["final_eg"] = rows.back().eg;
  summary["feedback"] = sys.f1;
  if (paired) summary["max_eg_gap"] = max_eg_gap;
  if (!std::isnan(plateau_dev)) summary["plateau_min_rel_dev"] = plateau_dev;
  write_json_file(out_dir + "/summary.json", summary);
}

// ---------------------------------------------------------------------------
// deep and corruption

struct TrainKeys {
  DeepAlgo algo = DeepAlgo::Dfa;
  ActivationKind activation = ActivationKind::Tanh;
  ErrorKind loss = ErrorKind::Mse;
  OutputMap output_map = OutputMap::Identity;
  std::vector<std::size_t> hidden;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  InitSpec init;
  bool biases = false;
  FeedbackInit fb_init;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;
  std::size_t probe_samples = 512;
  bool track_alignment = true;
};

TrainKeys parse_train_keys(const cfg::View& v) {
  TrainKeys t;
  t.algo = parse_algo(v.str("algorithm", "dfa"), v);
  t.activation = parse_activation(v.str("activation", "tanh"), v);
  t.loss = parse_loss(v.str("loss", "mse"), v);
  t.output_map =
      t.loss == ErrorKind::SoftmaxCrossEntropy ? OutputMap::Softmax : OutputMap::Identity;
  t.hidden = v.size_list("hidden");
  t.lr = v.num("lr", 1e-4);
  t.batch_size = v.size("batch_size", 32);
  t.epochs = v.size("epochs", 100);
  t.init.kind = v.flag("zero_init", false) ? InitSpec::Kind::Zero
                                           : InitSpec::Kind::GaussianStd;
  t.init.stddev = v.num("init_std", 1e-2);
  t.biases = v.flag("biases", false);
  t.fb_init = parse_feedback_init(v);
  t.log_every = v.size("log_every", 1);
  t.checkpoint_every = v.size("checkpoint_every", 0);
  t.probe_samples = v.size("probe_samples", 512);
  t.track_alignment = v.flag("track_alignment", true);
  return t;
}

DeepRunSpec make_spec(const TrainKeys& t, const Dataset& ds) {
  DeepRunSpec spec;
  spec.widths.push_back(ds.x.cols);
  spec.widths.insert(spec.widths.end(), t.hidden.begin(), t.hidden.end());
  spec.widths.push_back(ds.y.cols);
  spec.activation = t.activation;
  spec.output_map = t.output_map;
  spec.loss = t.loss;
  spec.algo = t.algo;
  spec.biases = t.biases;
  spec.init = t.init;
  spec.feedback_init = t.fb_init;
  spec.lr = t.lr;
  spec.batch_size = t.batch_size;
  spec.epochs = t.epochs;
  spec.log_every = t.log_every;
  spec.checkpoint_every = t.checkpoint_every;
  spec.probe_samples = t.probe_samples;
  spec.track_alignment = t.track_alignment;
  return spec;
}

/// Loads, truncates, downscales and (optionally) corrupts the dataset named
/// by the config; corruption draws from the run seed's "corrupt" stream.
Dataset load_dataset_spec(const cfg::View& dv, std::uint64_t seed) {
  const std::string kind = dv.str("kind");
  Dataset ds;
  if (kind == "idx") {
    ds = load_idx_dataset(dv.str("images"), dv.str("labels"), dv.str("name", "idx"));
  } else if (kind == "cifar10") {
    ds = load_cifar10(dv.str_list("batches"));
  } else {
    dv.fail("kind '" + kind + "' is not one of idx, cifar10");
  }
  const std::size_t samples = dv.size("samples", 0);
  if (samples > 0) {
    if (samples > ds.size())
      dv.fail("samples (" + std::to_string(samples) + ") exceeds the dataset size (" +
              std::to_string(ds.size()) + ")");
    ds = head(ds, samples);
  }
  const std::size_t target = dv.size("downscale", 0);
  if (target > 0) ds = downscale(ds, target);
  const double p = dv.num("corruption", 0.0);
  const std::size_t classes = dv.size("classes", 10);
  if (p > 0.0) {
    Rng c_rng = Rng(seed).substream("corrupt");
    ds = corrupt_labels(ds, p, classes, c_rng);
  }
  dv.finish();
  return ds;
}

void write_pair_rows(const std::string& path,
                     const std::vector<std::array<double, 6>>& rows) {
  CsvWriter csv(path, {"pair", "interrun_cos", "final_loss_a", "final_loss_b",
                       "final_accuracy_a", "final_accuracy_b"});
  for (const auto& r : rows) csv.row(std::vector<double>(r.begin(), r.end()));
}

void cmd_deep(const cfg::View& v, const std::string& out_dir, std::uint64_t seed,
              std::size_t workers) {
  const TrainKeys keys = parse_train_keys(v);
  const Dataset ds = load_dataset_spec(v.object("dataset"), seed);
  const std::size_t pairs = v.size("pairs", 0);
  const std::size_t seeds = v.size("seeds", 1);
  v.finish();

  const Rng root(seed);
  if (pairs > 0) {
    std::vector<std::array<double, 6>> rows(pairs);
    std::vector<std::function<void()>> tasks;
    for (std::size_t p = 0; p < pairs; ++p) {
      tasks.push_back([&, p] {
        DeepRunSpec spec = make_spec(keys, ds);
        spec.feedback_seed = derive_seed(root, "pair-feedback", p);
        spec.data_seed = derive_seed(root, "pair-data", p);
        const std::string dir = out_dir + "/pair_" + std::to_string(p);
        spec.init_seed = derive_seed(root, "pair-init", 2 * p);
        spec.out_prefix = dir + "/run_a";
        const DeepRunResult a = train_deep(ds, spec);
        spec.init_seed = derive_seed(root, "pair-init", 2 * p + 1);
        spec.out_prefix = dir + "/run_b";
        const DeepRunResult b = train_deep(ds, spec);
        rows[p] = {static_cast<double>(p), opt_value(interrun_cosine(a.params, b.params)),
                   a.final_loss, b.final_loss, a.final_accuracy, b.final_accuracy};
      });
    }
    run_parallel(std::move(tasks), workers);
    write_pair_rows(out_dir + "/pairs.csv", rows);
  } else {
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < seeds; ++i) {
      tasks.push_back([&, i] {
        DeepRunSpec spec = make_spec(keys, ds);
        spec.init_seed = derive_seed(root, "init", i);
        spec.feedback_seed = derive_seed(root, "feedback", i);
        spec.data_seed = derive_seed(root, "data", i);
        spec.out_prefix = out_dir + "/run_" + std::to_string(i);
        train_deep(ds, spec);
      });
    }
    run_parallel(std::move(tasks), workers);
  }
}

void cmd_corruption(const cfg::View& v, const std::string& out_dir, std::uint64_t seed,
                    std::size_t workers) {
  const TrainKeys keys = parse_train_keys(v);
  const cfg::View dv = v.object("dataset");
  if (dv.num("corruption", 0.0) != 0.0)
    dv.fail("set corruption levels via the top-level 'corruptions' list");
  const Dataset base = load_dataset_spec(dv, seed);
  const std::vector<double> ps = v.num_list("corruptions", {0.0, 0.5, 0.9});
  const double wa_threshold = v.num("wa_threshold", 0.2);
  const std::size_t classes = 10;
  v.finish();

  const Rng root(seed);
  struct Level {
    double p = 0.0;
    double final_wa = kNan;
    double first_epoch_above = -1.0;
    double final_loss = kNan, final_accuracy = kNan;
    std::string dir;
  };
  std::vector<Level> levels(ps.size());

  std::vector<std::function<void()>> tasks;
  for (std::size_t j = 0; j < ps.size(); ++j) {
    tasks.push_back([&, j] {
      const double p = ps[j];
      Rng c_rng = Rng(seed).substream("corrupt");
      const Dataset ds =
          p > 0.0 ? corrupt_labels(base, p, classes, c_rng) : base;
      DeepRunSpec spec = make_spec(keys, ds);
      spec.init_seed = derive_seed(root, "init", 0);
      spec.feedback_seed = derive_seed(root, "feedback", 0);
      spec.data_seed = derive_seed(root, "data", 0);
      Level lev;
      lev.p = p;
      lev.dir = out_dir + "/p_" + format_double(p);
      spec.out_prefix = lev.dir;
      const DeepRunResult res = train_deep(ds, spec);
      lev.final_loss = res.final_loss;
      lev.final_accuracy = res.final_accuracy;
      lev.final_wa = opt_value(res.final_alignment.wa_global);
      const CsvTable table = read_csv(lev.dir + "/metrics.csv");
      const auto epochs = table.column("epoch");
      const auto wa = table.column("wa_global");
      for (std::size_t r = 0; r < wa.size(); ++r) {
        if (!std::isnan(wa[r]) && wa[r] > wa_threshold) {
          lev.first_epoch_above = epochs[r];
          break;
        }
      }
      levels[j] = std::move(lev);
    });
  }
  run_parallel(std::move(tasks), workers);

  cfg::Json arr = cfg::Json::array();
  for (const auto& lev : levels) {
    cfg::Json j;
    j["p"] = lev.p;
    j["dir"] = lev.dir;
    j["final_wa_global"] = lev.final_wa;
    if (lev.first_epoch_above >= 0.0)
      j["first_epoch_wa_above_threshold"] = lev.first_epoch_above;
    else
      j["first_epoch_wa_above_threshold"] = nullptr;
    j["final_loss"] = lev.final_loss;
    j["final_accuracy"] = lev.final_accuracy;
    arr.push_back(j);
  }
  cfg::Json summary;
  summary["wa_threshold"] = wa_threshold;
  summary["levels"] = arr;
  write_json_file(out_dir + "/summary.json", summary);
}

// ---------------------------------------------------------------------------
// alphabeta

void cmd_alphabeta(const cfg::View& v, const std::string& out_dir, std::uint64_t seed,
                   std::size_t workers) {
  const TrainKeys keys = parse_train_keys(v);
  const std::vector<double> grid = v.num_list("grid", {0.2, 0.4, 0.6, 0.8, 1.0});
  const std::size_t seeds = v.size("seeds", 3);
  const std::size_t samples = v.size("samples", 1000);
  const std::size_t input_dim = v.size("input_dim", 10);
  v.finish();

  const Rng root(seed);
  const std::size_t g = grid.size();
  struct Cell {
    double wa = kNan, ga = kNan, loss = kNan;
  };
  std::vector<Cell> cells(g * g * seeds);

  std::vector<std::function<void()>> tasks;
  for (std::size_t ia = 0; ia < g; ++ia)
    for (std::size_t ib = 0; ib < g; ++ib)
      for (std::size_t s = 0; s < seeds; ++s) {
        tasks.push_back([&, ia, ib, s] {
          const std::size_t flat = (ia * g + ib) * seeds + s;
          CovarianceSpec cov;
          cov.alpha = grid[ia];
          cov.beta = grid[ib];
          Rng d_rng = root.substream("ab-data", flat);
          const Dataset ds = synthetic_targets(cov, samples, input_dim, d_rng);
          DeepRunSpec spec = make_spec(keys, ds);
          spec.init_seed = derive_seed(root, "ab-init", flat);
          spec.feedback_seed = derive_seed(root, "ab-feedback", flat);
          spec.data_seed = derive_seed(root, "ab-order", flat);
          spec.probe_samples = std::min<std::size_t>(spec.probe_samples, samples);
          const DeepRunResult res = train_deep(ds, spec);
          Cell c;
          c.wa = opt_value(res.final_alignment.wa_global);
          c.ga = opt_value(res.final_alignment.ga_global);
          c.loss = res.final_loss;
          cells[flat] = c;
        });
      }
  run_parallel(std::move(tasks), workers);

  CsvWriter csv(out_dir + "/heatmap.csv",
                {"alpha", "beta", "seed", "wa_global", "ga_global", "loss"});
  for (std::size_t ia = 0; ia < g; ++ia)
    for (std::size_t ib = 0; ib < g; ++ib)
      for (std::size_t s = 0; s < seeds; ++s) {
        const Cell& c = cells[(ia * g + ib) * seeds + s];
        csv.row({grid[ia], grid[ib], static_cast<double>(s), c.wa, c.ga, c.loss});
      }

  cfg::Json means = cfg::Json::array();
  for (std::size_t ia = 0; ia < g; ++ia)
    for (std::size_t ib = 0; ib < g; ++ib) {
      double wa = 0.0, ga = 0.0;
      for (std::size_t s = 0; s < seeds; ++s) {
        const Cell& c = cells[(ia * g + ib) * seeds + s];
        wa += c.wa;
        ga += c.ga;
      }
      cfg::Json j;
      j["alpha"] = grid[ia];
      j["beta"] = grid[ib];
      j["wa_mean"] = wa / static_cast<double>(seeds);
      j["ga_mean"] = ga / static_cast<double>(seeds);
      means.push_back(j);
    }
  write_json_file(out_dir + "/summary.json", cfg::Json{{"cells", means}});
}

// ---------------------------------------------------------------------------
// plearn

void cmd_plearn(const cfg::View& v, const std::string& out_dir, std::uint64_t seed,
                std::size_t workers) {
  const auto cells = v.tuple_list("cells", 2);
  PLearnOptions base;
  base.trials = v.size("trials", 50);
  base.input_dim = v.size("input_dim", 200);
  base.lr = v.num("lr", 0.1);
  base.init_std = v.num("init_std", 1e-2);
  base.alpha_max = v.num("alpha_max", 200.0);
  base.threshold = v.num("threshold", 1e-3);
  base.eg_samples = v.size("eg_samples", 40000);

  struct ForcedSpec {
    std::size_t k = 0, m = 0, runs = 0;
    int positive = 0;
    PLearnOptions opt;
  };
  std::vector<ForcedSpec> forced;
  if (v.has("forced")) {
    for (const auto& fv : v.object_list("forced")) {
      ForcedSpec f;
      f.k = fv.size("k");
      f.m = fv.size("m");
      f.positive = static_cast<int>(fv.size("positive"));
      f.runs = fv.size("runs", 10);
      f.opt = base;
      f.opt.trials = f.runs;
      f.opt.forced_positive = f.positive;
      f.opt.input_dim = fv.size("input_dim", base.input_dim);
      f.opt.alpha_max = fv.num("alpha_max", base.alpha_max);
      f.opt.lr = fv.num("lr", base.lr);
      fv.finish();
      forced.push_back(f);
    }
  }
  v.finish();

  const Rng root(seed);
  std::vector<PLearnEstimate> cell_results(cells.size());
  std::vector<PLearnEstimate> forced_results(forced.size());

  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    tasks.push_back([&, i] {
      const auto k = static_cast<std::size_t>(cells[i][0]);
      const auto m = static_cast<std::size_t>(cells[i][1]);
      Rng rng = root.substream("cell", i);
      cell_results[i] = p_learn_empirical(k, m, base, rng);
    });
  }
  for (std::size_t i = 0; i < forced.size(); ++i) {
    tasks.push_back([&, i] {
      Rng rng = root.substream("forced", i);
      forced_results[i] = p_learn_empirical(forced[i].k, forced[i].m, forced[i].opt, rng);
    });
  }
  run_parallel(std::move(tasks), workers);

  CsvWriter csv(out_dir + "/plearn.csv",
                {"k", "m", "formula", "empirical", "successes", "trials"});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto k = static_cast<std::size_t>(cells[i][0]);
    const auto m = static_cast<std::size_t>(cells[i][1]);
    csv.row({static_cast<double>(k), static_cast<double>(m), p_learn_formula(k, m),
             cell_results[i].fraction, static_cast<double>(cell_results[i].successes),
             static_cast<double>(cell_results[i].trials)});
  }

  if (!forced.empty()) {
    CsvWriter fcsv(out_dir + "/forced.csv", {"k", "m", "positive", "run", "final_eg"});
    for (std::size_t i = 0; i < forced.size(); ++i)
      for (std::size_t r = 0; r < forced_results[i].final_eg.size(); ++r)
        fcsv.row({static_cast<double>(forced[i].k), static_cast<double>(forced[i].m),
                  static_cast<double>(forced[i].positive), static_cast<double>(r),
                  forced_results[i].final_eg[r]});
  }

  cfg::Json summary;
  summary["cells"] = cfg::Json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cfg::Json j;
    j["k"] = cells[i][0];
    j["m"] = cells[i][1];
    j["formula"] = p_learn_formula(static_cast<std::size_t>(cells[i][0]),
                                   static_cast<std::size_t>(cells[i][1]));
    j["empirical"] = cell_results[i].fraction;
    summary["cells"].push_back(j);
  }
  write_json_file(out_dir + "/summary.json", summary);
}

// ---------------------------------------------------------------------------
// linear-wa

void cmd_linear_wa(const cfg::View& v, const std::string& out_dir, std::uint64_t seed,
                   std::size_t /*workers*/) {
  const DeepAlgo algo = parse_algo(v.str("algorithm", "dfa"), v);
  if (algo == DeepAlgo::Bp) v.fail("algorithm must be one of fa, dfa, drtp");
  const std::vector<std::size_t> widths = v.size_list("widths");
  if (widths.size() < 3) v.fail("widths must describe at least two layers");
  const double lr = v.num("lr", 1e-2);
  const std::size_t steps = v.size("steps", 200);
  const std::size_t batch = v.size("batch_size", 1);
  const bool use_grams = v.flag("use_grams", true);
  const std::size_t log_every = v.size("log_every", 1);
  if (log_every == 0) v.fail("log_every must be positive");
  const FeedbackInit fb_init = parse_feedback_init(v);
  const std::size_t n0 = widths.front();
  const std::size_t n_out = widths.back();
  const double teacher_scale =
      v.num("teacher_scale", 1.0 / std::sqrt(static_cast<double>(n0)));
  std::vector<double> sigma_diag =
      v.num_list("sigma_x_diag", std::vector<double>(n0, 1.0));
  if (sigma_diag.size() != n0) v.fail("sigma_x_diag needs one entry per input");
  v.finish();

  const Rng root(seed);
  Rng net_rng = root.substream("net");
  MlpParams params = make_mlp(widths, ActivationKind::Linear, OutputMap::Identity, false,
                              InitSpec{InitSpec::Kind::Zero, 0.0}, net_rng);
  const FeedbackKind fkind = algo == DeepAlgo::Fa ? FeedbackKind::Fa : FeedbackKind::Dfa;
  Rng fb_rng = root.substream("feedback");
  const FeedbackEnsemble fb = init_feedback(fkind, widths, fb_init, fb_rng);
  const std::vector<Matrix> direct = direct_feedback(fb);

  Rng t_rng = root.substream("teacher");
  const Matrix t_map = gaussian_matrix(t_rng, n_out, n0, teacher_scale);
  Matrix sigma_x(n0, n0);
  for (std::size_t i = 0; i < n0; ++i) sigma_x(i, i) = sigma_diag[i];
  std::vector<double> sigma_sqrt(n0);
  for (std::size_t i = 0; i < n0; ++i) {
    if (sigma_diag[i] <= 0.0) v.fail("sigma_x_diag entries must be positive");
    sigma_sqrt[i] = std::sqrt(sigma_diag[i]);
  }

  const double lr_eff = lr / static_cast<double>(batch);
  AlignmentAccumulator acc(widths, lr_eff,
                           use_grams ? feedback_grams(direct) : std::vector<Matrix>{});
  Rng d_rng = root.substream("data");

  const std::size_t depth = widths.size() - 1;
  std::vector<std::string> cols{"step", "wa_global", "ga_global"};
  for (std::size_t l = 1; l <= depth; ++l) cols.push_back("res_" + std::to_string(l));
  for (std::size_t l = 1; l < depth; ++l) cols.push_back("ga_" + std::to_string(l));
  for (std::size_t l = 2; l <= depth; ++l) {
    cols.push_back("cond_ratio_" + std::to_string(l));
    cols.push_back("cond_dist_" + std::to_string(l));
  }
  CsvWriter csv(out_dir + "/residuals.csv", cols);

  double ga_dev_max = 0.0;
  Matrix a2_prev;
  const auto log_state = [&](std::size_t step, const Matrix& x, const Matrix& y) {
    const ForwardTrace tr = forward(params, x);
    const Matrix e = error_signal(params, tr, y, ErrorKind::Mse);
    const LayerDeltas bp = bp_deltas(params, tr, e, 0.0);
    const LayerDeltas rule = algo == DeepAlgo::Fa
                                 ? fa_deltas(params, fb, tr, e, 0.0)
                                 : algo == DeepAlgo::Drtp
                                       ? drtp_deltas(params, fb, tr, y, 0.0)
                                       : dfa_deltas(params, fb, tr, e, 0.0);
    const AlignmentReport rep = alignment_report(params, fb, rule, bp);
    const auto residuals = weak_alignment_residuals(params, direct, acc.state());
    std::vector<double> row{static_cast<double>(step), opt_value(rep.wa_global),
                            opt_value(rep.ga_global)};
    for (double r : residuals) row.push_back(r);
    for (const auto& gl : rep.ga_layer) row.push_back(opt_value(gl));
    for (const auto& a : acc.state().a) {
      const ConditioningReport c = conditioning(a);
      row.push_back(c.sv_ratio);
      row.push_back(c.identity_distance);
    }
    csv.row(row);
    if (step > 0)
      for (const auto& gl : rep.ga_layer)
        if (gl) ga_dev_max = std::max(ga_dev_max, std::fabs(*gl - 1.0));
  };

  std::vector<double> final_residuals;
  for (std::size_t step = 0; step < steps; ++step) {
    Matrix x = gaussian_matrix(d_rng, batch, n0, 1.0);
    for (std::size_t i = 0; i < batch; ++i) {
      double* r = x.row(i);
      for (std::size_t c = 0; c < n0; ++c) r[c] *= sigma_sqrt[c];
    }
    const Matrix y = matmul_nt(x, t_map);
    if (step % log_every == 0) log_state(step, x, y);
    if (step + 1 == steps && !acc.state().a.empty()) a2_prev = acc.state().a[0];

    const ForwardTrace tr = forward(params, x);
    LayerDeltas deltas;
    Matrix e_signal;
    if (algo == DeepAlgo::Drtp) {
      e_signal = y;
      scale(e_signal, -1.0);
      deltas = drtp_deltas(params, fb, tr, y, lr_eff);
    } else {
      e_signal = error_signal(params, tr, y, ErrorKind::Mse);
      deltas = algo == DeepAlgo::Fa ? fa_deltas(params, fb, tr, e_signal, lr_eff)
                                    : dfa_deltas(params, fb, tr, e_signal, lr_eff);
    }
    acc.step(x, e_signal);
    apply(params, deltas);
  }
  {
    Matrix x = gaussian_matrix(d_rng, batch, n0, 1.0);
    for (std::size_t i = 0; i < batch; ++i) {
      double* r = x.row(i);
      for (std::size_t c = 0; c < n0; ++c) r[c] *= sigma_sqrt[c];
    }
    const Matrix y = matmul_nt(x, t_map);
    log_state(steps, x, y);
  }
  final_residuals = weak_alignment_residuals(params, direct, acc.state());

  cfg::Json summary;
  summary["final_residuals"] = final_residuals;
  summary["ga_deviation_max"] = ga_dev_max;
  if (algo == DeepAlgo::Drtp) {
    const auto rel_err = [](const Matrix& got, const Matrix& want) {
      Matrix diff = got;
      add_scaled(diff, want, -1.0);
      const double denom = frobenius_norm(want);
      return denom > 0.0 ? frobenius_norm(diff) / denom : frobenius_norm(diff);
    };
    const Matrix a1_closed = drtp_a1_closed_form(t_map, sigma_x, lr, steps);
    summary["a1_rel_error"] = rel_err(acc.state().a1, a1_closed);
    if (!acc.state().a.empty()) {
      const Matrix a2_closed = drtp_a2_closed_form(t_map, sigma_x, lr, steps);
      summary["a2_rel_error"] = rel_err(acc.state().a[0], a2_closed);
      if (!a2_prev.empty()) {
        Matrix rate = acc.state().a[0];
        add_scaled(rate, a2_prev, -1.0);
        const Matrix rate_closed =
            drtp_rate_closed_form(t_map, sigma_x, lr, 2, steps - 1);
        summary["a2_rate_rel_error"] = rel_err(rate, rate_closed);
      }
    }
  }
  write_json_file(out_dir + "/summary.json", summary);
}

}  // namespace

std::vector<std::string> command_names() {
  return {"teacher-student", "ode", "deep", "plearn", "alphabeta", "corruption",
          "linear-wa"};
}

void run_command(const std::string& subcommand, const RunnerOptions& opt) {
  const auto names = command_names();
  if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
    std::string joined;
    for (const auto& n : names) joined += (joined.empty() ? "" : ", ") + n;
    throw std::runtime_error("unknown subcommand '" + subcommand + "'; expected one of " +
                             joined);
  }
  cfg::Json j = cfg::load_config_file(opt.config_path);
  const cfg::View root(j, opt.config_path, "");
  const std::string experiment = root.str("experiment");
  if (experiment != subcommand)
    root.fail("config is for experiment '" + experiment + "', but the subcommand is '" +
              subcommand + "'");
  const std::uint64_t seed = opt.seed_override ? *opt.seed_override : root.uint("seed", 1);
  root.uint("seed", 1);

  fs::create_directories(opt.out_dir);
  cfg::Json resolved = j;
  resolved["seed"] = seed;
  write_json_file(opt.out_dir + "/config_resolved.json", resolved);

  const std::size_t workers = std::max<std::size_t>(opt.workers, 1);
  if (subcommand == "teacher-student")
    cmd_teacher_student(root, opt.out_dir, seed, workers);
  else if (subcommand == "ode")
    cmd_ode(root, opt.out_dir, seed, workers);
  else if (subcommand == "deep")
    cmd_deep(root, opt.out_dir, seed, workers);
  else if (subcommand == "plearn")
    cmd_plearn(root, opt.out_dir, seed, workers);
  else if (subcommand == "alphabeta")
    cmd_alphabeta(root, opt.out_dir, seed, workers);
  else if (subcommand == "corruption")
    cmd_corruption(root, opt.out_dir, seed, workers);
  else
    cmd_linear_wa(root, opt.out_dir, seed, workers);
}

}  // namespace falab
