#include "falab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "falab/metrics.hpp"
#include "falab/rng.hpp"

namespace falab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t count) {
  Matrix out(count, src.cols);
  for (std::size_t i = 0; i < count; ++i) {
    const double* r = src.row(order[begin + i]);
    std::copy(r, r + src.cols, out.row(i));
  }
  return out;
}

double opt_value(const std::optional<double>& v) { return v ? *v : kNan; }

nlohmann::json opt_list(const std::vector<std::optional<double>>& vs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : vs) {
    if (v)
      arr.push_back(*v);
    else
      arr.push_back(nullptr);
  }
  return arr;
}

double batch_accuracy(const Matrix& yhat, const std::vector<std::uint8_t>& labels,
                      std::size_t begin, std::size_t count) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double* r = yhat.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < yhat.cols; ++c)
      if (r[c] > r[best]) best = c;
    if (best == labels[begin + i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

}  // namespace

DeepRunResult train_deep(const Dataset& ds, const DeepRunSpec& spec) {
  detail::require(!spec.widths.empty() && spec.widths.front() == ds.x.cols,
                  "train_deep: first width must match the input dimension");
  detail::require(spec.widths.back() == ds.y.cols,
                  "train_deep: last width must match the target dimension");
  detail::require(spec.batch_size > 0, "train_deep: batch size must be positive");
  detail::require(spec.log_every > 0, "train_deep: log cadence must be positive");
  const std::size_t n = ds.size();
  detail::require(n > 0, "train_deep: empty dataset");

  Rng init_rng = Rng(spec.init_seed).substream("init");
  MlpParams params = make_mlp(spec.widths, spec.activation, spec.output_map, spec.biases,
                              spec.init, init_rng);
  const FeedbackKind fkind =
      spec.algo == DeepAlgo::Fa ? FeedbackKind::Fa : FeedbackKind::Dfa;
  Rng fb_rng = Rng(spec.feedback_seed).substream("feedback");
  FeedbackEnsemble fb = init_feedback(fkind, spec.widths, spec.feedback_init, fb_rng);
  Rng data_rng = Rng(spec.data_seed).substream("data-order");

  const bool classify = !ds.labels.empty();
  const std::size_t probe_n = std::min(spec.probe_samples, n);
  Matrix probe_x(probe_n, ds.x.cols);
  std::copy_n(ds.x.data.begin(), probe_n * ds.x.cols, probe_x.data.begin());
  Matrix probe_y(probe_n, ds.y.cols);
  std::copy_n(ds.y.data.begin(), probe_n * ds.y.cols, probe_y.data.begin());

  std::optional<CsvWriter> csv;
  std::optional<JsonlWriter> jsonl;
  if (!spec.out_prefix.empty()) {
    std::filesystem::create_directories(spec.out_prefix);
    csv.emplace(spec.out_prefix + "/metrics.csv",
                std::vector<std::string>{"epoch", "loss", "accuracy", "wa_global",
                                         "ga_global"});
    jsonl.emplace(spec.out_prefix + "/metrics.jsonl");
  }

  DeepRunResult result;
  auto log_state = [&](std::size_t epoch) {
    const ForwardTrace full = forward(params, ds.x);
    result.final_loss = loss_value(params, full, ds.y, spec.loss);
    result.final_accuracy = classify ? batch_accuracy(full.yhat, ds.labels, 0, n) : kNan;
    AlignmentReport rep;
    if (spec.track_alignment) {
      const ForwardTrace tr = forward(params, probe_x);
      const Matrix e = error_signal(params, tr, probe_y, spec.loss);
      const LayerDeltas bp = bp_deltas(params, tr, e, 0.0);
      const LayerDeltas rule = spec.algo == DeepAlgo::Fa
                                   ? fa_deltas(params, fb, tr, e, 0.0)
                                   : spec.algo == DeepAlgo::Drtp
                                         ? drtp_deltas(params, fb, tr, probe_y, 0.0)
                                         : dfa_deltas(params, fb, tr, e, 0.0);
      rep = alignment_report(params, fb, rule, bp);
    }
    result.final_alignment = rep;
    if (csv)
      csv->row({static_cast<double>(epoch), result.final_loss, result.final_accuracy,
                opt_value(rep.wa_global), opt_value(rep.ga_global)});
    if (jsonl) {
      nlohmann::json row;
      row["epoch"] = epoch;
      row["loss"] = result.final_loss;
      if (classify) row["accuracy"] = result.final_accuracy;
      if (spec.track_alignment) {
        row["wa_layer"] = opt_list(rep.wa_layer);
        row["ga_layer"] = opt_list(rep.ga_layer);
      }
      jsonl->row(row.dump());
    }
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    if (epoch % spec.log_every == 0) log_state(epoch);
    if (!spec.out_prefix.empty() && spec.checkpoint_every > 0 && epoch > 0 &&
        epoch % spec.checkpoint_every == 0)
      save_checkpoint(params, spec.out_prefix + "/checkpoint_epoch_" +
                                  std::to_string(epoch) + ".bin");
    data_rng.shuffle(order);
    for (std::size_t begin = 0; begin < n; begin += spec.batch_size) {
      const std::size_t count = std::min(spec.batch_size, n - begin);
      const Matrix bx = gather_rows(ds.x, order, begin, count);
      const Matrix by = gather_rows(ds.y, order, begin, count);
      const ForwardTrace tr = forward(params, bx);
      const double lr_eff = spec.lr / static_cast<double>(count);
      LayerDeltas deltas;
      switch (spec.algo) {
        case DeepAlgo::Bp:
          deltas = bp_deltas(params, tr, error_signal(params, tr, by, spec.loss), lr_eff);
          break;
        case DeepAlgo::Fa:
          deltas = fa_deltas(params, fb, tr, error_signal(params, tr, by, spec.loss),
                             lr_eff);
          break;
        case DeepAlgo::Dfa:
          deltas = dfa_deltas(params, fb, tr, error_signal(params, tr, by, spec.loss),
                              lr_eff);
          break;
        case DeepAlgo::Drtp:
          deltas = drtp_deltas(params, fb, tr, by, lr_eff);
          break;
      }
      apply(params, deltas);
    }
  }
  log_state(spec.epochs);
  if (!spec.out_prefix.empty())
    save_checkpoint(params, spec.out_prefix + "/checkpoint_final.bin");
  result.params = std::move(params);
  result.feedback = std::move(fb);
  return result;
}

void run_parallel(std::vector<std::function<void()>> tasks, std::size_t workers) {
  if (workers <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t count = std::min(workers, tasks.size());
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace falab
