#include <benchmark/benchmark.h>

#include "falab/alignment.hpp"
#include "falab/gaussian_integrals.hpp"
#include "falab/network.hpp"
#include "falab/ode.hpp"
#include "falab/rng.hpp"
#include "falab/trainers.hpp"

namespace {

using namespace falab;

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  const Matrix a = gaussian_matrix(rng, n, n, 1.0);
  const Matrix b = gaussian_matrix(rng, n, n, 1.0);
  for (auto _ : state) {
    Matrix c = matmul(a, b);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(256)->Arg(512);

MlpParams bench_net(Rng& rng) {
  return make_mlp({196, 100, 100, 100, 10}, ActivationKind::Tanh, OutputMap::Identity,
                  false, InitSpec{InitSpec::Kind::GaussianStd, 1e-2}, rng);
}

void bm_forward(benchmark::State& state) {
  Rng rng(7);
  const MlpParams params = bench_net(rng);
  const Matrix x = gaussian_matrix(rng, 128, 196, 1.0);
  for (auto _ : state) {
    ForwardTrace tr = forward(params, x);
    benchmark::DoNotOptimize(tr.yhat.data.data());
  }
}
BENCHMARK(bm_forward);

void bm_dfa_step(benchmark::State& state) {
  Rng rng(7);
  MlpParams params = bench_net(rng);
  const FeedbackEnsemble fb =
      init_feedback(FeedbackKind::Dfa, params.widths(), FeedbackInit{}, rng);
  const Matrix x = gaussian_matrix(rng, 128, 196, 1.0);
  Matrix y(128, 10);
  for (std::size_t i = 0; i < 128; ++i) y(i, i % 10) = 1.0;
  for (auto _ : state) {
    const ForwardTrace tr = forward(params, x);
    const Matrix e = error_signal(params, tr, y, ErrorKind::Mse);
    LayerDeltas d = dfa_deltas(params, fb, tr, e, 1e-4 / 128.0);
    benchmark::DoNotOptimize(d.delta_w.data());
  }
}
BENCHMARK(bm_dfa_step);

void bm_bp_step(benchmark::State& state) {
  Rng rng(7);
  MlpParams params = bench_net(rng);
  const Matrix x = gaussian_matrix(rng, 128, 196, 1.0);
  Matrix y(128, 10);
  for (std::size_t i = 0; i < 128; ++i) y(i, i % 10) = 1.0;
  for (auto _ : state) {
    const ForwardTrace tr = forward(params, x);
    const Matrix e = error_signal(params, tr, y, ErrorKind::Mse);
    LayerDeltas d = bp_deltas(params, tr, e, 1e-4 / 128.0);
    benchmark::DoNotOptimize(d.delta_w.data());
  }
}
BENCHMARK(bm_bp_step);

void bm_i4(benchmark::State& state) {
  Matrix cov(4, 4);
  const double base[16] = {1.0, 0.3, 0.2, 0.1, 0.3, 1.1, 0.15, 0.25,
                           0.2, 0.15, 0.9, 0.05, 0.1, 0.25, 0.05, 1.2};
  for (std::size_t i = 0; i < 16; ++i) cov.data[i] = base[i];
  for (auto _ : state) {
    double v = i4(ActivationKind::ScaledErf, cov);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_i4);

void bm_eom_rhs(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  OdeSystem sys;
  sys.t = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) sys.t(i, i) = 1.0;
  sys.teacher_w2.assign(k, 1.0);
  sys.f1 = gaussian_vector(rng, k, 1.0);
  OdeState s;
  s.q = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) s.q(i, i) = 0.3;
  s.r = Matrix(k, k, 0.05);
  s.w2.assign(k, 0.1);
  for (auto _ : state) {
    OdeState d = eom_rhs(s, sys);
    benchmark::DoNotOptimize(d.w2.data());
  }
}
BENCHMARK(bm_eom_rhs)->Arg(2)->Arg(4);

void bm_alignment_step(benchmark::State& state) {
  Rng rng(7);
  const std::vector<std::size_t> widths{50, 40, 30, 20, 10};
  const FeedbackEnsemble fb = init_feedback(FeedbackKind::Dfa, widths, FeedbackInit{}, rng);
  AlignmentAccumulator acc(widths, 1e-2, feedback_grams(direct_feedback(fb)));
  const Matrix x = gaussian_matrix(rng, 32, 50, 1.0);
  const Matrix e = gaussian_matrix(rng, 32, 10, 1.0);
  for (auto _ : state) {
    acc.step(x, e);
    benchmark::DoNotOptimize(acc.state().steps);
  }
}
BENCHMARK(bm_alignment_step);

}  // namespace

BENCHMARK_MAIN();
