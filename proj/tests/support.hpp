#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "falab/alignment.hpp"
#include "falab/matrix.hpp"
#include "falab/rng.hpp"
#include "falab/trainers.hpp"

namespace testutil {

using namespace falab;

/// Fresh unique directory under the system temp root.
inline std::string temp_dir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  const auto base = std::filesystem::temp_directory_path() / "falab-tests";
  const auto dir = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir.string();
}

/// Random symmetric PSD matrix with O(1) entries: C = B B^T / k.
inline Matrix random_psd(Rng& rng, std::size_t n, std::size_t rank_excess = 2) {
  const std::size_t k = n + rank_excess;
  const Matrix b = gaussian_matrix(rng, n, k, 1.0);
  Matrix c = matmul_nt(b, b);
  scale(c, 1.0 / static_cast<double>(k));
  return c;
}

/// Lower-triangular L with L L^T = c (c must be positive definite).
inline Matrix cholesky_lower(const Matrix& c) {
  const std::size_t n = c.rows;
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = c(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0) throw std::runtime_error("cholesky_lower: not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

struct McResult {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo estimate of E[f(z)] for z ~ N(0, cov).
template <typename F>
McResult mc_expect(const Matrix& cov, std::size_t samples, Rng& rng, F f) {
  const std::size_t n = cov.rows;
  const Matrix l = cholesky_lower(cov);
  std::vector<double> raw(n), z(n);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < n; ++i) raw[i] = rng.gaussian();
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j <= i; ++j) v += l(i, j) * raw[j];
      z[i] = v;
    }
    const double v = f(z.data());
    sum += v;
    sum2 += v * v;
  }
  McResult out;
  const double m = sum / static_cast<double>(samples);
  out.mean = m;
  out.std_error = std::sqrt(std::max(0.0, sum2 / static_cast<double>(samples) - m * m) /
                            static_cast<double>(samples));
  return out;
}

struct StepRecord {
  Matrix x;  // B x n_0
  Matrix e;  // B x n_L
};

/// Literal double-sum evaluation of the integrated error/input history:
/// A_1 = -lr sum_t e_t x_t^T, and for l >= 2
/// A_l = lr^2 sum_t sum_{s<t} <z_{l-2}^t, Gam_{l-2} z_{l-2}^s> e_t e_s^T,
/// with z_0 = x, z_1^t = A_1^t x_t, z_j^t = A_j^t Gam_{j-1} z_{j-1}^t, every
/// A frozen at its start-of-step value and batch-mates never paired.
/// Quadratic in the history length; the oracle for AlignmentAccumulator.
inline AlignmentMatrices brute_force_alignment(const std::vector<StepRecord>& hist,
                                               const std::vector<std::size_t>& widths,
                                               double lr,
                                               const std::vector<Matrix>& grams) {
  const std::size_t depth = widths.size() - 1;
  const std::size_t n0 = widths.front();
  const std::size_t n_out = widths.back();
  AlignmentMatrices am;
  am.lr = lr;
  am.steps = hist.size();
  am.a1 = Matrix(n_out, n0);
  for (std::size_t l = 2; l <= depth; ++l) am.a.emplace_back(n_out, n_out);

  // z-chain values per past step, as of entering that step.
  std::vector<std::vector<Matrix>> zhist(depth >= 2 ? depth - 1 : 0);

  for (std::size_t t = 0; t < hist.size(); ++t) {
    const Matrix& x = hist[t].x;
    const Matrix& e = hist[t].e;

    std::vector<Matrix> zt;
    if (depth >= 2) {
      zt.resize(depth - 1);
      zt[0] = x;
      for (std::size_t j = 1; j + 1 < depth; ++j) {
        Matrix fed = zt[j - 1];
        if (j >= 2 && !grams.empty()) fed = matmul(fed, grams[j - 2]);
        zt[j] = matmul_nt(fed, j == 1 ? am.a1 : am.a[j - 2]);
      }
    }

    for (std::size_t l = 2; l <= depth; ++l) {
      const Matrix& znow = zt[l - 2];
      const Matrix* gram = (l >= 3 && !grams.empty()) ? &grams[l - 3] : nullptr;
      for (std::size_t s = 0; s < t; ++s) {
        const Matrix& zpast = zhist[l - 2][s];
        const Matrix& epast = hist[s].e;
        for (std::size_t b = 0; b < znow.rows; ++b) {
          for (std::size_t bp = 0; bp < zpast.rows; ++bp) {
            double w = 0.0;
            if (gram) {
              for (std::size_t i = 0; i < znow.cols; ++i) {
                double gi = 0.0;
                for (std::size_t ii = 0; ii < znow.cols; ++ii)
                  gi += (*gram)(i, ii) * zpast(bp, ii);
                w += znow(b, i) * gi;
              }
            } else {
              for (std::size_t i = 0; i < znow.cols; ++i) w += znow(b, i) * zpast(bp, i);
            }
            w *= lr * lr;
            for (std::size_t i = 0; i < n_out; ++i)
              for (std::size_t ii = 0; ii < n_out; ++ii)
                am.a[l - 2](i, ii) += w * e(b, i) * epast(bp, ii);
          }
        }
      }
    }

    for (std::size_t b = 0; b < x.rows; ++b)
      for (std::size_t i = 0; i < n_out; ++i)
        for (std::size_t j = 0; j < n0; ++j) am.a1(i, j) -= lr * e(b, i) * x(b, j);

    for (std::size_t j = 0; j + 1 < depth && depth >= 2; ++j)
      zhist[j].push_back(zt[j]);
  }
  return am;
}

/// Train a zero-initialised linear net for `steps` batches of fresh
/// gaussian data against a random linear teacher, recording the error
/// signals the rule actually projected. lr is divided by the batch size.
struct LinearRunData {
  MlpParams params;
  FeedbackEnsemble fb;
  std::vector<Matrix> direct;
  std::vector<StepRecord> history;
  double lr_eff = 0.0;
};

enum class DeepAlgoLike { Fa, Dfa, Drtp };

inline LinearRunData train_linear_recorded(const std::vector<std::size_t>& widths,
                                           DeepAlgoLike algo, std::size_t steps,
                                           std::size_t batch, double lr, Rng& rng) {
  LinearRunData out;
  Rng net_rng = rng.substream("net");
  out.params = make_mlp(widths, ActivationKind::Linear, OutputMap::Identity, false,
                        InitSpec{InitSpec::Kind::Zero, 0.0}, net_rng);
  Rng fb_rng = rng.substream("feedback");
  out.fb = init_feedback(algo == DeepAlgoLike::Fa ? FeedbackKind::Fa : FeedbackKind::Dfa,
                         widths, FeedbackInit{FeedbackInit::Kind::Gaussian, 1.0}, fb_rng);
  out.direct = direct_feedback(out.fb);
  out.lr_eff = lr / static_cast<double>(batch);

  Rng t_rng = rng.substream("teacher");
  const Matrix t_map = gaussian_matrix(t_rng, widths.back(), widths.front(),
                                       1.0 / std::sqrt(static_cast<double>(widths.front())));
  Rng d_rng = rng.substream("data");
  for (std::size_t step = 0; step < steps; ++step) {
    const Matrix x = gaussian_matrix(d_rng, batch, widths.front(), 1.0);
    const Matrix y = matmul_nt(x, t_map);
    const ForwardTrace tr = forward(out.params, x);
    Matrix e;
    LayerDeltas deltas;
    if (algo == DeepAlgoLike::Drtp) {
      e = y;
      scale(e, -1.0);
      deltas = drtp_deltas(out.params, out.fb, tr, y, out.lr_eff);
    } else {
      e = error_signal(out.params, tr, y, ErrorKind::Mse);
      deltas = algo == DeepAlgoLike::Fa ? fa_deltas(out.params, out.fb, tr, e, out.lr_eff)
                                        : dfa_deltas(out.params, out.fb, tr, e, out.lr_eff);
    }
    out.history.push_back({x, e});
    apply(out.params, deltas);
  }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace testutil
