#include "falab/alignment.hpp"

#include <cmath>
#include <stdexcept>

namespace falab {

using detail::require;

AlignmentAccumulator::AlignmentAccumulator(const std::vector<std::size_t>& widths, double lr,
                                           std::vector<Matrix> grams) {
  require(widths.size() >= 2, "AlignmentAccumulator: need at least two widths");
  n0_ = widths.front();
  n_out_ = widths.back();
  depth_ = widths.size() - 1;
  grams_ = std::move(grams);
  require(grams_.empty() || grams_.size() + 2 >= depth_,
          "AlignmentAccumulator: need one Gram matrix per propagating layer");
  for (const Matrix& g : grams_)
    require(g.rows == n_out_ && g.cols == n_out_, "AlignmentAccumulator: Gram shape mismatch");
  state_.lr = lr;
  state_.a1 = Matrix(n_out_, n0_);
  for (std::size_t l = 2; l <= depth_; ++l) state_.a.push_back(Matrix(n_out_, n_out_));
  // S_2 pairs raw inputs (the propagation below layer 2 is the identity);
  // deeper partial sums live in the projected n_L space.
  for (std::size_t l = 2; l <= depth_; ++l)
    partial_.push_back(Matrix(n_out_, l == 2 ? n0_ : n_out_));
}

std::vector<double> AlignmentAccumulator::gram_apply(std::size_t j,
                                                     const std::vector<double>& v) const {
  if (grams_.empty()) return v;
  return matvec(grams_[j - 1], v);
}

void AlignmentAccumulator::step(const Matrix& x_batch, const Matrix& e_batch) {
  require(x_batch.cols == n0_, "AlignmentAccumulator: input width mismatch");
  require(e_batch.cols == n_out_, "AlignmentAccumulator: error width mismatch");
  require(x_batch.rows == e_batch.rows, "AlignmentAccumulator: batch size mismatch");
  const double lr = state_.lr;
  const std::size_t batch = x_batch.rows;

  // Propagated pairing vectors, all from the pre-step state: z_1 = A_1 x and
  // z_j = A_j Gram_{j-1} z_{j-1}. The pairing vector of layer l is z_{l-2}.
  std::vector<std::vector<std::vector<double>>> zbuf(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t top = (depth_ >= 2) ? depth_ - 2 : 0;
    auto& zs = zbuf[b];
    if (top >= 1) {
      std::vector<double> x(x_batch.row(b), x_batch.row(b) + n0_);
      zs.push_back(matvec(state_.a1, x));
      for (std::size_t j = 2; j <= top; ++j)
        zs.push_back(matvec(state_.a[j - 2], gram_apply(j - 1, zs.back())));
    }
  }

  // New samples paired against the frozen history. The whole batch shares
  // the pre-step weights, so within-batch pairs do not appear.
  for (std::size_t b = 0; b < batch; ++b) {
    const double* e = e_batch.row(b);
    for (std::size_t j = 0; j < state_.a.size(); ++j) {
      const std::size_t l = j + 2;
      std::vector<double> probe;
      if (l == 2) {
        probe.assign(x_batch.row(b), x_batch.row(b) + n0_);
      } else {
        probe = gram_apply(l - 2, zbuf[b][l - 3]);
      }
      const std::vector<double> paired = matvec(partial_[j], probe);
      Matrix& a = state_.a[j];
      for (std::size_t r = 0; r < n_out_; ++r) {
        double* arow = a.row(r);
        const double er = lr * lr * e[r];
        for (std::size_t c = 0; c < n_out_; ++c) arow[c] += er * paired[c];
      }
    }
  }

  // Only now does the batch enter the history.
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = x_batch.row(b);
    const double* e = e_batch.row(b);
    for (std::size_t r = 0; r < n_out_; ++r) {
      double* a1row = state_.a1.row(r);
      const double er = lr * e[r];
      for (std::size_t c = 0; c < n0_; ++c) a1row[c] -= er * x[c];
    }
    for (std::size_t j = 0; j < partial_.size(); ++j) {
      const std::size_t l = j + 2;
      Matrix& s = partial_[j];
      const double* hist = (l == 2) ? x : zbuf[b][l - 3].data();
      for (std::size_t r = 0; r < n_out_; ++r) {
        double* srow = s.row(r);
        for (std::size_t c = 0; c < s.cols; ++c) srow[c] += e[r] * hist[c];
      }
    }
  }
  state_.steps += 1;
}

std::vector<Matrix> feedback_grams(const std::vector<Matrix>& feedback) {
  std::vector<Matrix> g;
  for (std::size_t j = 0; j + 1 < feedback.size(); ++j)
    g.push_back(matmul_tn(feedback[j], feedback[j]));
  return g;
}

std::vector<Matrix> direct_feedback(const FeedbackEnsemble& fb) {
  if (fb.kind == FeedbackKind::Dfa) return fb.f;
  std::vector<Matrix> g(fb.f.size());
  if (fb.f.empty()) return g;
  g.back() = fb.f.back();
  for (std::size_t l = fb.f.size() - 1; l-- > 0;) g[l] = matmul(fb.f[l], g[l + 1]);
  return g;
}

std::vector<double> weak_alignment_residuals(const MlpParams& params,
                                             const std::vector<Matrix>& feedback,
                                             const AlignmentMatrices& am) {
  const std::size_t depth = params.depth();
  require(feedback.size() + 1 == depth, "weak_alignment_residuals: feedback depth mismatch");
  require(am.a.size() + 1 == depth, "weak_alignment_residuals: alignment depth mismatch");
  constexpr double kFloor = 1e-30;
  std::vector<double> res;
  for (std::size_t l = 1; l <= depth; ++l) {
    Matrix predicted;
    if (l == 1) {
      predicted = matmul(feedback[0], am.a1);
    } else if (l < depth) {
      predicted = matmul_nt(matmul(feedback[l - 1], am.a[l - 2]), feedback[l - 2]);
    } else {
      predicted = matmul_nt(am.a[l - 2], feedback[l - 2]);
    }
    Matrix diff = params.weights[l - 1];
    add_scaled(diff, predicted, -1.0);
    res.push_back(frobenius_norm(diff) /
                  std::max(frobenius_norm(params.weights[l - 1]), kFloor));
  }
  return res;
}

ConditioningReport conditioning(const Matrix& a) {
  require(a.rows == a.cols && a.rows > 0, "conditioning: square matrix required");
  ConditioningReport r;
  const std::vector<double> sv = singular_values(a);
  r.sv_ratio = (sv.front() > 0.0) ? sv.back() / sv.front() : 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) tau += a(i, i);
  tau /= static_cast<double>(a.rows);
  const double n = static_cast<double>(a.rows);
  if (tau == 0.0) {
    // No meaningful scale to normalise by; report the raw distance to I.
    Matrix diff = a;
    for (std::size_t i = 0; i < a.rows; ++i) diff(i, i) -= 1.0;
    r.identity_distance = frobenius_norm(diff) / std::sqrt(n);
    return r;
  }
  Matrix scaled = a;
  scale(scaled, 1.0 / tau);
  for (std::size_t i = 0; i < a.rows; ++i) scaled(i, i) -= 1.0;
  r.identity_distance = frobenius_norm(scaled) / std::sqrt(n);
  return r;
}

namespace {

// Cosine between two lists of equally-shaped blocks, flattened jointly.
std::optional<double> stacked_cosine(const std::vector<const Matrix*>& a,
                                     const std::vector<const Matrix*>& b) {
  double dotsum = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i]->same_shape(*b[i]), "stacked_cosine: block shape mismatch");
    dotsum += dot(*a[i], *b[i]);
    for (double v : a[i]->data) na += v * v;
    for (double v : b[i]->data) nb += v * v;
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dotsum / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

AlignmentReport alignment_report(const MlpParams& params, const FeedbackEnsemble& fb,
                                 const ForwardTrace& trace, const Matrix& e) {
  const LayerDeltas bp = bp_deltas(params, trace, e, 0.0);
  const LayerDeltas alt = (fb.kind == FeedbackKind::Dfa) ? dfa_deltas(params, fb, trace, e, 0.0)
                                                         : fa_deltas(params, fb, trace, e, 0.0);
  return alignment_report(params, fb, alt, bp);
}

AlignmentReport alignment_report(const MlpParams& params, const FeedbackEnsemble& fb,
                                 const LayerDeltas& rule_deltas, const LayerDeltas& bp) {
  const std::size_t depth = params.depth();
  require(depth >= 2, "alignment_report: need at least two layers");
  require(fb.f.size() + 1 == depth, "alignment_report: feedback depth mismatch");
  require(rule_deltas.delta_a.size() == depth && bp.delta_a.size() == depth,
          "alignment_report: delta depth mismatch");
  AlignmentReport rep;

  // Weight alignment: W_l against the product the backward substitution
  // would impose, F_l F_{l-1}^T for hidden l, F_{L-1}^T on top.
  const std::vector<Matrix> g = direct_feedback(fb);
  std::vector<Matrix> fprod;
  for (std::size_t l = 2; l <= depth; ++l)
    fprod.push_back(l < depth ? matmul_nt(g[l - 1], g[l - 2]) : transpose(g[l - 2]));
  std::vector<const Matrix*> wblocks, fblocks;
  for (std::size_t l = 2; l <= depth; ++l) {
    wblocks.push_back(&params.weights[l - 1]);
    fblocks.push_back(&fprod[l - 2]);
    rep.wa_layer.push_back(cosine(params.weights[l - 1], fprod[l - 2]));
  }
  rep.wa_global = stacked_cosine(fblocks, wblocks);

  // Gradient alignment: the rule's error signals against backprop's on the
  // same forward trace, hidden layers only (the top layer's signals are
  // identical by construction for error-driven rules).
  std::vector<const Matrix*> bpblocks, altblocks;
  for (std::size_t l = 1; l < depth; ++l) {
    bpblocks.push_back(&bp.delta_a[l - 1]);
    altblocks.push_back(&rule_deltas.delta_a[l - 1]);
    rep.ga_layer.push_back(cosine(rule_deltas.delta_a[l - 1], bp.delta_a[l - 1]));
  }
  rep.ga_global = stacked_cosine(altblocks, bpblocks);
  return rep;
}

std::optional<double> interrun_cosine(const MlpParams& a, const MlpParams& b) {
  require(a.depth() == b.depth(), "interrun_cosine: depth mismatch");
  double dotsum = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t l = 0; l < a.depth(); ++l) {
    require(a.weights[l].same_shape(b.weights[l]), "interrun_cosine: shape mismatch");
    dotsum += dot(a.weights[l], b.weights[l]);
    for (double v : a.weights[l].data) na += v * v;
    for (double v : b.weights[l].data) nb += v * v;
  }
  require(a.biases.size() == b.biases.size(), "interrun_cosine: bias layout mismatch");
  for (std::size_t l = 0; l < a.biases.size(); ++l) {
    require(a.biases[l].size() == b.biases[l].size(), "interrun_cosine: bias length mismatch");
    for (std::size_t j = 0; j < a.biases[l].size(); ++j) {
      dotsum += a.biases[l][j] * b.biases[l][j];
      na += a.biases[l][j] * a.biases[l][j];
      nb += b.biases[l][j] * b.biases[l][j];
    }
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dotsum / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace falab
