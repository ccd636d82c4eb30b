#include "falab/trainers.hpp"

#include <cmath>
#include <stdexcept>

namespace falab {

using detail::require;

namespace {

Matrix orthonormal_columns(Rng& rng, std::size_t rows, std::size_t cols) {
  require(rows >= cols, "init_feedback: left-orthogonal needs rows >= cols");
  Matrix m = gaussian_matrix(rng, rows, cols, 1.0);
  // Modified Gram-Schmidt on columns.
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < rows; ++i) proj += m(i, j) * m(i, k);
      for (std::size_t i = 0; i < rows; ++i) m(i, j) -= proj * m(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) nrm += m(i, j) * m(i, j);
    nrm = std::sqrt(nrm);
    require(nrm > 1e-12, "init_feedback: degenerate column during orthogonalization");
    for (std::size_t i = 0; i < rows; ++i) m(i, j) /= nrm;
  }
  return m;
}

Matrix draw_feedback(const FeedbackInit& init, Rng& rng, std::size_t rows, std::size_t cols) {
  switch (init.kind) {
    case FeedbackInit::Kind::Uniform:
      return uniform_matrix(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(rows) + 1.0));
    case FeedbackInit::Kind::Gaussian:
      return gaussian_matrix(rng, rows, cols, init.stddev);
    case FeedbackInit::Kind::LeftOrthogonal:
      return orthonormal_columns(rng, rows, cols);
  }
  throw std::invalid_argument("init_feedback: unknown init kind");
}

// delta_a_l = signal ⊙ g'(a_l), where signal arrives as a B x n_l matrix.
void apply_gate(Matrix& signal, const Matrix& pre, ActivationKind g) {
  for (std::size_t i = 0; i < signal.size(); ++i)
    signal.data[i] *= activation_derivative(g, pre.data[i]);
}

LayerDeltas finish_deltas(const MlpParams& params, const ForwardTrace& trace,
                          std::vector<Matrix> delta_a, double lr) {
  LayerDeltas d;
  d.delta_a = std::move(delta_a);
  const std::size_t depth = params.depth();
  for (std::size_t l = 0; l < depth; ++l) {
    const Matrix& h_prev = (l == 0) ? trace.x : trace.post[l - 1];
    Matrix dw = matmul_tn(d.delta_a[l], h_prev);
    scale(dw, -lr);
    d.delta_w.push_back(std::move(dw));
    if (params.has_biases()) {
      std::vector<double> db(d.delta_a[l].cols, 0.0);
      for (std::size_t i = 0; i < d.delta_a[l].rows; ++i) {
        const double* row = d.delta_a[l].row(i);
        for (std::size_t j = 0; j < db.size(); ++j) db[j] += row[j];
      }
      for (double& v : db) v *= -lr;
      d.delta_b.push_back(std::move(db));
    }
  }
  return d;
}

void check_error_shape(const MlpParams& params, const ForwardTrace& trace, const Matrix& e) {
  require(e.rows == trace.x.rows && e.cols == params.weights.back().rows,
          "deltas: error matrix shape mismatch");
}

}  // namespace

FeedbackEnsemble init_feedback(FeedbackKind kind, const std::vector<std::size_t>& widths,
                               const FeedbackInit& init, Rng& rng) {
  require(widths.size() >= 2, "init_feedback: need at least input and output widths");
  FeedbackEnsemble fb;
  fb.kind = kind;
  const std::size_t depth = widths.size() - 1;
  const std::size_t n_out = widths.back();
  for (std::size_t l = 1; l < depth; ++l) {
    const std::size_t cols = (kind == FeedbackKind::Fa) ? widths[l + 1] : n_out;
    fb.f.push_back(draw_feedback(init, rng, widths[l], cols));
  }
  return fb;
}

Matrix error_signal(const MlpParams& params, const ForwardTrace& trace, const Matrix& y,
                    ErrorKind kind) {
  require(y.same_shape(trace.yhat), "error_signal: target shape mismatch");
  if (kind == ErrorKind::Mse)
    require(params.output_map == OutputMap::Identity,
            "error_signal: Mse is defined for the Identity output map");
  else
    require(params.output_map == OutputMap::Softmax,
            "error_signal: SoftmaxCrossEntropy is defined for the Softmax output map");
  Matrix e = trace.yhat;
  add_scaled(e, y, -1.0);
  return e;
}

double loss_value(const MlpParams& params, const ForwardTrace& trace, const Matrix& y,
                  ErrorKind kind) {
  require(y.same_shape(trace.yhat), "loss_value: target shape mismatch");
  double total = 0.0;
  if (kind == ErrorKind::Mse) {
    require(params.output_map == OutputMap::Identity,
            "loss_value: Mse is defined for the Identity output map");
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = trace.yhat.data[i] - y.data[i];
      total += 0.5 * d * d;
    }
  } else {
    require(params.output_map == OutputMap::Softmax,
            "loss_value: SoftmaxCrossEntropy is defined for the Softmax output map");
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y.data[i] != 0.0) total -= y.data[i] * std::log(std::max(trace.yhat.data[i], 1e-300));
  }
  return total / static_cast<double>(y.rows);
}

LayerDeltas bp_deltas(const MlpParams& params, const ForwardTrace& trace, const Matrix& e,
                      double lr) {
  check_error_shape(params, trace, e);
  const std::size_t depth = params.depth();
  std::vector<Matrix> delta_a(depth);
  delta_a[depth - 1] = e;
  for (std::size_t l = depth - 1; l-- > 0;) {
    Matrix back = matmul(delta_a[l + 1], params.weights[l + 1]);
    apply_gate(back, trace.pre[l], params.activation);
    delta_a[l] = std::move(back);
  }
  return finish_deltas(params, trace, std::move(delta_a), lr);
}

LayerDeltas fa_deltas(const MlpParams& params, const FeedbackEnsemble& fb,
                      const ForwardTrace& trace, const Matrix& e, double lr) {
  check_error_shape(params, trace, e);
  require(fb.kind == FeedbackKind::Fa, "fa_deltas: ensemble is not Fa");
  require(fb.f.size() + 1 == params.depth(), "fa_deltas: feedback depth mismatch");
  const std::size_t depth = params.depth();
  std::vector<Matrix> delta_a(depth);
  delta_a[depth - 1] = e;
  for (std::size_t l = depth - 1; l-- > 0;) {
    Matrix back = matmul_nt(delta_a[l + 1], fb.f[l]);
    apply_gate(back, trace.pre[l], params.activation);
    delta_a[l] = std::move(back);
  }
  return finish_deltas(params, trace, std::move(delta_a), lr);
}

LayerDeltas dfa_deltas(const MlpParams& params, const FeedbackEnsemble& fb,
                       const ForwardTrace& trace, const Matrix& e, double lr) {
  check_error_shape(params, trace, e);
  require(fb.kind == FeedbackKind::Dfa, "dfa_deltas: ensemble is not Dfa");
  require(fb.f.size() + 1 == params.depth(), "dfa_deltas: feedback depth mismatch");
  const std::size_t depth = params.depth();
  std::vector<Matrix> delta_a(depth);
  delta_a[depth - 1] = e;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    Matrix proj = matmul_nt(e, fb.f[l]);
    apply_gate(proj, trace.pre[l], params.activation);
    delta_a[l] = std::move(proj);
  }
  return finish_deltas(params, trace, std::move(delta_a), lr);
}

LayerDeltas drtp_deltas(const MlpParams& params, const FeedbackEnsemble& fb,
                        const ForwardTrace& trace, const Matrix& y, double lr) {
  Matrix neg_y = y;
  scale(neg_y, -1.0);
  return dfa_deltas(params, fb, trace, neg_y, lr);
}

void apply(MlpParams& params, const LayerDeltas& deltas) {
  require(deltas.delta_w.size() == params.depth(), "apply: delta depth mismatch");
  for (std::size_t l = 0; l < params.depth(); ++l)
    add_scaled(params.weights[l], deltas.delta_w[l], 1.0);
  if (params.has_biases()) {
    require(deltas.delta_b.size() == params.biases.size(), "apply: bias delta depth mismatch");
    for (std::size_t l = 0; l < params.biases.size(); ++l)
      for (std::size_t j = 0; j < params.biases[l].size(); ++j)
        params.biases[l][j] += deltas.delta_b[l][j];
  }
}

}  // namespace falab
