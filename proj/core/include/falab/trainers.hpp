#pragma once

#include <vector>

#include "falab/network.hpp"

namespace falab {

enum class ErrorKind { Mse, SoftmaxCrossEntropy };

/// Fa: feedback[l-1] has shape n_l x n_{l+1} and replaces W_{l+1}^T in the
/// backward pass. Dfa: feedback[l-1] has shape n_l x n_L and projects the
/// output error straight to layer l.
enum class FeedbackKind { Fa, Dfa };

struct FeedbackEnsemble {
  FeedbackKind kind = FeedbackKind::Dfa;
  std::vector<Matrix> f;  // one matrix per hidden layer, l = 1..L-1
};

struct FeedbackInit {
  enum class Kind { Uniform, Gaussian, LeftOrthogonal };
  Kind kind = Kind::Uniform;
  double stddev = 1.0;  // Gaussian only
};

/// Uniform feedback entries are drawn on [-s, +s] with s = 1/sqrt(n_l + 1),
/// n_l the width the matrix feeds into. LeftOrthogonal gives F^T F = I
/// (requires n_l >= columns).
FeedbackEnsemble init_feedback(FeedbackKind kind, const std::vector<std::size_t>& widths,
                               const FeedbackInit& init, Rng& rng);

/// Per-sample rows of e = dJ/da_L. Mse requires the Identity output map
/// (e = yhat - y); SoftmaxCrossEntropy requires Softmax (e = p - y).
Matrix error_signal(const MlpParams& params, const ForwardTrace& trace, const Matrix& y,
                    ErrorKind kind);

/// Mean per-sample loss over the batch, for logging.
double loss_value(const MlpParams& params, const ForwardTrace& trace, const Matrix& y,
                  ErrorKind kind);

/// delta_a[l-1] holds the per-sample error signals of layer l (B x n_l,
/// not scaled by the learning rate); delta_w[l-1] = -lr * sum over the batch
/// of delta_a_l h_{l-1}^T, ready for apply(). Batch semantics are a plain
/// sum; divide lr by the batch size for mean-reduction updates.
struct LayerDeltas {
  std::vector<Matrix> delta_a;
  std::vector<Matrix> delta_w;
  std::vector<std::vector<double>> delta_b;  // empty when the net has no biases
};

LayerDeltas bp_deltas(const MlpParams& params, const ForwardTrace& trace, const Matrix& e,
                      double lr);
LayerDeltas fa_deltas(const MlpParams& params, const FeedbackEnsemble& fb,
                      const ForwardTrace& trace, const Matrix& e, double lr);
LayerDeltas dfa_deltas(const MlpParams& params, const FeedbackEnsemble& fb,
                       const ForwardTrace& trace, const Matrix& e, double lr);
/// Error-free variant: the projected signal is -y instead of e.
LayerDeltas drtp_deltas(const MlpParams& params, const FeedbackEnsemble& fb,
                        const ForwardTrace& trace, const Matrix& y, double lr);

void apply(MlpParams& params, const LayerDeltas& deltas);

}  // namespace falab
