#pragma once

#include <optional>
#include <vector>

#include "falab/trainers.hpp"

namespace falab {

/// Integrated error/input history of a zero-initialised deep linear net
/// trained with direct error projection. a1 is n_L x n_0; a[j] is the
/// n_L x n_L matrix for layer j+2. With these, the trained weights factorise
/// as W_1 = G_1 A_1, W_l = G_l A_l G_{l-1}^T (1 < l < L), W_L = A_L G_{L-1}^T,
/// where G_l are the direct feedback matrices.
struct AlignmentMatrices {
  double lr = 0.0;
  std::size_t steps = 0;
  Matrix a1;
  std::vector<Matrix> a;
};

/// Incrementally accumulates the alignment matrices from the training
/// stream in O(1) work per sample (running partial sums instead of the
/// quadratic double sum over step pairs). Within a call, the propagation
/// products are frozen at their values from before the call, matching
/// sequential training where each step's update uses the pre-step weights.
class AlignmentAccumulator {
 public:
  /// widths = n_0..n_L; lr is the per-sample learning rate actually applied
  /// (i.e. already divided by the batch size for mean-reduction training).
  /// grams, when given, holds F_l^T F_l for the propagating hidden layers
  /// (l = 1..L-2, each n_L x n_L); the pairing inner products are then
  /// weighted by them, which makes the factorisation exact for arbitrary
  /// feedback. Left empty, pairings are plain dot products, which is exact
  /// exactly when the feedback matrices have orthonormal columns.
  AlignmentAccumulator(const std::vector<std::size_t>& widths, double lr,
                       std::vector<Matrix> grams = {});

  /// Feed one optimisation step: x_batch is B x n_0, e_batch is B x n_L.
  void step(const Matrix& x_batch, const Matrix& e_batch);

  const AlignmentMatrices& state() const { return state_; }

 private:
  std::vector<double> gram_apply(std::size_t j, const std::vector<double>& v) const;

  AlignmentMatrices state_;
  std::vector<Matrix> partial_;  // S_l = sum over history of e z_{l-2}^T
  std::vector<Matrix> grams_;
  std::size_t n0_ = 0, n_out_ = 0, depth_ = 0;
};

/// F_l^T F_l for every feedback matrix except the top one, in layer order:
/// the Gram weights for AlignmentAccumulator.
std::vector<Matrix> feedback_grams(const std::vector<Matrix>& feedback);

/// The per-layer matrices that substitute for the transported transpose in
/// the backward pass: for Dfa the feedback matrices themselves; for Fa the
/// suffix products F_l F_{l+1} ... F_{L-1}.
std::vector<Matrix> direct_feedback(const FeedbackEnsemble& fb);

/// Relative factorisation residuals ||W_l - prediction|| / max(||W_l||, eps)
/// per layer, using the direct feedback matrices. Exact (to roundoff) for
/// linear nets trained from zero init with the matching rule.
std::vector<double> weak_alignment_residuals(const MlpParams& params,
                                             const std::vector<Matrix>& feedback,
                                             const AlignmentMatrices& am);

struct ConditioningReport {
  double sv_ratio = 0.0;          // sigma_min / sigma_max
  double identity_distance = 0.0; // ||A/tau - I|| / ||I||, tau = trace(A)/n
};

ConditioningReport conditioning(const Matrix& a);

/// Weight and gradient alignment observables. wa_layer[i] is the cosine
/// between W_{i+2} and its feedback product; ga_layer[i] compares layer
/// i+1's error signal under the ensemble's rule against backprop. The output
/// layer's gradient alignment is identically 1 and excluded everywhere.
/// Degenerate (zero-norm) comparisons are left empty.
struct AlignmentReport {
  std::optional<double> wa_global;
  std::optional<double> ga_global;
  std::vector<std::optional<double>> wa_layer;
  std::vector<std::optional<double>> ga_layer;
};

AlignmentReport alignment_report(const MlpParams& params, const FeedbackEnsemble& fb,
                                 const ForwardTrace& trace, const Matrix& e);

/// Variant taking the competing update signals explicitly, for rules whose
/// own error signal differs from the true error (target projection): the
/// first set is the rule under study, the second backprop's on the same
/// forward trace.
AlignmentReport alignment_report(const MlpParams& params, const FeedbackEnsemble& fb,
                                 const LayerDeltas& rule_deltas, const LayerDeltas& bp);

/// Cosine between two networks' stacked parameters. Shapes must match.
std::optional<double> interrun_cosine(const MlpParams& a, const MlpParams& b);

}  // namespace falab
