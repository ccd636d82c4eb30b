#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "falab/matrix.hpp"
#include "falab/network.hpp"
#include "falab/rng.hpp"

namespace falab {

/// Two-layer teacher y = sum_m w2_m g(w1_m . x / sqrt(N)) over standard
/// normal inputs x in R^N. Rows of w1 are the teacher's receptive fields.
struct Teacher {
  Matrix w1;                // M x N
  std::vector<double> w2;   // M
  ActivationKind activation = ActivationKind::ScaledErf;

  std::size_t hidden() const { return w1.rows; }
  std::size_t input_dim() const { return w1.cols; }
};

struct TeacherSpec {
  /// Orthonormalise the rows (scaled so w1 w1^T / N = I).
  bool orthogonal_rows = true;
  enum class SecondLayer { Ones, Gaussian } second_layer = SecondLayer::Ones;
};

Teacher make_teacher(std::size_t m, std::size_t n, ActivationKind g, const TeacherSpec& spec,
                     Rng& rng);

/// Student/teacher overlaps of a committee pair: q = w1 w1^T / N,
/// r = w1 t1^T / N, t = t1 t1^T / N, plus both second layers.
struct OrderParams {
  Matrix q;  // K x K
  Matrix r;  // K x M
  Matrix t;  // M x M
  std::vector<double> w2;         // K
  std::vector<double> teacher_w2; // M
};

OrderParams order_params_from_weights(const Matrix& student_w1,
                                      const std::vector<double>& student_w2,
                                      const Teacher& teacher);

/// Generalisation error from the overlaps alone. Closed forms cover
/// ScaledErf and Linear; other activations are estimated by sampling.
double eg_from_order_params(const OrderParams& op, ActivationKind g);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Unbiased estimate of E[ (yhat - y)^2 ] / 2 over fresh inputs.
McEstimate eg_monte_carlo(const Matrix& student_w1, const std::vector<double>& student_w2,
                          ActivationKind g, const Teacher& teacher, std::size_t samples,
                          Rng& rng);

enum class ShallowRule { Bp, Dfa };

struct ShallowLogRow {
  double alpha = 0.0;
  OrderParams op;
  double eg = 0.0;  // NaN when not evaluated
  std::optional<double> cos_w2_f1;
};

struct ShallowRunOptions {
  double lr = 0.1;
  std::size_t steps = 0;
  /// Log every `cadence` steps (row 0 and the final step always log);
  /// 0 logs only those two.
  std::size_t cadence = 0;
  /// Sample count for the logged error when no closed form applies;
  /// 0 skips the estimate (NaN in the log).
  std::size_t mc_eg_samples = 20000;
};

/// Online SGD on one fresh sample per step, first layer at rate lr, second
/// at lr/N. Dfa gates the first-layer error signal with the fixed feedback
/// vector f1; Bp gates it with the live second-layer weights. Mutates the
/// student in place and returns the logged trajectory.
std::vector<ShallowLogRow> online_train(Matrix& student_w1, std::vector<double>& student_w2,
                                        const Teacher& teacher, ShallowRule rule,
                                        const std::vector<double>& f1,
                                        const ShallowRunOptions& opt, Rng& rng);

/// Closed-form learnability of the sign configuration: the probability that
/// a K-node student with fair random feedback signs can fit an M-node
/// teacher, 2^-K sum_{k=0..M} binomial(K, k). Requires M <= K.
double p_learn_formula(std::size_t k, std::size_t m);

struct PLearnOptions {
  std::size_t input_dim = 500;
  double lr = 0.1;
  double init_std = 1e-2;
  double alpha_max = 200.0;
  std::size_t trials = 50;
  double threshold = 1e-3;
  std::size_t eg_samples = 40000;
  /// -1 draws feedback signs at random; otherwise exactly this many of the
  /// K feedback entries are positive (positions randomised).
  int forced_positive = -1;
};

struct PLearnEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double fraction = 0.0;
  std::vector<double> final_eg;
};

/// Fraction of independent ReLU teacher-student runs (teacher second layer
/// all ones) that reach eg below the threshold within the step budget.
PLearnEstimate p_learn_empirical(std::size_t k, std::size_t m, const PLearnOptions& opt,
                                 Rng& rng);

}  // namespace falab
