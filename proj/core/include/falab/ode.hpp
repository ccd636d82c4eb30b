#pragma once

#include <cstdint>
#include <vector>

#include "falab/matrix.hpp"
#include "falab/network.hpp"
#include "falab/teacher_student.hpp"

namespace falab {

/// State of the shallow online dynamics in the high-dimensional limit:
/// student-student overlap q (K x K), student-teacher overlap r (K x M) and
/// the student's second layer. The teacher side (t, teacher_w2) is fixed and
/// lives in OdeSystem.
struct OdeState {
  Matrix q;
  Matrix r;
  std::vector<double> w2;
};

struct OdeSystem {
  Matrix t;                        // M x M teacher self-overlap
  std::vector<double> teacher_w2;  // M
  /// Feedback vector gating the first-layer update. Ignored when bp is set,
  /// in which case the live second layer gates instead.
  std::vector<double> f1;
  bool bp = false;
  double lr = 0.1;
  ActivationKind activation = ActivationKind::ScaledErf;

  std::size_t students() const { return f1.size(); }
  std::size_t teachers() const { return t.rows; }
};

/// Right-hand side of the averaged equations of motion in alpha = steps / N.
OdeState eom_rhs(const OdeState& s, const OdeSystem& sys);

enum class OdeMethod { Euler, Rk4 };

struct OdeLogRow {
  double alpha = 0.0;
  OdeState state;
  double eg = 0.0;
};

struct OdeRunOptions {
  double d_alpha = 1e-2;
  double alpha_max = 100.0;
  /// Log whenever alpha crosses a multiple of this (alpha = 0 and the final
  /// point always log); 0 logs only those two.
  double log_every = 0.0;
  OdeMethod method = OdeMethod::Euler;
  /// Abort threshold: integration throws once any state entry exceeds this.
  double divergence_limit = 1e10;
};

std::vector<OdeLogRow> integrate(OdeState state, const OdeSystem& sys,
                                 const OdeRunOptions& opt);

double eg_of_state(const OdeState& s, const OdeSystem& sys);

/// Scalar overlap values on the symmetric plateau of a K-node student
/// learning a K-node teacher (t = I, teacher second layer all ones):
/// q = 1 / (2K - 1), r = sqrt(q / 2), w2 = sqrt((1 + 2q) / (q (4 + 3q))).
struct PlateauValues {
  double q = 0.0;
  double r = 0.0;
  double w2 = 0.0;
};

PlateauValues plateau_values(std::size_t k);

/// The plateau state reached under feedback f1: overlaps carry the feedback
/// sign pattern, q_kl = sgn(f_k) sgn(f_l) q, r_km = sgn(f_k) r,
/// w2_k = sgn(f_k) w2.
OdeState plateau_state(const std::vector<double>& f1);

/// Leading-order state at small alpha from a vanishing start: r grows
/// linearly with slope (sqrt(2)/pi) lr teacher_w2_m f_k, the second layer
/// quadratically along f with coefficient (1/pi^2) lr^2 |teacher_w2|^2 f_k,
/// and q linearly with slope (2/(3 pi)) lr^2 |teacher_w2|^2 f_k f_l.
OdeState early_time_state(const std::vector<double>& f1,
                          const std::vector<double>& teacher_w2, double lr,
                          double alpha);

/// Closed forms for the alignment factors of a deep linear network trained
/// with error -y on whitened-or-not Gaussian data with linear targets
/// y = T x. sigma_x is the input covariance, t_map the target map T.
/// Layer 1 factor after `step` updates is lr * T * sigma_x * step, exactly.
Matrix drtp_a1_closed_form(const Matrix& t_map, const Matrix& sigma_x, double lr,
                           std::size_t step);

/// Exact cumulative layer-2 factor: lr^2 (T sigma_x^2 T^tr) step (step-1) / 2.
Matrix drtp_a2_closed_form(const Matrix& t_map, const Matrix& sigma_x, double lr,
                           std::size_t step);

/// One-step increment of the layer-l factor at time `step`:
/// lr^l (T sigma_x^2 T^tr)^(l-1) step for l >= 2, and the constant
/// lr T sigma_x for l = 1. Exact for l <= 2; for deeper layers the matrix
/// direction is exact while the scalar time dependence is the leading form.
Matrix drtp_rate_closed_form(const Matrix& t_map, const Matrix& sigma_x, double lr,
                             std::size_t l, std::size_t step);

/// First-order deviation of the normalised alignment factor of layer l from
/// the identity when inputs and targets deviate from whiteness:
/// (l - 1) * ((T T^tr - I) + 2 T (sigma_x - I) T^tr).
Matrix drtp_identity_deviation(const Matrix& t_map, const Matrix& sigma_x,
                               std::size_t l);

}  // namespace falab
