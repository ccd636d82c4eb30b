#include "falab/ode.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "falab/gaussian_integrals.hpp"

namespace falab {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Covariance lookup over the joint field vector (lambda_0..lambda_{K-1},
/// nu_0..nu_{M-1}).
struct FieldCov {
  const OdeState& s;
  const OdeSystem& sys;
  std::size_t k;

  double operator()(std::size_t a, std::size_t b) const {
    const bool at = a >= k, bt = b >= k;
    if (!at && !bt) return s.q(a, b);
    if (at && bt) return sys.t(a - k, b - k);
    if (!at) return s.r(a, b - k);
    return s.r(b, a - k);
  }
};

double i3_fields(const FieldCov& c, ActivationKind g, std::size_t u1, std::size_t u2,
                 std::size_t u3) {
  Matrix cov(3, 3);
  const std::size_t u[3] = {u1, u2, u3};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) cov(i, j) = c(u[i], u[j]);
  return i3(g, cov);
}

double i4_fields(const FieldCov& c, ActivationKind g, std::size_t u1, std::size_t u2,
                 std::size_t u3, std::size_t u4) {
  Matrix cov(4, 4);
  const std::size_t u[4] = {u1, u2, u3, u4};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) cov(i, j) = c(u[i], u[j]);
  return i4(g, cov);
}

/// E[g'(lambda_a) * x_b * e] with x_b indexed over the joint fields and
/// e the prediction error of the state.
double gated_field_error(const FieldCov& c, ActivationKind g, std::size_t a, std::size_t b,
                         const OdeState& s, const OdeSystem& sys) {
  const std::size_t k = s.q.rows;
  const std::size_t m = sys.t.rows;
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) acc += s.w2[j] * i3_fields(c, g, a, b, j);
  for (std::size_t n = 0; n < m; ++n)
    acc -= sys.teacher_w2[n] * i3_fields(c, g, a, b, k + n);
  return acc;
}

/// E[g'(lambda_a) g'(lambda_b) e^2].
double gated_sq_error(const FieldCov& c, ActivationKind g, std::size_t a, std::size_t b,
                      const OdeState& s, const OdeSystem& sys) {
  const std::size_t k = s.q.rows;
  const std::size_t m = sys.t.rows;
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t jp = 0; jp < k; ++jp)
      acc += s.w2[j] * s.w2[jp] * i4_fields(c, g, a, b, j, jp);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t n = 0; n < m; ++n)
      acc -= 2.0 * s.w2[j] * sys.teacher_w2[n] * i4_fields(c, g, a, b, j, k + n);
  for (std::size_t n = 0; n < m; ++n)
    for (std::size_t np = 0; np < m; ++np)
      acc += sys.teacher_w2[n] * sys.teacher_w2[np] * i4_fields(c, g, a, b, k + n, k + np);
  return acc;
}

void check_state(const OdeState& s, const OdeSystem& sys) {
  const std::size_t k = sys.students();
  const std::size_t m = sys.teachers();
  detail::require(k > 0 && m > 0, "ode: empty system");
  detail::require(s.q.rows == k && s.q.cols == k, "ode: q must be K x K");
  detail::require(s.r.rows == k && s.r.cols == m, "ode: r must be K x M");
  detail::require(s.w2.size() == k, "ode: w2 must have K entries");
  detail::require(sys.t.cols == m, "ode: t must be M x M");
  detail::require(sys.teacher_w2.size() == m, "ode: teacher_w2 must have M entries");
}

void axpy_state(OdeState& dst, const OdeState& d, double h) {
  add_scaled(dst.q, d.q, h);
  add_scaled(dst.r, d.r, h);
  for (std::size_t i = 0; i < dst.w2.size(); ++i) dst.w2[i] += h * d.w2[i];
}

double max_abs(const OdeState& s) {
  double m = 0.0;
  for (double v : s.q.data) m = std::max(m, std::fabs(v));
  for (double v : s.r.data) m = std::max(m, std::fabs(v));
  for (double v : s.w2) m = std::max(m, std::fabs(v));
  return m;
}

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

OdeState eom_rhs(const OdeState& s, const OdeSystem& sys) {
  check_state(s, sys);
  const std::size_t k = sys.students();
  const std::size_t m = sys.teachers();
  const ActivationKind g = sys.activation;
  const double lr = sys.lr;
  const FieldCov c{s, sys, k};

  auto gate = [&](std::size_t a) { return sys.bp ? s.w2[a] : sys.f1[a]; };

  OdeState d;
  d.r = Matrix(k, m);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t n = 0; n < m; ++n)
      d.r(a, n) = -lr * gate(a) * gated_field_error(c, g, a, k + n, s, sys);

  d.q = Matrix(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      double v = -lr * gate(a) * gated_field_error(c, g, a, b, s, sys) -
                 lr * gate(b) * gated_field_error(c, g, b, a, s, sys) +
                 lr * lr * gate(a) * gate(b) * gated_sq_error(c, g, a, b, s, sys);
      d.q(a, b) = v;
      d.q(b, a) = v;
    }
  }

  d.w2.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      acc += s.w2[j] * i2(g, s.q(a, a), s.q(a, j), s.q(j, j));
    for (std::size_t n = 0; n < m; ++n)
      acc -= sys.teacher_w2[n] * i2(g, s.q(a, a), s.r(a, n), sys.t(n, n));
    d.w2[a] = -lr * acc;
  }
  return d;
}

double eg_of_state(const OdeState& s, const OdeSystem& sys) {
  OrderParams op;
  op.q = s.q;
  op.r = s.r;
  op.t = sys.t;
  op.w2 = s.w2;
  op.teacher_w2 = sys.teacher_w2;
  return eg_from_order_params(op, sys.activation);
}

std::vector<OdeLogRow> integrate(OdeState state, const OdeSystem& sys,
                                 const OdeRunOptions& opt) {
  check_state(state, sys);
  detail::require(opt.d_alpha > 0.0, "integrate: step size must be positive");
  std::vector<OdeLogRow> rows;
  auto log_state = [&](double alpha) {
    rows.push_back({alpha, state, eg_of_state(state, sys)});
  };

  const std::size_t steps =
      static_cast<std::size_t>(std::ceil(opt.alpha_max / opt.d_alpha - 1e-12));
  double next_log = opt.log_every;
  log_state(0.0);
  for (std::size_t i = 0; i < steps; ++i) {
    const double alpha = static_cast<double>(i) * opt.d_alpha;
    const double h = std::min(opt.d_alpha, opt.alpha_max - alpha);
    if (opt.method == OdeMethod::Euler) {
      const OdeState d = eom_rhs(state, sys);
      axpy_state(state, d, h);
    } else {
      const OdeState k1 = eom_rhs(state, sys);
      OdeState s2 = state;
      axpy_state(s2, k1, 0.5 * h);
      const OdeState k2 = eom_rhs(s2, sys);
      OdeState s3 = state;
      axpy_state(s3, k2, 0.5 * h);
      const OdeState k3 = eom_rhs(s3, sys);
      OdeState s4 = state;
      axpy_state(s4, k3, h);
      const OdeState k4 = eom_rhs(s4, sys);
      axpy_state(state, k1, h / 6.0);
      axpy_state(state, k2, h / 3.0);
      axpy_state(state, k3, h / 3.0);
      axpy_state(state, k4, h / 6.0);
    }
    const double cur = alpha + h;
    if (max_abs(state) > opt.divergence_limit)
      throw std::runtime_error("ode integration diverged at alpha = " + std::to_string(cur) +
                               "; reduce the learning rate or the step size");
    if (opt.log_every > 0.0 && cur + 1e-12 >= next_log && cur < opt.alpha_max - 1e-12) {
      log_state(cur);
      while (next_log <= cur + 1e-12) next_log += opt.log_every;
    }
  }
  log_state(opt.alpha_max);
  return rows;
}

PlateauValues plateau_values(std::size_t k) {
  detail::require(k >= 1, "plateau_values: need at least one node");
  PlateauValues p;
  p.q = 1.0 / (2.0 * static_cast<double>(k) - 1.0);
  p.r = std::sqrt(p.q / 2.0);
  p.w2 = std::sqrt((1.0 + 2.0 * p.q) / (p.q * (4.0 + 3.0 * p.q)));
  return p;
}

OdeState plateau_state(const std::vector<double>& f1) {
  const std::size_t k = f1.size();
  const PlateauValues p = plateau_values(k);
  OdeState s;
  s.q = Matrix(k, k);
  s.r = Matrix(k, k);
  s.w2.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    const double sa = static_cast<double>(sgn(f1[a]));
    s.w2[a] = sa * p.w2;
    for (std::size_t b = 0; b < k; ++b)
      s.q(a, b) = sa * static_cast<double>(sgn(f1[b])) * p.q;
    for (std::size_t n = 0; n < k; ++n) s.r(a, n) = sa * p.r;
  }
  return s;
}

OdeState early_time_state(const std::vector<double>& f1,
                          const std::vector<double>& teacher_w2, double lr,
                          double alpha) {
  const std::size_t k = f1.size();
  const std::size_t m = teacher_w2.size();
  double tw2_sq = 0.0;
  for (double v : teacher_w2) tw2_sq += v * v;
  OdeState s;
  s.r = Matrix(k, m);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t n = 0; n < m; ++n)
      s.r(a, n) = alpha * (std::sqrt(2.0) / kPi) * lr * teacher_w2[n] * f1[a];
  s.q = Matrix(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      s.q(a, b) = alpha * (2.0 / (3.0 * kPi)) * lr * lr * tw2_sq * f1[a] * f1[b];
  s.w2.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    s.w2[a] = alpha * alpha * (1.0 / (kPi * kPi)) * lr * lr * tw2_sq * f1[a];
  return s;
}

Matrix drtp_a1_closed_form(const Matrix& t_map, const Matrix& sigma_x, double lr,
                           std::size_t step) {
  Matrix a = matmul(t_map, sigma_x);
  scale(a, lr * static_cast<double>(step));
  return a;
}

Matrix drtp_a2_closed_form(const Matrix& t_map, const Matrix& sigma_x, double lr,
                           std::size_t step) {
  Matrix ts = matmul(t_map, sigma_x);
  Matrix m = matmul_nt(ts, ts);  // T sigma_x sigma_x^tr T^tr
  const double t = static_cast<double>(step);
  scale(m, lr * lr * 0.5 * t * (t - 1.0));
  return m;
}

Matrix drtp_rate_closed_form(const Matrix& t_map, const Matrix& sigma_x, double lr,
                             std::size_t l, std::size_t step) {
  detail::require(l >= 1, "drtp_rate_closed_form: layers are 1-based");
  if (l == 1) return drtp_a1_closed_form(t_map, sigma_x, lr, step);
  Matrix ts = matmul(t_map, sigma_x);
  Matrix m = matmul_nt(ts, ts);
  Matrix p = m;
  for (std::size_t i = 2; i < l; ++i) p = matmul(p, m);
  scale(p, std::pow(lr, static_cast<double>(l)) * static_cast<double>(step));
  return p;
}

Matrix drtp_identity_deviation(const Matrix& t_map, const Matrix& sigma_x,
                               std::size_t l) {
  detail::require(l >= 1, "drtp_identity_deviation: layers are 1-based");
  const std::size_t c = t_map.rows;
  Matrix dev = matmul_nt(t_map, t_map);  // T T^tr
  for (std::size_t i = 0; i < c; ++i) dev(i, i) -= 1.0;
  Matrix dx = sigma_x;
  for (std::size_t i = 0; i < dx.rows; ++i) dx(i, i) -= 1.0;
  Matrix tdx = matmul(t_map, dx);
  Matrix tdxt = matmul_nt(tdx, t_map);
  add_scaled(dev, tdxt, 2.0);
  scale(dev, static_cast<double>(l) - 1.0);
  return dev;
}

}  // namespace falab
