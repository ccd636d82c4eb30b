#include "falab/teacher_student.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "falab/gaussian_integrals.hpp"

namespace falab {

namespace {

void orthonormalize_rows(Matrix& w) {
  detail::require(w.rows <= w.cols, "orthonormalize_rows: more rows than columns");
  for (std::size_t i = 0; i < w.rows; ++i) {
    double* ri = w.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const double* rj = w.row(j);
      double proj = 0.0;
      for (std::size_t c = 0; c < w.cols; ++c) proj += ri[c] * rj[c];
      for (std::size_t c = 0; c < w.cols; ++c) ri[c] -= proj * rj[c];
    }
    double nrm = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) nrm += ri[c] * ri[c];
    nrm = std::sqrt(nrm);
    detail::require(nrm > 1e-12, "orthonormalize_rows: degenerate row");
    for (std::size_t c = 0; c < w.cols; ++c) ri[c] /= nrm;
  }
}

double quadratic_error(const Matrix& q, const Matrix& r, const Matrix& t,
                       const std::vector<double>& w2, const std::vector<double>& tw2,
                       ActivationKind g) {
  const std::size_t k = q.rows;
  const std::size_t m = t.rows;
  double e = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      e += w2[i] * w2[j] * i2(g, q(i, i), q(i, j), q(j, j));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t n = 0; n < m; ++n)
      e -= 2.0 * w2[i] * tw2[n] * i2(g, q(i, i), r(i, n), t(n, n));
  for (std::size_t n = 0; n < m; ++n)
    for (std::size_t p = 0; p < m; ++p)
      e += tw2[n] * tw2[p] * i2(g, t(n, n), t(n, p), t(p, p));
  return 0.5 * e;
}

}  // namespace

Teacher make_teacher(std::size_t m, std::size_t n, ActivationKind g, const TeacherSpec& spec,
                     Rng& rng) {
  detail::require(m > 0 && n > 0, "make_teacher: empty teacher");
  Teacher t;
  t.activation = g;
  t.w1 = gaussian_matrix(rng, m, n, 1.0);
  if (spec.orthogonal_rows) {
    orthonormalize_rows(t.w1);
    scale(t.w1, std::sqrt(static_cast<double>(n)));
  }
  t.w2.assign(m, 1.0);
  if (spec.second_layer == TeacherSpec::SecondLayer::Gaussian)
    for (auto& v : t.w2) v = rng.gaussian();
  return t;
}

OrderParams order_params_from_weights(const Matrix& student_w1,
                                      const std::vector<double>& student_w2,
                                      const Teacher& teacher) {
  detail::require(student_w1.cols == teacher.w1.cols,
                  "order_params_from_weights: input dims differ");
  detail::require(student_w1.rows == student_w2.size(),
                  "order_params_from_weights: second layer size mismatch");
  const double inv_n = 1.0 / static_cast<double>(student_w1.cols);
  OrderParams op;
  op.q = matmul_nt(student_w1, student_w1);
  scale(op.q, inv_n);
  op.r = matmul_nt(student_w1, teacher.w1);
  scale(op.r, inv_n);
  op.t = matmul_nt(teacher.w1, teacher.w1);
  scale(op.t, inv_n);
  op.w2 = student_w2;
  op.teacher_w2 = teacher.w2;
  return op;
}

double eg_from_order_params(const OrderParams& op, ActivationKind g) {
  detail::require(op.q.rows == op.w2.size() && op.t.rows == op.teacher_w2.size() &&
                      op.r.rows == op.q.rows && op.r.cols == op.t.rows,
                  "eg_from_order_params: inconsistent overlap shapes");
  return quadratic_error(op.q, op.r, op.t, op.w2, op.teacher_w2, g);
}

McEstimate eg_monte_carlo(const Matrix& student_w1, const std::vector<double>& student_w2,
                          ActivationKind g, const Teacher& teacher, std::size_t samples,
                          Rng& rng) {
  detail::require(samples > 0, "eg_monte_carlo: need at least one sample");
  detail::require(student_w1.cols == teacher.w1.cols, "eg_monte_carlo: input dims differ");
  const std::size_t n = student_w1.cols;
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  const std::size_t batch = 256;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t done = 0;
  while (done < samples) {
    const std::size_t b = std::min(batch, samples - done);
    Matrix x = gaussian_matrix(rng, b, n, 1.0);
    Matrix lam = matmul_nt(x, student_w1);
    Matrix nu = matmul_nt(x, teacher.w1);
    for (std::size_t s = 0; s < b; ++s) {
      double yhat = 0.0, y = 0.0;
      for (std::size_t kk = 0; kk < student_w1.rows; ++kk)
        yhat += student_w2[kk] * activation(g, lam(s, kk) * inv_sqrt_n);
      for (std::size_t mm = 0; mm < teacher.w1.rows; ++mm)
        y += teacher.w2[mm] * activation(teacher.activation, nu(s, mm) * inv_sqrt_n);
      const double half_sq = 0.5 * (yhat - y) * (yhat - y);
      sum += half_sq;
      sum_sq += half_sq * half_sq;
    }
    done += b;
  }
  McEstimate est;
  const double nn = static_cast<double>(samples);
  est.value = sum / nn;
  const double var = std::max(0.0, sum_sq / nn - est.value * est.value);
  est.std_error = std::sqrt(var / nn);
  return est;
}

std::vector<ShallowLogRow> online_train(Matrix& student_w1, std::vector<double>& student_w2,
                                        const Teacher& teacher, ShallowRule rule,
                                        const std::vector<double>& f1,
                                        const ShallowRunOptions& opt, Rng& rng) {
  const std::size_t k = student_w1.rows;
  const std::size_t n = student_w1.cols;
  const std::size_t m = teacher.hidden();
  detail::require(student_w2.size() == k, "online_train: second layer size mismatch");
  detail::require(teacher.w1.cols == n, "online_train: input dims differ");
  detail::require(rule == ShallowRule::Bp || f1.size() == k,
                  "online_train: feedback vector must have one entry per hidden node");
  const ActivationKind g = teacher.activation;
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  const double lr_w2 = opt.lr / static_cast<double>(n);

  std::vector<ShallowLogRow> rows;
  auto log_state = [&](std::size_t step) {
    ShallowLogRow row;
    row.alpha = static_cast<double>(step) / static_cast<double>(n);
    row.op = order_params_from_weights(student_w1, student_w2, teacher);
    if (g == ActivationKind::ScaledErf || g == ActivationKind::Linear) {
      row.eg = eg_from_order_params(row.op, g);
    } else if (opt.mc_eg_samples > 0) {
      Rng mc = rng.substream("eg-log", static_cast<std::uint64_t>(step));
      row.eg = eg_monte_carlo(student_w1, student_w2, g, teacher, opt.mc_eg_samples, mc).value;
    } else {
      row.eg = std::numeric_limits<double>::quiet_NaN();
    }
    if (!f1.empty()) row.cos_w2_f1 = cosine(student_w2, f1);
    rows.push_back(std::move(row));
  };

  std::vector<double> x(n), lam(k), nu(m), glam(k);
  for (std::size_t step = 0; step < opt.steps; ++step) {
    if (step == 0 || (opt.cadence > 0 && step % opt.cadence == 0)) log_state(step);
    for (auto& v : x) v = rng.gaussian();
    for (std::size_t i = 0; i < k; ++i) {
      const double* wr = student_w1.row(i);
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += wr[c] * x[c];
      lam[i] = acc * inv_sqrt_n;
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double* tr = teacher.w1.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += tr[c] * x[c];
      nu[j] = acc * inv_sqrt_n;
    }
    double yhat = 0.0, y = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      glam[i] = activation(g, lam[i]);
      yhat += student_w2[i] * glam[i];
    }
    for (std::size_t j = 0; j < m; ++j) y += teacher.w2[j] * activation(g, nu[j]);
    const double err = yhat - y;
    for (std::size_t i = 0; i < k; ++i) {
      const double gate = (rule == ShallowRule::Bp) ? student_w2[i] : f1[i];
      const double coef =
          opt.lr * err * gate * activation_derivative(g, lam[i]) * inv_sqrt_n;
      if (coef != 0.0) {
        double* wr = student_w1.row(i);
        for (std::size_t c = 0; c < n; ++c) wr[c] -= coef * x[c];
      }
      student_w2[i] -= lr_w2 * err * glam[i];
    }
  }
  log_state(opt.steps);
  return rows;
}

double p_learn_formula(std::size_t k, std::size_t m) {
  detail::require(k >= 1, "p_learn_formula: need at least one student node");
  detail::require(m <= k, "p_learn_formula: defined for teachers no wider than the student");
  long double sum = 0.0L;
  long double binom = 1.0L;  // C(k, 0)
  for (std::size_t j = 0; j <= m; ++j) {
    sum += binom;
    binom = binom * static_cast<long double>(k - j) / static_cast<long double>(j + 1);
  }
  return static_cast<double>(std::ldexp(sum, -static_cast<int>(k)));
}

PLearnEstimate p_learn_empirical(std::size_t k, std::size_t m, const PLearnOptions& opt,
                                 Rng& rng) {
  detail::require(m <= k, "p_learn_empirical: defined for teachers no wider than the student");
  detail::require(opt.forced_positive <= static_cast<int>(k),
                  "p_learn_empirical: more forced positive signs than feedback entries");
  PLearnEstimate est;
  est.trials = opt.trials;
  const std::size_t n = opt.input_dim;
  const std::size_t steps = static_cast<std::size_t>(opt.alpha_max * static_cast<double>(n));
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng tr = rng.substream("trial", trial);
    Rng teacher_rng = tr.substream("teacher");
    Rng student_rng = tr.substream("student");
    Rng feedback_rng = tr.substream("feedback");
    Rng data_rng = tr.substream("data");
    Teacher teacher = make_teacher(m, n, ActivationKind::ReLU, TeacherSpec{}, teacher_rng);
    Matrix w1 = gaussian_matrix(student_rng, k, n, opt.init_std);
    std::vector<double> w2 = gaussian_vector(student_rng, k, opt.init_std);
    std::vector<double> f1(k);
    for (auto& v : f1) v = feedback_rng.gaussian();
    if (opt.forced_positive >= 0) {
      std::vector<std::size_t> idx(k);
      for (std::size_t i = 0; i < k; ++i) idx[i] = i;
      feedback_rng.shuffle(idx);
      for (std::size_t i = 0; i < k; ++i) {
        const double mag = std::fabs(f1[idx[i]]);
        f1[idx[i]] = (i < static_cast<std::size_t>(opt.forced_positive)) ? mag : -mag;
      }
    }
    ShallowRunOptions run;
    run.lr = opt.lr;
    run.steps = steps;
    run.cadence = 0;
    run.mc_eg_samples = 0;
    online_train(w1, w2, teacher, ShallowRule::Dfa, f1, run, data_rng);
    Rng eg_rng = tr.substream("eg");
    const double eg =
        eg_monte_carlo(w1, w2, ActivationKind::ReLU, teacher, opt.eg_samples, eg_rng).value;
    est.final_eg.push_back(eg);
    if (eg < opt.threshold) ++est.successes;
  }
  est.fraction = static_cast<double>(est.successes) / static_cast<double>(opt.trials);
  return est;
}

}  // namespace falab
