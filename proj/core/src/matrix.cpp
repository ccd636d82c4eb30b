#include "falab/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace falab {

namespace detail {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace detail

using detail::require;

Matrix matrix_from(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  require(values.size() == rows * cols, "matrix_from: value count does not match shape");
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (double v : values) m.data[i++] = v;
  return m;
}

// Row-accumulation kernel: c[i,:] += a[i,p] * b[p,:]. Keeps the inner loop
// contiguous in both b and c so the compiler can vectorize it without
// reassociating any sums.
static void gemm_rowmajor(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.row(i);
    const double* arow = a.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  gemm_rowmajor(a, b, c);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows, "matmul_tn: inner dimensions differ");
  // c[i,:] += a[p,i] * b[p,:]
  Matrix c(a.cols, b.cols);
  for (std::size_t p = 0; p < a.rows; ++p) {
    const double* arow = a.row(p);
    const double* brow = b.row(p);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double av = arow[i];
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

void add_scaled(Matrix& dst, const Matrix& src, double s) {
  require(dst.same_shape(src), "add_scaled: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += s * src.data[i];
}

void scale(Matrix& m, double s) {
  for (double& v : m.data) v *= s;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  require(a.cols == x.size(), "matvec: dimension mismatch");
  std::vector<double> y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double dot(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return std::sqrt(acc);
}

double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

std::optional<double> cosine(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "cosine: shape mismatch");
  const double na = frobenius_norm(a), nb = frobenius_norm(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot(a, b) / (na * nb);
}

std::optional<double> cosine(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "cosine: length mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot(a, b) / (na * nb);
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix, in place.
// Returns eigenvalues. Adequate for the small Gram matrices we feed it.
static std::vector<double> jacobi_eigenvalues(Matrix s) {
  const std::size_t n = s.rows;
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) off += s(i, j) * s(i, j);
  double scale_ref = frobenius_norm(s);
  if (scale_ref == 0.0) return std::vector<double>(n, 0.0);
  for (int sweep = 0; sweep < 100 && off > 1e-30 * scale_ref * scale_ref; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = s(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double sip = s(i, p), siq = s(i, q);
          s(i, p) = c * sip - sn * siq;
          s(i, q) = sn * sip + c * siq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double spi = s(p, i), sqi = s(q, i);
          s(p, i) = c * spi - sn * sqi;
          s(q, i) = sn * spi + c * sqi;
        }
      }
    }
    off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += s(i, j) * s(i, j);
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = s(i, i);
  return ev;
}

std::vector<double> singular_values(const Matrix& a) {
  require(a.rows > 0 && a.cols > 0, "singular_values: empty matrix");
  const Matrix gram = (a.rows >= a.cols) ? matmul_tn(a, a) : matmul_nt(a, a);
  std::vector<double> ev = jacobi_eigenvalues(gram);
  for (double& v : ev) v = std::sqrt(v < 0.0 ? 0.0 : v);
  std::sort(ev.begin(), ev.end(), [](double x, double y) { return x > y; });
  return ev;
}

bool all_finite(const Matrix& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace falab
