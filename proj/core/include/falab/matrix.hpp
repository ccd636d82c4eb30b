#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <vector>

namespace falab {

/// Dense row-major matrix of doubles. The only storage type used by the
/// library; vectors are 1-column (or 1-row) matrices or std::vector<double>
/// depending on context.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matrix_from(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

/// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// c = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// c = a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// dst += s * src (shapes must match)
void add_scaled(Matrix& dst, const Matrix& src, double s);
void scale(Matrix& m, double s);

/// y = a * x for a vector x (x.size() == a.cols)
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

double dot(const std::vector<double>& a, const std::vector<double>& b);
/// Vec(a) . Vec(b), i.e. entrywise sum of products (shapes must match)
double dot(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double norm(const std::vector<double>& v);

/// Cosine of the angle between the flattened matrices. A zero-norm operand
/// has no direction: the result is empty, never silently 0.
std::optional<double> cosine(const Matrix& a, const Matrix& b);
std::optional<double> cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Singular values in descending order, via cyclic Jacobi on the Gram matrix
/// of the smaller side. Intended for small matrices (alignment matrices,
/// conditioning reports), not for bulk numerics.
std::vector<double> singular_values(const Matrix& a);

bool all_finite(const Matrix& a);

namespace detail {
void require(bool cond, const char* what);
}

}  // namespace falab
