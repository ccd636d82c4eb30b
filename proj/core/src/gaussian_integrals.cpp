#include "falab/gaussian_integrals.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace falab {

using detail::require;

namespace {

constexpr double kPi = std::numbers::pi;

void check_cov(const Matrix& cov, std::size_t n, const char* what) {
  require(cov.rows == n && cov.cols == n, what);
}

[[noreturn]] void unsupported(const char* what) {
  throw std::invalid_argument(std::string(what) +
                              ": closed forms exist for ScaledErf and Linear only");
}

}  // namespace

double i2(ActivationKind g, double c11, double c12, double c22) {
  switch (g) {
    case ActivationKind::Linear:
      return c12;
    case ActivationKind::ScaledErf:
      return (2.0 / kPi) * std::asin(c12 / std::sqrt((1.0 + c11) * (1.0 + c22)));
    default:
      unsupported("i2");
  }
}

double i3(ActivationKind g, const Matrix& cov) {
  check_cov(cov, 3, "i3: covariance must be 3x3");
  const double c11 = cov(0, 0), c12 = cov(0, 1), c13 = cov(0, 2);
  const double c23 = cov(1, 2), c33 = cov(2, 2);
  switch (g) {
    case ActivationKind::Linear:
      return c23;
    case ActivationKind::ScaledErf: {
      const double lambda = (1.0 + c11) * (1.0 + c33) - c13 * c13;
      return (2.0 / kPi) * (c23 * (1.0 + c11) - c12 * c13) /
             ((1.0 + c11) * std::sqrt(lambda));
    }
    default:
      unsupported("i3");
  }
}

double i4(ActivationKind g, const Matrix& cov) {
  check_cov(cov, 4, "i4: covariance must be 4x4");
  const double c11 = cov(0, 0), c12 = cov(0, 1), c13 = cov(0, 2), c14 = cov(0, 3);
  const double c22 = cov(1, 1), c23 = cov(1, 2), c24 = cov(1, 3);
  const double c33 = cov(2, 2), c34 = cov(2, 3), c44 = cov(3, 3);
  switch (g) {
    case ActivationKind::Linear:
      return c34;
    case ActivationKind::ScaledErf: {
      const double l4 = (1.0 + c11) * (1.0 + c22) - c12 * c12;
      const double l0 = l4 * c34 - c23 * c24 * (1.0 + c11) - c13 * c14 * (1.0 + c22) +
                        c12 * c13 * c24 + c12 * c14 * c23;
      const double l1 = l4 * (1.0 + c33) - c23 * c23 * (1.0 + c11) - c13 * c13 * (1.0 + c22) +
                        2.0 * c12 * c13 * c23;
      const double l2 = l4 * (1.0 + c44) - c24 * c24 * (1.0 + c11) - c14 * c14 * (1.0 + c22) +
                        2.0 * c12 * c14 * c24;
      return (4.0 / (kPi * kPi)) * std::asin(l0 / std::sqrt(l1 * l2)) / std::sqrt(l4);
    }
    default:
      unsupported("i4");
  }
}

}  // namespace falab
