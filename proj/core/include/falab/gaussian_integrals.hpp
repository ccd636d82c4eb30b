#pragma once

#include "falab/matrix.hpp"
#include "falab/network.hpp"

namespace falab {

/// Closed forms for Gaussian expectations of g and g' over jointly centered
/// Gaussian arguments, for the activations whose integrals are elementary:
/// ScaledErf (arcsine-law forms) and Linear. Covariance entries index the
/// arguments in the order written in each expectation.

/// E[g(u) g(v)], cov = [[c11, c12], [., c22]].
double i2(ActivationKind g, double c11, double c12, double c22);

/// E[g'(u) v g(w)], cov a symmetric 3x3 over (u, v, w).
double i3(ActivationKind g, const Matrix& cov);

/// E[g'(u) g'(v) g(w) g(z)], cov a symmetric 4x4 over (u, v, w, z).
double i4(ActivationKind g, const Matrix& cov);

}  // namespace falab
