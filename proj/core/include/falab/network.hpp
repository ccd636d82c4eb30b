#pragma once

#include <string>
#include <vector>

#include "falab/matrix.hpp"
#include "falab/rng.hpp"

namespace falab {

/// Hidden-layer nonlinearities. ScaledErf is g(x) = erf(x / sqrt(2)), the
/// sigmoid whose Gaussian moments have closed forms (see ode.hpp).
enum class ActivationKind { ScaledErf, ReLU, Tanh, Linear };

enum class OutputMap { Identity, Softmax };

double activation(ActivationKind g, double x);
/// g'(x). Conventions at non-smooth / special points: ReLU'(0) = 0;
/// ScaledErf'(0) = sqrt(2/pi).
double activation_derivative(ActivationKind g, double x);

struct InitSpec {
  enum class Kind { Zero, GaussianStd, FanInUniform };
  Kind kind = Kind::GaussianStd;
  /// Standard deviation for GaussianStd.
  double stddev = 1e-2;
};

/// Fully-connected feed-forward network. weights[l] maps layer l to layer
/// l+1 and has shape n_{l+1} x n_l (zero-based; the math convention W_l is
/// weights[l-1]). Biases are optional and off by default.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;  // empty when disabled
  ActivationKind activation = ActivationKind::Tanh;
  OutputMap output_map = OutputMap::Identity;

  std::size_t depth() const { return weights.size(); }
  bool has_biases() const { return !biases.empty(); }
  std::vector<std::size_t> widths() const;
};

MlpParams make_mlp(const std::vector<std::size_t>& widths, ActivationKind g,
                   OutputMap out, bool with_biases, const InitSpec& init, Rng& rng);

/// Everything the backward passes need from one forward pass over a batch.
/// Batches are stored one sample per row: x is B x n_0, pre[l-1] holds the
/// pre-activations a_l (B x n_l), post[l-1] the post-activations h_l for
/// hidden layers, and yhat the mapped output (B x n_L).
struct ForwardTrace {
  Matrix x;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  Matrix yhat;
};

ForwardTrace forward(const MlpParams& params, const Matrix& x_batch);
/// Single-sample convenience wrapper (batch of one row).
ForwardTrace forward(const MlpParams& params, const std::vector<double>& x);

Matrix softmax_rows(const Matrix& logits);

/// Flat binary checkpoint. Little-endian; layout documented in README.md
/// (magic, version, activation/output/bias flags, widths, then row-major
/// float64 weight blocks and optional bias blocks, bottom layer first).
void save_checkpoint(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint(const std::string& path);

}  // namespace falab
