#include "falab/network.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace falab {

using detail::require;

double activation(ActivationKind g, double x) {
  switch (g) {
    case ActivationKind::ScaledErf: return std::erf(x * std::numbers::sqrt2 / 2.0);
    case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::Tanh: return std::tanh(x);
    case ActivationKind::Linear: return x;
  }
  throw std::invalid_argument("activation: unknown kind");
}

double activation_derivative(ActivationKind g, double x) {
  switch (g) {
    case ActivationKind::ScaledErf:
      return std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * x * x);
    case ActivationKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::Linear: return 1.0;
  }
  throw std::invalid_argument("activation_derivative: unknown kind");
}

std::vector<std::size_t> MlpParams::widths() const {
  std::vector<std::size_t> w;
  if (weights.empty()) return w;
  w.push_back(weights.front().cols);
  for (const Matrix& m : weights) w.push_back(m.rows);
  return w;
}

MlpParams make_mlp(const std::vector<std::size_t>& widths, ActivationKind g,
                   OutputMap out, bool with_biases, const InitSpec& init, Rng& rng) {
  require(widths.size() >= 2, "make_mlp: need at least input and output widths");
  for (std::size_t w : widths) require(w > 0, "make_mlp: zero layer width");
  MlpParams p;
  p.activation = g;
  p.output_map = out;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    switch (init.kind) {
      case InitSpec::Kind::Zero:
        p.weights.push_back(Matrix(fan_out, fan_in));
        break;
      case InitSpec::Kind::GaussianStd:
        p.weights.push_back(gaussian_matrix(rng, fan_out, fan_in, init.stddev));
        break;
      case InitSpec::Kind::FanInUniform:
        p.weights.push_back(
            uniform_matrix(rng, fan_out, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
        break;
    }
    if (with_biases) p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const double* in = logits.row(i);
    double* o = out.row(i);
    double mx = in[0];
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < logits.cols; ++j) o[j] /= z;
  }
  return out;
}

ForwardTrace forward(const MlpParams& params, const Matrix& x_batch) {
  require(params.depth() >= 1, "forward: empty network");
  require(x_batch.cols == params.weights.front().cols, "forward: input width mismatch");
  ForwardTrace t;
  t.x = x_batch;
  const std::size_t depth = params.depth();
  const Matrix* h = &t.x;
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix a = matmul_nt(*h, params.weights[l]);
    if (params.has_biases()) {
      const std::vector<double>& b = params.biases[l];
      for (std::size_t i = 0; i < a.rows; ++i) {
        double* row = a.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) row[j] += b[j];
      }
    }
    t.pre.push_back(std::move(a));
    if (l + 1 < depth) {
      const Matrix& pre = t.pre.back();
      Matrix post(pre.rows, pre.cols);
      for (std::size_t i = 0; i < pre.size(); ++i)
        post.data[i] = activation(params.activation, pre.data[i]);
      t.post.push_back(std::move(post));
      h = &t.post.back();
    }
  }
  t.yhat = (params.output_map == OutputMap::Softmax) ? softmax_rows(t.pre.back()) : t.pre.back();
  return t;
}

ForwardTrace forward(const MlpParams& params, const std::vector<double>& x) {
  Matrix xb(1, x.size());
  xb.data = x;
  return forward(params, xb);
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x42414c46;  // "FLAB"
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const MlpParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  write_pod(os, kCheckpointMagic);
  write_pod(os, kCheckpointVersion);
  write_pod(os, static_cast<std::uint32_t>(params.activation));
  write_pod(os, static_cast<std::uint32_t>(params.output_map));
  write_pod(os, static_cast<std::uint32_t>(params.has_biases() ? 1 : 0));
  const std::vector<std::size_t> widths = params.widths();
  write_pod(os, static_cast<std::uint32_t>(widths.size()));
  for (std::size_t w : widths) write_pod(os, static_cast<std::uint64_t>(w));
  for (const Matrix& w : params.weights)
    os.write(reinterpret_cast<const char*>(w.data.data()),
             static_cast<std::streamsize>(w.size() * sizeof(double)));
  for (const std::vector<double>& b : params.biases)
    os.write(reinterpret_cast<const char*>(b.data()),
             static_cast<std::streamsize>(b.size() * sizeof(double)));
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  if (read_pod<std::uint32_t>(is, "magic") != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic at offset 0: " + path);
  if (read_pod<std::uint32_t>(is, "version") != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version at offset 4: " + path);
  MlpParams p;
  p.activation = static_cast<ActivationKind>(read_pod<std::uint32_t>(is, "activation"));
  p.output_map = static_cast<OutputMap>(read_pod<std::uint32_t>(is, "output map"));
  const bool with_biases = read_pod<std::uint32_t>(is, "bias flag") != 0;
  const auto n_widths = read_pod<std::uint32_t>(is, "width count");
  if (n_widths < 2) throw std::runtime_error("checkpoint: fewer than two layer widths: " + path);
  std::vector<std::size_t> widths(n_widths);
  for (auto& w : widths) {
    w = static_cast<std::size_t>(read_pod<std::uint64_t>(is, "width"));
    if (w == 0) throw std::runtime_error("checkpoint: zero layer width: " + path);
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Matrix m(widths[l + 1], widths[l]);
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated weight block: " + path);
    p.weights.push_back(std::move(m));
  }
  if (with_biases) {
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      std::vector<double> b(widths[l + 1]);
      is.read(reinterpret_cast<char*>(b.data()),
              static_cast<std::streamsize>(b.size() * sizeof(double)));
      if (!is) throw std::runtime_error("checkpoint: truncated bias block: " + path);
      p.biases.push_back(std::move(b));
    }
  }
  return p;
}

}  // namespace falab
