#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "falab/matrix.hpp"

namespace falab {

/// Deterministic random stream: xoshiro256++ state derived from a 64-bit
/// seed plus a stream id. Substreams are derived by hashing a label (and an
/// optional index) into the stream id, so independent parts of an experiment
/// can draw from named streams whose output never depends on the order in
/// which other streams are consumed. Output is bit-reproducible: all
/// distributions are implemented here rather than delegated to <random>,
/// whose real-valued distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Child stream fully determined by (this stream's identity, label).
  Rng substream(std::string_view label) const;
  Rng substream(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1), 53-bit resolution.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (pairs cached).
  double gaussian();
  /// Uniform integer on [0, n), rejection-free of modulo bias. n > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& v);

  std::uint64_t seed_value() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  Rng(std::uint64_t seed, std::uint64_t stream);
  void init_state();

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::array<std::uint64_t, 4> s_{};
  double cached_gauss_ = 0.0;
  bool has_cached_gauss_ = false;
};

/// Entries i.i.d. normal with mean 0 and the given standard deviation.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

/// Entries i.i.d. uniform on [-scale, +scale].
Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale);

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double stddev);

}  // namespace falab
