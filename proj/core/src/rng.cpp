#include "falab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace falab {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), stream_(0xcbf29ce484222325ULL) { init_state(); }

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) { init_state(); }

void Rng::init_state() {
  std::uint64_t sm = seed_ ^ rotl(stream_, 17);
  for (auto& w : s_) w = splitmix64(sm);
}

Rng Rng::substream(std::string_view label) const {
  std::uint64_t h = fnv1a(stream_, label.data(), label.size());
  return Rng(seed_, h);
}

Rng Rng::substream(std::string_view label, std::uint64_t index) const {
  std::uint64_t h = fnv1a(stream_, label.data(), label.size());
  h = fnv1a(h, &index, sizeof(index));
  return Rng(seed_, h);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
  if (has_cached_gauss_) {
    has_cached_gauss_ = false;
    return cached_gauss_;
  }
  // u1 in (0,1] so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cached_gauss_ = r * std::sin(a);
  has_cached_gauss_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

void Rng::shuffle(std::vector<std::size_t>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  if (stddev == 0.0) return m;
  for (double& v : m.data) v = stddev * rng.gaussian();
  return m;
}

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  if (scale == 0.0) return m;
  for (double& v : m.data) v = rng.uniform(-scale, scale);
  return m;
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> v(n, 0.0);
  if (stddev == 0.0) return v;
  for (double& x : v) x = stddev * rng.gaussian();
  return v;
}

}  // namespace falab
