#include "falab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace falab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(path + ": truncated at offset " + std::to_string(offset));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<std::uint8_t> read_bytes(std::istream& in, std::size_t n, const std::string& path,
                                     const std::string& what) {
  std::vector<std::uint8_t> buf(n);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
    fail(path + ": truncated " + what);
  return buf;
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

Matrix pixels_to_rows(const std::vector<std::uint8_t>& pixels, std::size_t n,
                      std::size_t per_sample) {
  Matrix x(n, per_sample);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    x.data[i] = static_cast<double>(pixels[i]) / 255.0;
  return x;
}

double bilinear_sample(const double* plane, std::size_t side, double r, double c) {
  const auto clamp = [&](double v) {
    return std::min(std::max(v, 0.0), static_cast<double>(side - 1));
  };
  r = clamp(r);
  c = clamp(c);
  const std::size_t r0 = static_cast<std::size_t>(r);
  const std::size_t c0 = static_cast<std::size_t>(c);
  const std::size_t r1 = std::min(r0 + 1, side - 1);
  const std::size_t c1 = std::min(c0 + 1, side - 1);
  const double fr = r - static_cast<double>(r0);
  const double fc = c - static_cast<double>(c0);
  const double top = plane[r0 * side + c0] * (1.0 - fc) + plane[r0 * side + c1] * fc;
  const double bot = plane[r1 * side + c0] * (1.0 - fc) + plane[r1 * side + c1] * fc;
  return top * (1.0 - fr) + bot * fr;
}

}  // namespace

Matrix one_hot(const std::vector<std::uint8_t>& labels, std::size_t num_classes) {
  Matrix y(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require(labels[i] < num_classes, "one_hot: label out of range");
    y(i, labels[i]) = 1.0;
  }
  return y;
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         const std::string& name) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) fail(images_path + ": cannot open");
  const std::uint32_t magic = read_be32(img, images_path, 0);
  if (magic != kIdxImagesMagic)
    fail(images_path + ": bad magic at offset 0 (got 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + ", want 0x00000803)");
  const std::uint32_t n = read_be32(img, images_path, 4);
  const std::uint32_t rows = read_be32(img, images_path, 8);
  const std::uint32_t cols = read_be32(img, images_path, 12);
  const std::size_t per_sample = static_cast<std::size_t>(rows) * cols;
  const auto pixels = read_bytes(img, static_cast<std::size_t>(n) * per_sample, images_path,
                                 "pixel data");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) fail(labels_path + ": cannot open");
  const std::uint32_t lmagic = read_be32(lab, labels_path, 0);
  if (lmagic != kIdxLabelsMagic) fail(labels_path + ": bad magic at offset 0");
  const std::uint32_t ln = read_be32(lab, labels_path, 4);
  if (ln != n) fail(labels_path + ": label count does not match image count");
  auto labels = read_bytes(lab, ln, labels_path, "label data");

  Dataset ds;
  ds.x = pixels_to_rows(pixels, n, per_sample);
  ds.labels = std::move(labels);
  ds.y = one_hot(ds.labels, 10);
  ds.meta.name = name;
  ds.meta.image_rows = rows;
  ds.meta.image_cols = cols;
  ds.meta.channels = 1;
  return ds;
}

void write_idx_images(const std::string& path, std::size_t n, std::size_t rows,
                      std::size_t cols, const std::vector<std::uint8_t>& pixels) {
  detail::require(pixels.size() == n * rows * cols, "write_idx_images: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path + ": cannot open for writing");
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(n));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) fail(path + ": write failed");
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path + ": cannot open for writing");
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) fail(path + ": write failed");
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  detail::require(!batch_paths.empty(), "load_cifar10: no batch files given");
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;
  for (const auto& path : batch_paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path + ": cannot open");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (bytes == 0 || bytes % kCifarRecord != 0)
      fail(path + ": size " + std::to_string(bytes) + " is not a whole number of " +
           std::to_string(kCifarRecord) + "-byte records");
    const std::size_t n = bytes / kCifarRecord;
    for (std::size_t i = 0; i < n; ++i) {
      const auto rec = read_bytes(in, kCifarRecord, path, "record");
      if (rec[0] > 9)
        fail(path + ": label " + std::to_string(rec[0]) + " out of range in record " +
             std::to_string(i));
      labels.push_back(rec[0]);
      pixels.insert(pixels.end(), rec.begin() + 1, rec.end());
    }
  }
  Dataset ds;
  ds.x = pixels_to_rows(pixels, labels.size(), kCifarRecord - 1);
  ds.labels = std::move(labels);
  ds.y = one_hot(ds.labels, 10);
  ds.meta.name = "cifar10";
  ds.meta.image_rows = kCifarSide;
  ds.meta.image_cols = kCifarSide;
  ds.meta.channels = 3;
  return ds;
}

void write_cifar10_batch(const std::string& path, const std::vector<std::uint8_t>& labels,
                         const std::vector<std::uint8_t>& pixels) {
  detail::require(pixels.size() == labels.size() * (kCifarRecord - 1),
                  "write_cifar10_batch: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path + ": cannot open for writing");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.put(static_cast<char>(labels[i]));
    out.write(reinterpret_cast<const char*>(pixels.data() + i * (kCifarRecord - 1)),
              kCifarRecord - 1);
  }
  if (!out) fail(path + ": write failed");
}

Dataset downscale(const Dataset& ds, std::size_t target) {
  const std::size_t side = ds.meta.image_rows;
  const std::size_t ch = ds.meta.channels;
  detail::require(side > 0 && side == ds.meta.image_cols,
                  "downscale: samples must be square images");
  detail::require(target > 0 && target <= side, "downscale: target exceeds image side");
  const std::size_t in_plane = side * side;
  const std::size_t out_plane = target * target;
  const bool pool = side % target == 0;
  const std::size_t factor = pool ? side / target : 0;

  Dataset out;
  out.x = Matrix(ds.size(), ch * out_plane);
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const double* in_row = ds.x.row(s);
    double* out_row = out.x.row(s);
    for (std::size_t c = 0; c < ch; ++c) {
      const double* plane = in_row + c * in_plane;
      double* dst = out_row + c * out_plane;
      if (pool) {
        const double inv = 1.0 / static_cast<double>(factor * factor);
        for (std::size_t r = 0; r < target; ++r)
          for (std::size_t q = 0; q < target; ++q) {
            double acc = 0.0;
            for (std::size_t dr = 0; dr < factor; ++dr)
              for (std::size_t dq = 0; dq < factor; ++dq)
                acc += plane[(r * factor + dr) * side + (q * factor + dq)];
            dst[r * target + q] = acc * inv;
          }
      } else {
        const double ratio = static_cast<double>(side) / static_cast<double>(target);
        for (std::size_t r = 0; r < target; ++r)
          for (std::size_t q = 0; q < target; ++q) {
            const double sr = (static_cast<double>(r) + 0.5) * ratio - 0.5;
            const double sc = (static_cast<double>(q) + 0.5) * ratio - 0.5;
            dst[r * target + q] = bilinear_sample(plane, side, sr, sc);
          }
      }
    }
  }
  out.y = ds.y;
  out.labels = ds.labels;
  out.meta = ds.meta;
  out.meta.image_rows = target;
  out.meta.image_cols = target;
  return out;
}

Dataset corrupt_labels(const Dataset& ds, double p, std::size_t num_classes, Rng& rng) {
  detail::require(p >= 0.0 && p <= 1.0, "corrupt_labels: fraction must be in [0, 1]");
  detail::require(!ds.labels.empty(), "corrupt_labels: dataset has no categorical labels");
  Dataset out = ds;
  const std::size_t n = ds.size();
  const std::size_t count =
      std::min(n, static_cast<std::size_t>(std::llround(p * static_cast<double>(n))));
  if (count > 0) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    for (std::size_t i = 0; i < count; ++i)
      out.labels[idx[i]] = static_cast<std::uint8_t>(rng.uniform_int(num_classes));
    out.y = one_hot(out.labels, num_classes);
  }
  out.meta.corruption = p;
  out.meta.corruption_seed = rng.seed_value();
  return out;
}

Dataset head(const Dataset& ds, std::size_t n) {
  detail::require(n <= ds.size(), "head: not enough samples");
  Dataset out;
  out.x = Matrix(n, ds.x.cols);
  std::copy_n(ds.x.data.begin(), n * ds.x.cols, out.x.data.begin());
  out.y = Matrix(n, ds.y.cols);
  std::copy_n(ds.y.data.begin(), n * ds.y.cols, out.y.data.begin());
  if (!ds.labels.empty()) out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
  out.meta = ds.meta;
  return out;
}

Matrix CovarianceSpec::covariance() const {
  const double off = alpha * (1.0 - beta);
  return matrix_from(2, 2, {1.0, off, off, alpha * alpha});
}

namespace {

/// Lower Cholesky factor; rejects non-PSD input.
Matrix cholesky(const Matrix& a) {
  detail::require(a.rows == a.cols, "cholesky: matrix must be square");
  const std::size_t n = a.rows;
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      if (i == j) {
        if (acc < -1e-12) fail("cholesky: covariance is not positive semi-definite");
        l(i, i) = std::sqrt(std::max(acc, 0.0));
      } else {
        l(i, j) = l(j, j) > 0.0 ? acc / l(j, j) : 0.0;
      }
    }
  }
  return l;
}

}  // namespace

Dataset synthetic_targets(const CovarianceSpec& spec, std::size_t n_samples,
                          std::size_t input_dim, Rng& rng) {
  detail::require(spec.alpha > 0.0 && spec.alpha <= 1.0 && spec.beta > 0.0 && spec.beta <= 1.0,
                  "synthetic_targets: alpha and beta must lie in (0, 1]");
  const Matrix l = cholesky(spec.covariance());
  Dataset ds;
  ds.x = gaussian_matrix(rng, n_samples, input_dim, 1.0);
  Matrix z = gaussian_matrix(rng, n_samples, 2, 1.0);
  ds.y = matmul_nt(z, l);
  ds.meta.name = "synthetic-targets";
  return ds;
}

Dataset linear_teacher_dataset(const Matrix& t_map, const Matrix& sigma_x,
                               std::size_t n_samples, Rng& rng) {
  detail::require(t_map.cols == sigma_x.rows && sigma_x.rows == sigma_x.cols,
                  "linear_teacher_dataset: shapes disagree");
  const Matrix l = cholesky(sigma_x);
  Matrix z = gaussian_matrix(rng, n_samples, sigma_x.rows, 1.0);
  Dataset ds;
  ds.x = matmul_nt(z, l);
  ds.y = matmul_nt(ds.x, t_map);
  ds.meta.name = "linear-teacher";
  return ds;
}

SyntheticImages synthetic_image_classes(std::size_t n, std::size_t rows, std::size_t cols,
                                        std::size_t channels, std::size_t num_classes,
                                        double noise_std, Rng& rng) {
  detail::require(n > 0 && rows > 0 && cols > 0 && channels > 0 && num_classes > 0,
                  "synthetic_image_classes: empty request");
  const std::size_t plane = rows * cols;
  const double two_pi = 2.0 * 3.14159265358979323846;

  std::vector<double> protos(num_classes * channels * plane);
  Rng proto_rng = rng.substream("prototypes");
  for (std::size_t k = 0; k < num_classes * channels; ++k) {
    const double fr = 1.0 + static_cast<double>(proto_rng.uniform_int(3));
    const double fc = 1.0 + static_cast<double>(proto_rng.uniform_int(3));
    const double pr = proto_rng.uniform(0.0, 1.0);
    const double pc = proto_rng.uniform(0.0, 1.0);
    double* dst = protos.data() + k * plane;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        dst[r * cols + c] =
            0.5 + 0.35 * std::sin(two_pi * (fr * static_cast<double>(r) /
                                                static_cast<double>(rows) +
                                            pr)) *
                      std::sin(two_pi * (fc * static_cast<double>(c) /
                                             static_cast<double>(cols) +
                                         pc));
  }

  SyntheticImages out;
  out.rows = rows;
  out.cols = cols;
  out.channels = channels;
  out.labels.resize(n);
  out.pixels.resize(n * channels * plane);
  Rng sample_rng = rng.substream("samples");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = sample_rng.uniform_int(num_classes);
    out.labels[i] = static_cast<std::uint8_t>(label);
    const double jitter = sample_rng.uniform(-0.08, 0.08);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* proto = protos.data() + (label * channels + c) * plane;
      std::uint8_t* dst = out.pixels.data() + (i * channels + c) * plane;
      for (std::size_t px = 0; px < plane; ++px) {
        const double v = proto[px] + jitter + noise_std * sample_rng.gaussian();
        const double clamped = std::min(1.0, std::max(0.0, v));
        dst[px] = static_cast<std::uint8_t>(std::lround(clamped * 255.0));
      }
    }
  }
  return out;
}

}  // namespace falab
