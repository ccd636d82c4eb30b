#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "falab/matrix.hpp"
#include "falab/rng.hpp"

namespace falab {

struct DatasetMeta {
  std::string name;
  double corruption = 0.0;
  std::uint64_t corruption_seed = 0;
  /// Image layout of each sample when the features came from images
  /// (planar channels, row-major within a channel); zero otherwise.
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
  std::size_t channels = 0;
};

/// Inputs one sample per row, targets one row per sample (one-hot rows for
/// categorical data, where `labels` carries the class ids).
struct Dataset {
  Matrix x;
  Matrix y;
  std::vector<std::uint8_t> labels;
  DatasetMeta meta;

  std::size_t size() const { return x.rows; }
};

Matrix one_hot(const std::vector<std::uint8_t>& labels, std::size_t num_classes);

/// IDX-format readers/writers (big-endian magic + dims, then raw bytes).
/// Pixels load scaled to [0, 1].
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         const std::string& name);
void write_idx_images(const std::string& path, std::size_t n, std::size_t rows,
                      std::size_t cols, const std::vector<std::uint8_t>& pixels);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

/// CIFAR-10 binary batches: per record one label byte then 3072 pixel bytes
/// (three 32x32 planes). Pixels load scaled to [0, 1].
Dataset load_cifar10(const std::vector<std::string>& batch_paths);
void write_cifar10_batch(const std::string& path, const std::vector<std::uint8_t>& labels,
                         const std::vector<std::uint8_t>& pixels);

/// Resample every image to target x target per channel. Side lengths that
/// are an exact multiple of the target are mean-pooled (exact block means);
/// anything else is resampled bilinearly. Requires square images.
Dataset downscale(const Dataset& ds, std::size_t target);

/// Redraw the labels of a uniformly chosen fraction p of the samples from
/// the uniform distribution over the classes (a redraw may repeat the old
/// label). Deterministic in (p, rng stream).
Dataset corrupt_labels(const Dataset& ds, double p, std::size_t num_classes, Rng& rng);

/// First n samples.
Dataset head(const Dataset& ds, std::size_t n);

/// Pure memorisation task: inputs i.i.d. standard normal, targets drawn
/// from N(0, cov) independently of the inputs.
struct CovarianceSpec {
  double alpha = 1.0;
  double beta = 1.0;

  /// [[1, alpha (1 - beta)], [alpha (1 - beta), alpha^2]]: alpha scales the
  /// second target's spread, beta decorrelates the pair.
  Matrix covariance() const;
};

Dataset synthetic_targets(const CovarianceSpec& spec, std::size_t n_samples,
                          std::size_t input_dim, Rng& rng);

/// x ~ N(0, sigma_x), y = t_map x exactly.
Dataset linear_teacher_dataset(const Matrix& t_map, const Matrix& sigma_x,
                               std::size_t n_samples, Rng& rng);

/// Deterministic synthetic image classes for format-exact fixture files:
/// one smooth sinusoidal prototype per class and per channel, plus pixel
/// noise and a per-sample intensity jitter. Pixels are bytes.
struct SyntheticImages {
  std::size_t rows = 0, cols = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // n * channels * rows * cols, planar
  std::vector<std::uint8_t> labels;  // n
};

SyntheticImages synthetic_image_classes(std::size_t n, std::size_t rows, std::size_t cols,
                                        std::size_t channels, std::size_t num_classes,
                                        double noise_std, Rng& rng);

}  // namespace falab
