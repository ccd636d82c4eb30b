#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "falab/alignment.hpp"
#include "falab/datasets.hpp"
#include "falab/network.hpp"
#include "falab/trainers.hpp"

namespace falab {

struct RunnerOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  std::size_t workers = 1;
};

/// Parse, validate and execute one CLI subcommand against its config file.
/// Throws std::runtime_error with a human-readable diagnostic on any
/// validation failure; output files land under opt.out_dir.
void run_command(const std::string& subcommand, const RunnerOptions& opt);

std::vector<std::string> command_names();

enum class DeepAlgo { Bp, Fa, Dfa, Drtp };

/// One deep training run, fully determined by the three seeds. Batch
/// updates use mean reduction (the configured lr divided by the batch
/// size). Metrics/checkpoints are written only when out_prefix is set.
struct DeepRunSpec {
  std::vector<std::size_t> widths;
  ActivationKind activation = ActivationKind::Tanh;
  OutputMap output_map = OutputMap::Identity;
  ErrorKind loss = ErrorKind::Mse;
  DeepAlgo algo = DeepAlgo::Dfa;
  bool biases = false;
  InitSpec init;
  FeedbackInit feedback_init;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t log_every = 1;         // epochs between metric rows
  std::size_t checkpoint_every = 0;  // 0 keeps only the final checkpoint
  std::size_t probe_samples = 512;   // fixed prefix batch for alignment probes
  bool track_alignment = true;
  std::uint64_t init_seed = 1;
  std::uint64_t feedback_seed = 1;
  std::uint64_t data_seed = 1;
  std::string out_prefix;
};

struct DeepRunResult {
  MlpParams params;
  FeedbackEnsemble feedback;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  AlignmentReport final_alignment;
};

DeepRunResult train_deep(const Dataset& ds, const DeepRunSpec& spec);

/// Run independent tasks on `workers` threads; inline when workers <= 1.
/// The first task exception, if any, is rethrown after all tasks finish.
void run_parallel(std::vector<std::function<void()>> tasks, std::size_t workers);

}  // namespace falab
