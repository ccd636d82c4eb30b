#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "falab/datasets.hpp"
#include "falab/rng.hpp"
#include "falab/runner.hpp"

namespace {

struct MkdataOpts {
  std::string out = ".";
  std::string kind = "mnist";
  std::size_t samples = 2000;
  std::size_t batches = 1;
  std::size_t classes = 10;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

void run_mkdata(const MkdataOpts& o) {
  namespace fs = std::filesystem;
  fs::create_directories(o.out);
  if (o.kind == "mnist") {
    falab::Rng rng(o.seed);
    const auto img =
        falab::synthetic_image_classes(o.samples, 28, 28, 1, o.classes, o.noise, rng);
    falab::write_idx_images(o.out + "/images-idx3-ubyte", o.samples, 28, 28, img.pixels);
    falab::write_idx_labels(o.out + "/labels-idx1-ubyte", img.labels);
  } else if (o.kind == "cifar10") {
    for (std::size_t b = 0; b < o.batches; ++b) {
      falab::Rng rng = falab::Rng(o.seed).substream("batch", b);
      const auto img =
          falab::synthetic_image_classes(o.samples, 32, 32, 3, o.classes, o.noise, rng);
      falab::write_cifar10_batch(o.out + "/data_batch_" + std::to_string(b + 1) + ".bin",
                                 img.labels, img.pixels);
    }
  } else {
    throw std::runtime_error("mkdata kind '" + o.kind + "' is not one of mnist, cifar10");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for error-driven and feedback-driven training"};
  app.require_subcommand(1);

  falab::RunnerOptions run;
  std::string chosen;
  for (const auto& name : falab::command_names()) {
    CLI::App* sub = app.add_subcommand(name, "Run the '" + name + "' experiment");
    sub->add_option("--config", run.config_path, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", run.out_dir, "Output directory (created if missing)");
    sub->add_option("--seed", run.seed_override, "Override the config's seed");
    sub->add_option("--workers", run.workers, "Worker threads for independent runs");
    sub->callback([&chosen, name] { chosen = name; });
  }

  MkdataOpts mk;
  CLI::App* mkdata =
      app.add_subcommand("mkdata", "Generate synthetic image sets in the on-disk formats");
  mkdata->add_option("--out", mk.out, "Output directory");
  mkdata->add_option("--kind", mk.kind, "mnist (idx files) or cifar10 (batch files)");
  mkdata->add_option("--samples", mk.samples, "Samples per file");
  mkdata->add_option("--batches", mk.batches, "Batch file count (cifar10 only)");
  mkdata->add_option("--classes", mk.classes, "Class count");
  mkdata->add_option("--noise", mk.noise, "Pixel noise level");
  mkdata->add_option("--seed", mk.seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mkdata->parsed())
      run_mkdata(mk);
    else
      falab::run_command(chosen, run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
