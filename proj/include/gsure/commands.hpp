#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsure/config.hpp"
#include "gsure/eval.hpp"
#include "gsure/training.hpp"

// Subcommand implementations behind the command-line tool. Every command
// writes its artifacts under `out` and returns a short summary; identical
// inputs give byte-identical files.
namespace gsure::commands {

inline constexpr int kSidecarVersion = 1;

// Clean signals of the configured distribution; `stream` separates the
// training set (0) from held-out sets.
std::vector<std::vector<double>> generate_clean(const ExperimentConfig& c, std::size_t count, std::uint64_t stream = 0);

// Simulated dataset for the config, or the measurements stored in
// io.dataset_dir when set.
PrecomputedDataset build_dataset(const ExperimentConfig& c);

struct GenDataSummary {
  std::size_t count = 0;
  std::size_t dim = 0;
  int t_min = 1;
};
GenDataSummary gen_data(const ExperimentConfig& c, const std::filesystem::path& out);

struct TrainSummary {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
  int t_min = 1;
  std::filesystem::path checkpoint_path;
};
TrainSummary train(const ExperimentConfig& c, const std::filesystem::path& out,
                   std::optional<std::filesystem::path> checkpoint_path = std::nullopt);

// Loads a checkpoint and checks it against the configured schedule and data
// dimension.
Mlp load_model(const ExperimentConfig& c, const std::filesystem::path& checkpoint);

Tensor sample(const ExperimentConfig& c, const std::filesystem::path& checkpoint, const std::filesystem::path& out);

struct ReconstructSummary {
  Tensor reconstructions;  // [count, dim]
  Tensor zero_filled;      // [count, dim]
  std::vector<std::size_t> accelerations;
  std::vector<double> residual_norms;  // mean ||recon - clean|| per acceleration
  bool all_finite = true;
};
ReconstructSummary reconstruct(const ExperimentConfig& c, const std::filesystem::path& checkpoint,
                               const std::filesystem::path& out);

// Acceleration sweep with nested line masks: record i keeps the same random
// lines (a subset of those at every smaller R) and uses the same sampler seed
// at every R.
ReconstructSummary acceleration_sweep(const Denoiser& model, const ExperimentConfig& c,
                                      std::span<const std::vector<double>> clean);

// Writes one CSV per configured operation and returns their names.
std::vector<std::string> evaluate(const ExperimentConfig& c, std::optional<std::filesystem::path> checkpoint,
                                  const std::filesystem::path& out);

struct PgmRequest {
  std::filesystem::path out;
  std::size_t index = 0;  // row of a [count, dim] array
  std::size_t height = 0;
  std::size_t width = 0;
  double lo = -1.0;
  double hi = 1.0;
};

// JSON description of an array, checkpoint or config file; optionally
// converts one array row to a graymap.
std::string inspect(const std::filesystem::path& path, const std::optional<PgmRequest>& pgm = std::nullopt);

}  // namespace gsure::commands
