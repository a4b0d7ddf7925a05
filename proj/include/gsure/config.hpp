#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gsure/model.hpp"
#include "gsure/operators.hpp"
#include "gsure/sampling.hpp"
#include "gsure/training.hpp"

namespace gsure {

struct DataSpec {
  // two-deltas | isotropic-gaussian | synthetic-shapes | external-binary
  std::string kind = "two-deltas";
  std::size_t count = 10000;
  std::uint64_t seed = 0;
  std::size_t dim = 2;        // two-deltas, isotropic-gaussian
  double variance = 1.0;      // isotropic-gaussian
  std::size_t height = 16;    // synthetic-shapes
  std::size_t width = 16;
  // Append a zero imaginary plane so signals live in [2, height, width].
  bool complex = false;
  std::string path;           // external-binary: [count, dim] array file

  std::size_t signal_dim() const;
};

struct DegradationSpec {
  // none | single-drop | patch | lines | fixed
  std::string family = "single-drop";
  // identity | spectral
  std::string transform = "identity";
  double p = 0.2;                   // patch
  std::size_t patch = 4;            // patch
  std::size_t acceleration = 4;     // lines
  std::vector<std::uint8_t> mask;   // fixed
  double singular = 1.0;
  double sigma0 = 0.01;
};

struct SampleSpec {
  std::string sampler = "ddim";  // ddim | ddpm
  int steps = 100;
  double eta = 0.0;
  std::size_t count = 16;
  std::uint64_t seed = 0;
  Weights weights = Weights::ema;
};

struct ReconstructSpec {
  int steps = 100;
  std::size_t count = 8;  // leading records of the dataset
  std::uint64_t seed = 0;
  std::vector<std::size_t> r_sweep = {6, 8, 10, 12};
  int uncertainty_runs = 8;
};

struct EvalSpec {
  // mse-sweep | psnr | independence-demo | distance | cca
  std::vector<std::string> operations = {"mse-sweep"};
  std::string reference_checkpoint;  // second model for mse-sweep / psnr
  int t_stride = 50;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  std::vector<double> snr_levels = {1e-2, 1e2};
  int shuffles = 200;
  int projections = 256;
  double data_range = 2.0;
  std::string samples_file;  // distance: generated samples
  std::string heldout_file;  // distance: reference set (regenerated when empty)
};

struct IoSpec {
  std::string out_dir = "out";
  std::string dataset_dir;  // ingest measurements from here instead of simulating
};

struct ExperimentConfig {
  DataSpec data;
  DegradationSpec degradation;
  // dim follows the data. Direct prediction of xbar_0 by default: under a
  // schedule ending at beta_T = 0.2 the epsilon parameterization divides by
  // sqrt(abar_t) ~ e^-25 mid-chain.
  MlpConfig model{.mean_type = MeanType::predict_x};
  TrainConfig train;     // the "schedule" section lands in train.schedule
  SampleSpec sample;
  ReconstructSpec reconstruct;
  EvalSpec eval;
  IoSpec io;

  // Throws ConfigError on any inconsistency.
  void validate() const;
};

// Parses a JSON document. Missing keys take their defaults; unknown keys,
// wrong types and invalid values throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
// Effective configuration with every key present, as canonical JSON text.
std::string dump_config(const ExperimentConfig& c);
// Digest of the effective configuration, excluding train.threads and
// io.out_dir.
std::uint64_t config_digest(const ExperimentConfig& c);

OrthoTransform build_transform(const ExperimentConfig& c);
MaskDistribution build_masks(const ExperimentConfig& c);

}  // namespace gsure
