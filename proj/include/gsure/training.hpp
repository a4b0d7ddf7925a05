#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsure/losses.hpp"
#include "gsure/model.hpp"
#include "gsure/operators.hpp"
#include "gsure/schedule.hpp"

namespace gsure {

struct ScheduleConfig {
  int T = 1000;
  double beta_1 = 1e-4;
  double beta_T = 0.2;

  DiffusionSchedule build() const { return linear_schedule(T, beta_1, beta_T); }
};

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// One bias-corrected Adam update in place.
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  long iterations = 1000;
  std::size_t batch_size = 128;
  AdamConfig adam;
  std::optional<std::uint64_t> seed;  // required
  LossConfig loss;
  ScheduleConfig schedule;
  bool oracle_mode = false;
  long log_every = 1;
  // Batches are split into fixed-size chunks so the reduction order does not
  // depend on the thread count.
  std::size_t chunk_size = 32;
  std::size_t threads = 1;
  // The decay used at step k is min(decay, (1 + k) / (10 + k)).
  bool ema_warmup = true;
  // wall_ms is reported as 0 unless enabled, keeping metrics reproducible.
  bool record_wall_time = false;

  void validate() const;
  // Canonical text form; its digest identifies a run.
  std::string canonical() const;
};

struct PrecomputedDataset {
  OrthoTransform vt = OrthoTransform::identity(0);
  std::vector<Measurement> records;
  std::vector<double> w;
  // Clean spectral vectors, present in simulation mode; oracle training
  // requires them.
  std::vector<std::vector<double>> clean_bar;

  std::size_t dim() const { return vt.dim(); }
  std::size_t size() const { return records.size(); }
  double max_noise_var() const;
};

// Simulation mode: corrupts each clean signal with its own degradation drawn
// from `masks` (record i uses seed derive(seed, i)); W comes from the analytic
// E[P] of `masks`.
PrecomputedDataset simulate_dataset(std::span<const std::vector<double>> clean, const MaskDistribution& masks,
                                    const OrthoTransform& vt, double singular, double sigma0, std::uint64_t seed);

struct RawRecord {
  std::vector<double> x;
  SpectralDegradation degradation;
};

// Per-record operators; all must share V^T. W comes from the empirical mean
// of the masks.
PrecomputedDataset precompute(std::span<const RawRecord> raw, std::uint64_t seed);

// Ingestion mode: measurements are stored verbatim. W from `expected` if
// given, else from the empirical mean of the masks.
PrecomputedDataset ingest_dataset(OrthoTransform vt, std::vector<Measurement> records,
                                  std::optional<std::vector<double>> expected = std::nullopt);

struct MetricsRow {
  long step = 0;
  double loss = 0.0;
  double divergence_term = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct Checkpoint {
  std::string model_kind;
  MlpConfig model;
  std::uint64_t config_digest = 0;
  std::uint64_t schedule_digest = 0;
  long step = 0;
  std::vector<double> params;
  std::vector<double> ema;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t schedule_digest(const DiffusionSchedule& s);
Checkpoint make_checkpoint(const Mlp& model, const DiffusionSchedule& s, std::uint64_t config_digest, long step);
// Rebuilds the network and copies both parameter sets.
Mlp restore_model(const Checkpoint& c);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
  int t_min = 1;
};

// Trains `model` in place. GSURE mode draws t per item uniformly on
// [t_min, T] with t_min the dataset's PSD-feasibility bound; oracle mode uses
// the supervised loss on clean_bar with t on [1, T].
TrainResult train(Mlp& model, const TrainConfig& cfg, const PrecomputedDataset& data,
                  const std::function<void(const MetricsRow&)>& on_metrics = {});

// Gradient of the batch loss at the current parameters, with the same
// chunking and seeding as one training step.
struct StepEvaluation {
  double loss = 0.0;
  double divergence = 0.0;
  std::vector<double> grad;
};
StepEvaluation evaluate_step(const Mlp& model, const TrainConfig& cfg, const PrecomputedDataset& data,
                             const DiffusionSchedule& s, int t_min, long step);

}  // namespace gsure
