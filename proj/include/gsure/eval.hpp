#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gsure/model.hpp"
#include "gsure/operators.hpp"
#include "gsure/sampling.hpp"
#include "gsure/schedule.hpp"

namespace gsure {

struct SweepRow {
  int t = 0;
  double mse_a = 0.0;
  double mse_b = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ascending t
  std::string dataset;
  std::size_t samples = 0;
};

// For each t, draws xbar_t from the ideal marginal (full mask) for every clean
// signal and records each model's mean ||x_hat_0 - xbar||^2. Both models see
// the same noisy inputs.
SweepResult denoising_mse_sweep(const Denoiser& a, const Denoiser& b, std::span<const std::vector<double>> clean,
                                const OrthoTransform& vt, const DiffusionSchedule& s, std::vector<int> ts, Rng& rng,
                                Weights which = Weights::ema, std::string dataset = {});

struct PsnrRow {
  int t = 0;
  double psnr = 0.0;  // +infinity when the outputs coincide
};

// PSNR between the two models' signal-domain outputs on identical full-mask
// inputs; peak value `data_range`.
std::vector<PsnrRow> generalization_psnr(const Denoiser& a, const Denoiser& b, std::span<const std::vector<double>> clean,
                                         const OrthoTransform& vt, const DiffusionSchedule& s, std::vector<int> ts,
                                         Rng& rng, double data_range = 2.0, Weights which = Weights::ema);

// 2 E|a - b| - E|a - a'| - E|b - b'| over all pairs (V-statistic).
double energy_distance(const Tensor& a, const Tensor& b);

struct PermutationTest {
  double statistic = 0.0;
  double null_mean = 0.0;
  double null_sd = 0.0;
  double p_value = 1.0;  // (1 + #{null >= statistic}) / (1 + shuffles)

  // Statistic exceeds the null mean by more than k null standard deviations.
  bool significant(double k = 3.0) const { return statistic > null_mean + k * null_sd; }
};

PermutationTest energy_permutation_test(const Tensor& a, const Tensor& b, int shuffles, Rng& rng);

enum class DemoPrior { isotropic_gaussian, two_deltas };

struct IndependenceResult {
  int t = 0;
  double snr = 0.0;            // abar / (1 - abar) at t
  Tensor errors_mask0;          // f(xbar_t) - xbar where coordinate 0 is dropped
  Tensor errors_mask1;          // ... where coordinate 1 is dropped
  PermutationTest test;
};

// Timestep whose abar / (1 - abar) is closest to `snr`.
int timestep_for_snr(const DiffusionSchedule& s, double snr);

// Draws 2-D signals from `prior`, masks one coordinate with probability 1/2,
// forms xbar_t by perturbation and compares the error clouds of the two masks
// with the energy distance.
std::vector<IndependenceResult> independence_demo(DemoPrior prior, const Denoiser& model, const DiffusionSchedule& s,
                                                  std::span<const double> snr_levels, std::size_t samples, Rng& rng,
                                                  double sigma0 = 0.0, int shuffles = 200,
                                                  Weights which = Weights::live);

// Canonical correlations between two views ([N, p] and [N, q]), descending,
// each in [0, 1]. `ridge` is added to both covariance diagonals.
std::vector<double> linear_cca(const Tensor& x, const Tensor& y, double ridge = 1e-6);

struct UncertaintyMap {
  std::vector<double> mean;
  std::vector<double> stddev;  // sample standard deviation over the k runs
};

// k reconstructions of one measurement; run i uses seed derive(seed, i), or
// derive(seed, 0) for all runs when `reuse_seed`.
UncertaintyMap uncertainty_map(const Denoiser& model, const DiffusionSchedule& s, const Measurement& m,
                               const OrthoTransform& vt, const SamplerConfig& cfg, std::uint64_t seed, int k = 8,
                               bool reuse_seed = false);

struct DistributionDistance {
  // sqrt(d * mean_theta W2^2(theta)): equals ||delta|| for two Gaussians with
  // equal covariance and mean offset delta.
  double sliced_w2 = 0.0;
  double mean_gap = 0.0;  // ||mu_a - mu_b||
  double cov_gap = 0.0;   // ||Sigma_a - Sigma_b||_F
};

DistributionDistance distribution_distance(const Tensor& a, const Tensor& b, int projections, Rng& rng);

// Squared 1-D Wasserstein-2 distance between two empirical distributions.
double wasserstein2_squared_1d(std::vector<double> a, std::vector<double> b);

}  // namespace gsure
