#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gsure/model.hpp"
#include "gsure/operators.hpp"
#include "gsure/schedule.hpp"

namespace gsure {

struct SamplerConfig {
  int steps = 100;
  double eta = 0.0;
  // Reverse processes stop here and return the posterior-mean estimate.
  int t_min = 1;
  Weights weights = Weights::ema;
  // Called with (t, xbar_t) before each denoising step.
  std::function<void(int, const Tensor&)> observer;
};

// Evenly spaced timesteps from t_min to T inclusive, ascending, deduplicated.
std::vector<int> ddim_timesteps(int T, int t_min, int steps);

// Returns [count, dim] signal-domain samples V xbar_0.
Tensor ddim_sample(const Denoiser& model, const DiffusionSchedule& s, const SamplerConfig& cfg, std::size_t count,
                   Rng& rng, const OrthoTransform& vt);

enum class DdpmVariance { beta, posterior };

Tensor ddpm_sample(const Denoiser& model, const DiffusionSchedule& s, std::size_t count, Rng& rng,
                   const OrthoTransform& vt, int t_min = 1, Weights weights = Weights::ema,
                   DdpmVariance variance = DdpmVariance::beta);

// DDIM trajectory with spectral data consistency: after every denoising
// estimate, kept coordinates are replaced by the inverse-variance combination
// of the estimate (variance (1 - abar) / abar) and ybar (variance noise_var).
// Returns the signal-domain reconstruction [dim].
std::vector<double> reconstruct(const Denoiser& model, const DiffusionSchedule& s, const Measurement& m,
                                const SamplerConfig& cfg, Rng& rng, const OrthoTransform& vt);

}  // namespace gsure
