#pragma once

#include <span>
#include <vector>

#include "gsure/operators.hpp"
#include "gsure/rng.hpp"
#include "gsure/tensor.hpp"

namespace gsure {

// Timesteps are 1-based throughout: t in [1, T].
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  double beta(int t) const;
  double alpha_bar(int t) const;
  // alpha_bar at t - 1, with alpha_bar(0) = 1.
  double alpha_bar_prev(int t) const;
  void check_t(int t) const;
};

DiffusionSchedule linear_schedule(int T, double beta1, double betaT);

// Smallest t with (1 - abar_t) - abar_t * nu_i >= 0 for every entry, found by
// a forward scan. Throws InfeasibleError when even t = T fails.
int check_psd_feasibility(const DiffusionSchedule& s, std::span<const double> noise_var);
int check_psd_feasibility(const DiffusionSchedule& s, const SpectralDegradation& deg);
int check_psd_feasibility(const DiffusionSchedule& s, const Measurement& m);

// Same quantity from the equivalent closed condition abar_t <= 1 / (1 + nu_max),
// located by bisection over the monotone alpha_bar sequence.
int feasible_t_closed(const DiffusionSchedule& s, double max_noise_var);

// Diagonal of C_t = (1 - abar_t) I - abar_t * diag(noise_var). Throws
// InfeasibleError if any entry is negative.
std::vector<double> topup_variance(const DiffusionSchedule& s, int t, std::span<const double> noise_var);

// xbar_t = sqrt(abar_t) ybar + C_t^{1/2} eps.
Tensor perturb(const Measurement& m, int t, const DiffusionSchedule& s, Rng& rng);

// Ideal forward marginal q*(xbar_t | xbar) for a clean spectral vector.
Tensor diffuse_clean(std::span<const double> xbar, int t, const DiffusionSchedule& s, Rng& rng);

}  // namespace gsure
