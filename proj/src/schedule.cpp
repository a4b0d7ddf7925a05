#include "gsure/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gsure/error.hpp"

namespace gsure {

void DiffusionSchedule::check_t(int t) const {
  if (t < 1 || t > T) {
    throw DomainError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
}

double DiffusionSchedule::beta(int t) const {
  check_t(t);
  return betas[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha_bar(int t) const {
  check_t(t);
  return alpha_bars[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha_bar_prev(int t) const {
  check_t(t);
  return t == 1 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 2)];
}

DiffusionSchedule linear_schedule(int T, double beta1, double betaT) {
  if (T < 1) throw DomainError("schedule: T must be >= 1");
  if (!(beta1 > 0.0 && beta1 <= betaT && betaT < 1.0)) {
    throw DomainError("schedule: need 0 < beta1 <= betaT < 1");
  }
  if (T == 1 && beta1 != betaT) throw DomainError("schedule: T = 1 needs beta1 == betaT");
  DiffusionSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  s.alpha_bars.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    const double b = beta1 + (betaT - beta1) * frac;
    s.betas[static_cast<std::size_t>(i)] = b;
    prod *= 1.0 - b;
    s.alpha_bars[static_cast<std::size_t>(i)] = prod;
  }
  return s;
}

namespace {

double max_of(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

bool feasible_at(const DiffusionSchedule& s, int t, double nu) {
  const double ab = s.alpha_bar(t);
  return (1.0 - ab) - ab * nu >= 0.0;
}

}  // namespace

int check_psd_feasibility(const DiffusionSchedule& s, std::span<const double> noise_var) {
  const double nu = max_of(noise_var);
  for (int t = 1; t <= s.T; ++t) {
    if (feasible_at(s, t, nu)) return t;
  }
  throw InfeasibleError("no feasible timestep: noise variance " + std::to_string(nu) +
                        " exceeds (1 - abar_T) / abar_T");
}

int check_psd_feasibility(const DiffusionSchedule& s, const SpectralDegradation& deg) {
  return check_psd_feasibility(s, deg.noise_var());
}

int check_psd_feasibility(const DiffusionSchedule& s, const Measurement& m) {
  return check_psd_feasibility(s, m.noise_var);
}

int feasible_t_closed(const DiffusionSchedule& s, double max_noise_var) {
  const double bound = 1.0 / (1.0 + max_noise_var);
  if (!(s.alpha_bar(s.T) <= bound)) throw InfeasibleError("no feasible timestep under the closed condition");
  int lo = 1, hi = s.T;  // answer in [lo, hi]
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (s.alpha_bar(mid) <= bound) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

std::vector<double> topup_variance(const DiffusionSchedule& s, int t, std::span<const double> noise_var) {
  const double ab = s.alpha_bar(t);
  std::vector<double> c(noise_var.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = (1.0 - ab) - ab * noise_var[i];
    if (c[i] < 0.0) {
      throw InfeasibleError("timestep " + std::to_string(t) + " is below the feasible range (entry " +
                            std::to_string(i) + ")");
    }
  }
  return c;
}

Tensor perturb(const Measurement& m, int t, const DiffusionSchedule& s, Rng& rng) {
  const std::vector<double> c = topup_variance(s, t, m.noise_var);
  const double sa = std::sqrt(s.alpha_bar(t));
  Tensor out(Shape{m.dim()});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * m.ybar[i] + std::sqrt(c[i]) * rng.normal();
  return out;
}

Tensor diffuse_clean(std::span<const double> xbar, int t, const DiffusionSchedule& s, Rng& rng) {
  const double ab = s.alpha_bar(t);
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  Tensor out(Shape{xbar.size()});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * xbar[i] + sn * rng.normal();
  return out;
}

}  // namespace gsure
