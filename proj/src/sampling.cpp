#include "gsure/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "gsure/error.hpp"

namespace gsure {

std::vector<int> ddim_timesteps(int T, int t_min, int steps) {
  if (steps < 1) throw DomainError("sampler: steps must be >= 1");
  if (t_min < 1 || t_min > T) throw DomainError("sampler: t_min outside [1, T]");
  if (steps > T) throw DomainError("sampler: steps exceed T");
  std::vector<int> ts;
  if (steps == 1) return {T};
  for (int k = 0; k < steps; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(steps - 1);
    ts.push_back(static_cast<int>(std::lround(t_min + (T - t_min) * frac)));
  }
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

namespace {

void check_model(const Denoiser& model, const OrthoTransform& vt) {
  if (model.dim() != vt.dim()) {
    throw ShapeError("sampler: model dimension " + std::to_string(model.dim()) + " does not match transform " +
                     std::to_string(vt.dim()));
  }
}

Tensor gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

}  // namespace

Tensor ddim_sample(const Denoiser& model, const DiffusionSchedule& s, const SamplerConfig& cfg, std::size_t count,
                   Rng& rng, const OrthoTransform& vt) {
  check_model(model, vt);
  if (!(cfg.eta >= 0.0 && cfg.eta <= 1.0)) throw DomainError("sampler: eta must be in [0, 1]");
  const std::vector<int> ts = ddim_timesteps(s.T, cfg.t_min, cfg.steps);
  const std::size_t n = model.dim();
  Tensor x = gaussian(count, n, rng);
  Tensor x0;
  for (std::size_t k = ts.size(); k-- > 0;) {
    const int t = ts[k];
    if (cfg.observer) cfg.observer(t, x);
    x0 = model.predict(x, t, s, cfg.weights);
    if (k == 0) break;
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(ts[k - 1]);
    const double sigma = cfg.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab), sp = std::sqrt(ab_prev);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double eps = (x[i] - sa * x0[i]) / sn;
      double next = sp * x0[i] + dir * eps;
      if (sigma > 0.0) next += sigma * rng.normal();
      x[i] = next;
    }
  }
  return vt.apply_inverse_rows(x0);
}

Tensor ddpm_sample(const Denoiser& model, const DiffusionSchedule& s, std::size_t count, Rng& rng,
                   const OrthoTransform& vt, int t_min, Weights weights, DdpmVariance variance) {
  check_model(model, vt);
  if (t_min < 1 || t_min > s.T) throw DomainError("sampler: t_min outside [1, T]");
  Tensor x = gaussian(count, model.dim(), rng);
  Tensor x0;
  for (int t = s.T;; --t) {
    x0 = model.predict(x, t, s, weights);
    if (t == t_min) break;
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t - 1);
    const double beta = s.beta(t);
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    const double var = variance == DdpmVariance::beta ? beta : beta * (1.0 - ab_prev) / (1.0 - ab);
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = c0 * x0[i] + ct * x[i] + sd * rng.normal();
  }
  return vt.apply_inverse_rows(x0);
}

std::vector<double> reconstruct(const Denoiser& model, const DiffusionSchedule& s, const Measurement& m,
                                const SamplerConfig& cfg, Rng& rng, const OrthoTransform& vt) {
  check_model(model, vt);
  if (m.dim() != model.dim()) throw ShapeError("reconstruct: measurement dimension does not match the model");
  check_psd_feasibility(s, m);
  const std::vector<int> ts = ddim_timesteps(s.T, cfg.t_min, cfg.steps);
  const std::size_t n = model.dim();
  Tensor x = gaussian(1, n, rng);
  Tensor x0;
  for (std::size_t k = ts.size(); k-- > 0;) {
    const int t = ts[k];
    const double ab = s.alpha_bar(t);
    if (cfg.observer) cfg.observer(t, x);
    x0 = model.predict(x, t, s, cfg.weights);
    const double est_var = (1.0 - ab) / ab;
    for (std::size_t i = 0; i < n; ++i) {
      if (!m.mask[i]) continue;
      const double nu = m.noise_var[i];
      x0[i] = nu == 0.0 ? m.ybar[i] : (est_var * m.ybar[i] + nu * x0[i]) / (est_var + nu);
    }
    if (k == 0) break;
    const double ab_prev = s.alpha_bar(ts[k - 1]);
    const double sigma = cfg.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab), sp = std::sqrt(ab_prev);
    for (std::size_t i = 0; i < n; ++i) {
      const double eps = (x[i] - sa * x0[i]) / sn;
      double next = sp * x0[i] + dir * eps;
      if (sigma > 0.0) next += sigma * rng.normal();
      x[i] = next;
    }
  }
  return vt.apply_inverse(x0.data());
}

}  // namespace gsure
