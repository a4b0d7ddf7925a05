#include "gsure/losses.hpp"

#include <cmath>

#include "gsure/error.hpp"

namespace gsure {

LossConfig LossConfig::faces() { return LossConfig{}; }

LossConfig LossConfig::mri() {
  LossConfig c;
  c.gamma = GammaRule::snr;
  c.lambda = LambdaRule::snr_scaled;
  c.lambda_c = 1e-4;
  return c;
}

LossConfig LossConfig::theoretical() {
  LossConfig c;
  c.lambda = LambdaRule::theoretical;
  c.use_ybar_variant = false;
  return c;
}

LossConfig LossConfig::stein_exact(bool use_ybar_variant) {
  LossConfig c;
  c.lambda = LambdaRule::stein_exact;
  c.use_ybar_variant = use_ybar_variant;
  return c;
}

LossConfig LossConfig::snr_weighted() {
  LossConfig c;
  c.gamma = GammaRule::snr;
  c.lambda = LambdaRule::stein_exact;
  c.use_ybar_variant = true;
  return c;
}

void LossConfig::validate() const {
  if (probes < 1) throw ConfigError("loss: probes must be >= 1");
  if (!(fd_step > 0.0)) throw ConfigError("loss: finite-difference step must be positive");
  if (!std::isfinite(lambda_c)) throw ConfigError("loss: lambda constant must be finite");
}

std::string to_string(GammaRule r) { return r == GammaRule::constant ? "constant" : "snr"; }

std::string to_string(LambdaRule r) {
  switch (r) {
    case LambdaRule::theoretical: return "theoretical";
    case LambdaRule::constant: return "constant";
    case LambdaRule::snr_scaled: return "snr_scaled";
    case LambdaRule::stein_exact: return "stein_exact";
  }
  return "?";
}

GammaRule gamma_rule_from_string(const std::string& s) {
  if (s == "constant") return GammaRule::constant;
  if (s == "snr") return GammaRule::snr;
  throw ConfigError("unknown gamma rule '" + s + "'");
}

LambdaRule lambda_rule_from_string(const std::string& s) {
  if (s == "theoretical") return LambdaRule::theoretical;
  if (s == "constant") return LambdaRule::constant;
  if (s == "snr_scaled") return LambdaRule::snr_scaled;
  if (s == "stein_exact") return LambdaRule::stein_exact;
  throw ConfigError("unknown lambda rule '" + s + "'");
}

double gamma_at(const LossConfig& cfg, const DiffusionSchedule& s, int t) {
  const double ab = s.alpha_bar(t);
  return cfg.gamma == GammaRule::constant ? 1.0 : ab / (1.0 - ab);
}

double lambda_at(const LossConfig& cfg, const DiffusionSchedule& s, int t, double nu) {
  const double ab = s.alpha_bar(t);
  switch (cfg.lambda) {
    case LambdaRule::theoretical: return 1.0 - ab;
    case LambdaRule::constant: return cfg.lambda_c;
    case LambdaRule::snr_scaled: return cfg.lambda_c * (1.0 - ab) / ab;
    case LambdaRule::stein_exact: return cfg.use_ybar_variant ? std::sqrt(ab) * nu : (1.0 - ab) / std::sqrt(ab);
  }
  return 0.0;
}

double sure(std::span<const double> f, std::span<const double> y, double sigma, double divergence) {
  if (f.size() != y.size()) throw ShapeError("sure: size mismatch");
  if (!(sigma > 0.0)) throw DomainError("sure: sigma must be positive");
  double r = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) r += (f[i] - y[i]) * (f[i] - y[i]);
  const double s2 = sigma * sigma;
  return r + 2.0 * s2 * divergence - static_cast<double>(f.size()) * s2;
}

double projected_loss(std::span<const double> f, std::span<const double> xbar, const Mask& mask,
                      std::span<const double> w) {
  if (f.size() != xbar.size() || f.size() != mask.size() || f.size() != w.size()) {
    throw ShapeError("projected loss: size mismatch");
  }
  double r = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!mask[i]) continue;
    const double e = w[i] * (f[i] - xbar[i]);
    r += e * e;
  }
  return r;
}

Tensor sample_probe(const Shape& shape, ProbeKind kind, Rng& rng) {
  Tensor v(shape);
  for (double& x : v.storage()) x = kind == ProbeKind::gaussian ? rng.normal() : rng.rademacher();
  return v;
}

GsureBatch make_gsure_batch(std::span<const Measurement* const> items, std::span<const int> t,
                            const DiffusionSchedule& s, const LossConfig& cfg, Rng& rng) {
  if (items.size() != t.size()) throw ShapeError("gsure batch: one timestep per item required");
  if (items.empty()) throw ShapeError("gsure batch: empty batch");
  const std::size_t b = items.size(), n = items.front()->dim();
  GsureBatch out;
  out.xt = Tensor(Shape{b, n});
  out.reference = Tensor(Shape{b, n});
  out.mask = Tensor(Shape{b, n});
  out.noise_var = Tensor(Shape{b, n});
  out.t.assign(t.begin(), t.end());
  for (std::size_t r = 0; r < b; ++r) {
    const Measurement& m = *items[r];
    if (m.dim() != n) throw ShapeError("gsure batch: mixed signal dimensions");
    const Tensor xt = perturb(m, t[r], s, rng);
    const double inv_sa = 1.0 / std::sqrt(s.alpha_bar(t[r]));
    for (std::size_t j = 0; j < n; ++j) {
      out.xt.at(r, j) = xt[j];
      out.reference.at(r, j) = cfg.use_ybar_variant ? m.ybar[j] : xt[j] * inv_sa;
      out.mask.at(r, j) = m.mask[j] ? 1.0 : 0.0;
      out.noise_var.at(r, j) = m.noise_var[j];
    }
  }
  return out;
}

LossTerms record_gsure_loss(ad::Graph& g, const Denoiser& model, std::span<const ad::NodeId> params,
                            const GsureBatch& batch, std::span<const double> w, const DiffusionSchedule& s,
                            const LossConfig& cfg, Rng& probe_rng) {
  cfg.validate();
  const std::size_t b = batch.t.size();
  const std::size_t n = model.dim();
  if (batch.xt.shape() != Shape{b, n} || w.size() != n) throw ShapeError("gsure loss: batch/weight shape mismatch");
  const double inv_b = 1.0 / static_cast<double>(b);
  const double inv_k = 1.0 / static_cast<double>(cfg.probes);

  Tensor fid_w(Shape{b, n}), div_w(Shape{b, n});
  for (std::size_t r = 0; r < b; ++r) {
    const int t = batch.t[r];
    const double gamma = gamma_at(cfg, s, t);
    for (std::size_t j = 0; j < n; ++j) {
      const double pw2 = batch.mask.at(r, j) * w[j] * w[j];
      fid_w.at(r, j) = gamma * pw2 * inv_b;
      div_w.at(r, j) = 2.0 * gamma * lambda_at(cfg, s, t, batch.noise_var.at(r, j)) * pw2 * inv_b * inv_k;
    }
  }

  const ad::NodeId x = g.input(batch.xt);
  const ad::NodeId f = model.denoise(g, x, batch.t, s, params);
  const ad::NodeId d = g.sub(f, g.constant(batch.reference));
  const ad::NodeId fidelity_rows = g.row_sum(g.mul_const(g.mul(d, d), fid_w));
  const ad::NodeId fidelity = g.sum(fidelity_rows);

  ad::NodeId divergence_rows{};
  for (int k = 0; k < cfg.probes; ++k) {
    const Tensor v = sample_probe(batch.xt.shape(), cfg.probe, probe_rng);
    ad::NodeId jv;
    if (cfg.divergence == DivergenceMode::autodiff) {
      jv = g.tangent(f, x, g.constant(v));
    } else {
      Tensor xp = batch.xt, xm = batch.xt;
      xp.axpy(cfg.fd_step, v);
      xm.axpy(-cfg.fd_step, v);
      const ad::NodeId fp = model.denoise(g, g.constant(std::move(xp)), batch.t, s, params);
      const ad::NodeId fm = model.denoise(g, g.constant(std::move(xm)), batch.t, s, params);
      jv = g.scale(g.sub(fp, fm), 0.5 / cfg.fd_step);
    }
    const ad::NodeId term = g.row_sum(g.mul_const(jv, hadamard(v, div_w)));
    divergence_rows = k == 0 ? term : g.add(divergence_rows, term);
  }
  const ad::NodeId divergence = g.sum(divergence_rows);
  const ad::NodeId total = g.add(fidelity, divergence);
  g.set_output(total);
  return {total, fidelity, divergence, fidelity_rows, divergence_rows, f};
}

LossTerms record_supervised_loss(ad::Graph& g, const Denoiser& model, std::span<const ad::NodeId> params,
                                 const Tensor& xt, const Tensor& clean, std::span<const int> t,
                                 const DiffusionSchedule& s, const LossConfig& cfg) {
  require_same_shape(xt, clean, "supervised loss");
  const std::size_t b = t.size(), n = model.dim();
  Tensor wts(Shape{b, n});
  for (std::size_t r = 0; r < b; ++r) {
    const double gamma = gamma_at(cfg, s, t[r]) / static_cast<double>(b);
    for (std::size_t j = 0; j < n; ++j) wts.at(r, j) = gamma;
  }
  const ad::NodeId x = g.input(xt);
  const ad::NodeId f = model.denoise(g, x, t, s, params);
  const ad::NodeId d = g.sub(f, g.constant(clean));
  const ad::NodeId fidelity_rows = g.row_sum(g.mul_const(g.mul(d, d), wts));
  const ad::NodeId fidelity = g.sum(fidelity_rows);
  const ad::NodeId zero = g.constant(Tensor::scalar(0.0));
  const ad::NodeId zero_rows = g.constant(Tensor(Shape{b}));
  const ad::NodeId total = g.add(fidelity, zero);
  g.set_output(total);
  return {total, fidelity, zero, fidelity_rows, zero_rows, f};
}

std::vector<double> hutchinson_divergence(const Denoiser& model, const Tensor& xt, std::span<const int> t,
                                          const DiffusionSchedule& s, const Tensor& weights, int probes, Rng& rng,
                                          ProbeKind kind, Weights which) {
  if (probes < 1) throw DomainError("hutchinson: probes must be >= 1");
  require_same_shape(xt, weights, "hutchinson");
  ad::Graph g;
  const ad::NodeId x = g.input(xt);
  const ad::NodeId f = model.denoise(g, x, t, s, which);
  ad::NodeId acc{};
  for (int k = 0; k < probes; ++k) {
    const Tensor v = sample_probe(xt.shape(), kind, rng);
    const ad::NodeId jv = g.tangent(f, x, g.constant(v));
    const ad::NodeId r = g.row_sum(g.mul_const(jv, hadamard(v, weights)));
    acc = k == 0 ? r : g.add(acc, r);
  }
  g.set_output(g.scale(acc, 1.0 / probes));
  return g.forward().storage();
}

std::vector<double> finite_difference_divergence(const Denoiser& model, const Tensor& xt, std::span<const int> t,
                                                 const DiffusionSchedule& s, const Tensor& weights, int probes,
                                                 Rng& rng, double step, ProbeKind kind, Weights which) {
  if (probes < 1) throw DomainError("finite-difference divergence: probes must be >= 1");
  require_same_shape(xt, weights, "finite-difference divergence");
  std::vector<double> acc(xt.rows(), 0.0);
  for (int k = 0; k < probes; ++k) {
    const Tensor v = sample_probe(xt.shape(), kind, rng);
    Tensor xp = xt, xm = xt;
    xp.axpy(step, v);
    xm.axpy(-step, v);
    const Tensor fp = model.predict(xp, t, s, which);
    const Tensor fm = model.predict(xm, t, s, which);
    for (std::size_t r = 0; r < xt.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < xt.cols(); ++j) {
        sum += v.at(r, j) * weights.at(r, j) * (fp.at(r, j) - fm.at(r, j)) / (2.0 * step);
      }
      acc[r] += sum / probes;
    }
  }
  return acc;
}

}  // namespace gsure
