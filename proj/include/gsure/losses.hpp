#pragma once

#include <span>
#include <string>
#include <vector>

#include "gsure/graph.hpp"
#include "gsure/model.hpp"
#include "gsure/operators.hpp"
#include "gsure/schedule.hpp"

namespace gsure {

enum class GammaRule { constant, snr };  // 1 | abar / (1 - abar)
enum class LambdaRule {
  theoretical,  // 1 - abar
  constant,     // c
  snr_scaled,   // c (1 - abar) / abar
  // Coefficient that makes the estimator exactly unbiased for the chosen
  // reference: (1 - abar) / sqrt(abar) for r = xbar_t / sqrt(abar), and
  // sqrt(abar) * noise_var_i for r = ybar.
  stein_exact,
};
enum class ProbeKind { gaussian, rademacher };
enum class DivergenceMode { autodiff, finite_difference };

struct LossConfig {
  GammaRule gamma = GammaRule::constant;
  LambdaRule lambda = LambdaRule::constant;
  double lambda_c = 1e-4;
  bool use_ybar_variant = true;
  int probes = 1;
  ProbeKind probe = ProbeKind::gaussian;
  DivergenceMode divergence = DivergenceMode::autodiff;
  double fd_step = 1e-4;

  // gamma = 1, lambda = 1e-4.
  static LossConfig faces();
  // gamma = abar / (1 - abar), lambda = 1e-4 (1 - abar) / abar.
  static LossConfig mri();
  // gamma = 1, lambda = 1 - abar, r = xbar_t / sqrt(abar).
  static LossConfig theoretical();
  static LossConfig stein_exact(bool use_ybar_variant = true);
  // gamma = abar / (1 - abar) with the stein_exact coefficient on ybar. Under
  // epsilon prediction this keeps every term on the scale of ||eps - eps_hat||^2;
  // the mri() coefficient multiplies a divergence that grows like abar^{-1/2}.
  static LossConfig snr_weighted();

  void validate() const;
};

std::string to_string(GammaRule r);
std::string to_string(LambdaRule r);
GammaRule gamma_rule_from_string(const std::string& s);
LambdaRule lambda_rule_from_string(const std::string& s);

double gamma_at(const LossConfig& cfg, const DiffusionSchedule& s, int t);
// Divergence coefficient for an entry with measurement noise variance `nu`.
double lambda_at(const LossConfig& cfg, const DiffusionSchedule& s, int t, double nu = 0.0);

// ||f - y||^2 + 2 sigma^2 div - n sigma^2.
double sure(std::span<const double> f, std::span<const double> y, double sigma, double divergence);

// ||W P (f - xbar)||^2 for one sample.
double projected_loss(std::span<const double> f, std::span<const double> xbar, const Mask& mask,
                      std::span<const double> w);

// Training items after perturbation, [B, n] each.
struct GsureBatch {
  Tensor xt;
  Tensor reference;
  Tensor mask;       // 0/1
  Tensor noise_var;  // per-entry measurement variance (0 where masked)
  std::vector<int> t;
};

// Perturbs each measurement at its timestep and fills the reference r.
GsureBatch make_gsure_batch(std::span<const Measurement* const> items, std::span<const int> t,
                            const DiffusionSchedule& s, const LossConfig& cfg, Rng& rng);

struct LossTerms {
  ad::NodeId total;
  ad::NodeId fidelity;    // batch mean of gamma ||WP(f - r)||^2
  ad::NodeId divergence;  // batch mean of 2 gamma lambda div(P W^2 f)
  // Per-item contributions to the two batch means, [B] each (divided by B).
  ad::NodeId fidelity_rows;
  ad::NodeId divergence_rows;
  ad::NodeId prediction;  // x_hat_0, [B, n]
};

// Batch-mean GSURE-Diffusion objective (constant omitted).
LossTerms record_gsure_loss(ad::Graph& g, const Denoiser& model, std::span<const ad::NodeId> params,
                            const GsureBatch& batch, std::span<const double> w, const DiffusionSchedule& s,
                            const LossConfig& cfg, Rng& probe_rng);

// Batch-mean supervised loss gamma ||f(xbar_t) - xbar||^2; divergence term is
// a constant zero.
LossTerms record_supervised_loss(ad::Graph& g, const Denoiser& model, std::span<const ad::NodeId> params,
                                 const Tensor& xt, const Tensor& clean, std::span<const int> t,
                                 const DiffusionSchedule& s, const LossConfig& cfg);

// Per-row Hutchinson estimates (1/K) sum_k v_k^T diag(weights) J v_k of the
// denoiser Jacobian at each row of xt; `weights` is [B, n] (P W^2 in the
// loss).
std::vector<double> hutchinson_divergence(const Denoiser& model, const Tensor& xt, std::span<const int> t,
                                          const DiffusionSchedule& s, const Tensor& weights, int probes, Rng& rng,
                                          ProbeKind kind = ProbeKind::gaussian, Weights which = Weights::live);

// Same estimate with central differences instead of forward-mode tangents.
std::vector<double> finite_difference_divergence(const Denoiser& model, const Tensor& xt, std::span<const int> t,
                                                 const DiffusionSchedule& s, const Tensor& weights, int probes,
                                                 Rng& rng, double step = 1e-4,
                                                 ProbeKind kind = ProbeKind::gaussian, Weights which = Weights::live);

Tensor sample_probe(const Shape& shape, ProbeKind kind, Rng& rng);

}  // namespace gsure
