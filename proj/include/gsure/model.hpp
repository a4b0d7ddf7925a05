#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gsure/graph.hpp"
#include "gsure/schedule.hpp"
#include "gsure/tensor.hpp"

namespace gsure {

enum class MeanType { predict_x, predict_epsilon };
enum class Weights { live, ema };

std::string to_string(MeanType m);
MeanType mean_type_from_string(const std::string& s);

// Sinusoidal embedding: sin(t w_k) for the first half, cos(t w_k) for the
// second, w_k = 10000^{-k / (dim/2)}.
std::vector<double> time_embedding(int t, std::size_t dim);

// Time-conditioned denoiser f^{(t)}. Parameters live in one flat vector; the
// graph sees them as parameter nodes created in flat order, so
// Graph::parameters() gradients concatenate to the flat gradient.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Denoiser> clone() const = 0;

  MeanType mean_type() const { return mean_type_; }

  // Shapes of the parameter tensors, in flat order.
  virtual std::vector<Shape> parameter_shapes() const = 0;
  // Creates one parameter node per tensor; several denoise calls on the same
  // graph can share them.
  std::vector<ad::NodeId> bind_parameters(ad::Graph& g, Weights which = Weights::live) const;

  // x_hat_0 view of the network for a [B, dim] batch with per-row timesteps.
  ad::NodeId denoise(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                     std::span<const ad::NodeId> params) const;
  ad::NodeId denoise(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                     Weights which = Weights::live) const;
  Tensor predict(const Tensor& x, std::span<const int> t, const DiffusionSchedule& s,
                 Weights which = Weights::live) const;
  Tensor predict(const Tensor& x, int t, const DiffusionSchedule& s, Weights which = Weights::live) const;

  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& ema_params() { return ema_; }
  const std::vector<double>& ema_params() const { return ema_; }

  double ema_decay() const { return ema_decay_; }
  void set_ema_decay(double d);
  // ema <- d * ema + (1 - d) * params.
  void ema_update();

 protected:
  Denoiser(MeanType mean_type, double ema_decay) : mean_type_(mean_type), ema_decay_(ema_decay) {}
  virtual ad::NodeId record_raw(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                                std::span<const ad::NodeId> params) const = 0;

  MeanType mean_type_;
  double ema_decay_;
  std::vector<double> params_;
  std::vector<double> ema_;
};

struct MlpConfig {
  std::size_t dim = 2;
  std::vector<std::size_t> hidden = {256, 256, 256};
  std::size_t embedding_dim = 32;
  MeanType mean_type = MeanType::predict_epsilon;
  ad::Activation activation = ad::Activation::silu;
  double ema_decay = 0.9999;

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

// Fully connected network over [x, emb(t)], smooth activations, linear head.
class Mlp final : public Denoiser {
 public:
  Mlp(MlpConfig cfg, std::uint64_t seed);

  std::size_t dim() const override { return cfg_.dim; }
  std::string kind() const override { return "mlp"; }
  std::vector<Shape> parameter_shapes() const override;
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<Mlp>(*this); }
  const MlpConfig& config() const { return cfg_; }

 protected:
  ad::NodeId record_raw(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                        std::span<const ad::NodeId> params) const override;

 private:
  MlpConfig cfg_;
};

// f(x) = x A + b, independent of t. A is [dim, dim] row-major, then b.
class LinearDenoiser final : public Denoiser {
 public:
  LinearDenoiser(const Tensor& a, const Tensor& b, MeanType mean_type = MeanType::predict_x);

  std::size_t dim() const override { return dim_; }
  std::string kind() const override { return "linear"; }
  std::vector<Shape> parameter_shapes() const override { return {Shape{dim_, dim_}, Shape{dim_}}; }
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<LinearDenoiser>(*this); }

 protected:
  ad::NodeId record_raw(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                        std::span<const ad::NodeId> params) const override;

 private:
  std::size_t dim_;
};

// Parameter-free denoiser given by a graph recipe; used for closed-form
// posterior means and test fixtures.
class AnalyticDenoiser final : public Denoiser {
 public:
  using Recipe = std::function<ad::NodeId(ad::Graph&, ad::NodeId, std::span<const int>, const DiffusionSchedule&)>;

  AnalyticDenoiser(std::size_t dim, std::string name, Recipe recipe, MeanType mean_type = MeanType::predict_x);

  std::size_t dim() const override { return dim_; }
  std::string kind() const override { return name_; }
  std::vector<Shape> parameter_shapes() const override { return {}; }
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<AnalyticDenoiser>(*this); }

 protected:
  ad::NodeId record_raw(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                        std::span<const ad::NodeId> params) const override;

 private:
  std::size_t dim_;
  std::string name_;
  Recipe recipe_;
};

// Concatenates per-node gradients into one flat vector.
std::vector<double> flatten(std::span<const Tensor> grads);

// [B, n] tensor whose row r is filled with per_row[r].
Tensor row_broadcast(std::span<const double> per_row, std::size_t cols);

// Posterior mean of xbar under an isotropic N(mean, var I) prior and the
// ideal marginal q*(xbar_t | xbar): linear shrinkage.
AnalyticDenoiser gaussian_posterior_denoiser(std::size_t dim, double prior_var, double prior_mean = 0.0);
// Posterior mean under two equiprobable deltas at +c and -c (c = (1, ..., 1)).
AnalyticDenoiser two_deltas_posterior_denoiser(std::size_t dim);
// Returns exactly `target` (a fixed vector) for every input.
AnalyticDenoiser constant_denoiser(std::vector<double> target);
AnalyticDenoiser zero_denoiser(std::size_t dim);

}  // namespace gsure
