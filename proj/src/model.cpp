#include "gsure/model.hpp"

#include <cmath>

#include "gsure/error.hpp"

namespace gsure {

std::string to_string(MeanType m) {
  return m == MeanType::predict_x ? "predict_x" : "predict_epsilon";
}

MeanType mean_type_from_string(const std::string& s) {
  if (s == "predict_x") return MeanType::predict_x;
  if (s == "predict_epsilon") return MeanType::predict_epsilon;
  throw ConfigError("unknown mean type '" + s + "'");
}

std::vector<double> time_embedding(int t, std::size_t dim) {
  std::vector<double> e(dim);
  const std::size_t half = dim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double w = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    e[k] = std::sin(static_cast<double>(t) * w);
    e[half + k] = std::cos(static_cast<double>(t) * w);
  }
  if (dim % 2 == 1) e[dim - 1] = static_cast<double>(t) / 1000.0;
  return e;
}

Tensor row_broadcast(std::span<const double> per_row, std::size_t cols) {
  Tensor out(Shape{per_row.size(), cols});
  for (std::size_t r = 0; r < per_row.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = per_row[r];
  }
  return out;
}

std::vector<double> flatten(std::span<const Tensor> grads) {
  std::vector<double> out;
  for (const Tensor& g : grads) out.insert(out.end(), g.storage().begin(), g.storage().end());
  return out;
}

std::vector<ad::NodeId> Denoiser::bind_parameters(ad::Graph& g, Weights which) const {
  const std::vector<double>& flat = which == Weights::live ? params_ : ema_;
  std::vector<ad::NodeId> nodes;
  std::size_t off = 0;
  for (const Shape& shape : parameter_shapes()) {
    const std::size_t n = shape_size(shape);
    if (off + n > flat.size()) throw ShapeError(kind() + ": parameter vector is too short");
    nodes.push_back(g.parameter(Tensor(shape, std::vector<double>(flat.begin() + static_cast<long>(off),
                                                                  flat.begin() + static_cast<long>(off + n)))));
    off += n;
  }
  if (off != flat.size()) throw ShapeError(kind() + ": parameter vector has the wrong length");
  return nodes;
}

ad::NodeId Denoiser::denoise(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                             Weights which) const {
  const std::vector<ad::NodeId> params = bind_parameters(g, which);
  return denoise(g, x, t, s, params);
}

ad::NodeId Denoiser::denoise(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                             std::span<const ad::NodeId> params) const {
  const Shape& xs = g.shape(x);
  if (xs.size() != 2 || xs[1] != dim()) {
    throw ShapeError("denoiser expects [B, " + std::to_string(dim()) + "], got " + shape_string(xs));
  }
  if (t.size() != xs[0]) throw ShapeError("denoiser: one timestep per row required");
  for (int ti : t) s.check_t(ti);
  const ad::NodeId raw = record_raw(g, x, t, s, params);
  if (mean_type_ == MeanType::predict_x) return raw;
  // x0 = (x_t - sqrt(1 - abar) eps) / sqrt(abar)
  std::vector<double> inv_sa(t.size()), ratio(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double ab = s.alpha_bar(t[r]);
    inv_sa[r] = 1.0 / std::sqrt(ab);
    ratio[r] = -std::sqrt(1.0 - ab) / std::sqrt(ab);
  }
  const ad::NodeId a = g.mul_const(x, row_broadcast(inv_sa, dim()));
  const ad::NodeId b = g.mul_const(raw, row_broadcast(ratio, dim()));
  return g.add(a, b);
}

Tensor Denoiser::predict(const Tensor& x, std::span<const int> t, const DiffusionSchedule& s, Weights which) const {
  ad::Graph g;
  const ad::NodeId in = g.input(x);
  g.set_output(denoise(g, in, t, s, which));
  return g.forward();
}

Tensor Denoiser::predict(const Tensor& x, int t, const DiffusionSchedule& s, Weights which) const {
  const std::vector<int> ts(x.rank() == 2 ? x.rows() : 0, t);
  return predict(x, ts, s, which);
}

void Denoiser::set_ema_decay(double d) {
  if (!(d >= 0.0 && d <= 1.0)) throw DomainError("ema decay must be in [0, 1]");
  ema_decay_ = d;
}

void Denoiser::ema_update() {
  const double d = ema_decay_;
  for (std::size_t i = 0; i < params_.size(); ++i) ema_[i] = d * ema_[i] + (1.0 - d) * params_[i];
}

// ---------------------------------------------------------------------------

Mlp::Mlp(MlpConfig cfg, std::uint64_t seed) : Denoiser(cfg.mean_type, cfg.ema_decay), cfg_(std::move(cfg)) {
  if (cfg_.dim == 0 || cfg_.hidden.empty()) throw ConfigError("mlp: needs a positive dimension and hidden layers");
  for (std::size_t h : cfg_.hidden) {
    if (h == 0) throw ConfigError("mlp: hidden widths must be positive");
  }
  set_ema_decay(cfg_.ema_decay);
  Rng rng(seed);
  auto fill = [&](std::size_t fan_in, std::size_t count, double gain) {
    const double sd = gain / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) params_.push_back(sd * rng.normal());
  };
  const std::size_t h0 = cfg_.hidden.front();
  const std::size_t fan0 = cfg_.dim + cfg_.embedding_dim;
  fill(fan0, cfg_.dim * h0, 1.0);
  if (cfg_.embedding_dim > 0) fill(fan0, cfg_.embedding_dim * h0, 1.0);
  params_.insert(params_.end(), h0, 0.0);
  for (std::size_t l = 1; l < cfg_.hidden.size(); ++l) {
    fill(cfg_.hidden[l - 1], cfg_.hidden[l - 1] * cfg_.hidden[l], 1.0);
    params_.insert(params_.end(), cfg_.hidden[l], 0.0);
  }
  fill(cfg_.hidden.back(), cfg_.hidden.back() * cfg_.dim, 1.0);
  params_.insert(params_.end(), cfg_.dim, 0.0);
  ema_ = params_;
}

std::vector<Shape> Mlp::parameter_shapes() const {
  std::vector<Shape> shapes;
  const std::size_t h0 = cfg_.hidden.front();
  shapes.push_back(Shape{cfg_.dim, h0});
  if (cfg_.embedding_dim > 0) shapes.push_back(Shape{cfg_.embedding_dim, h0});
  shapes.push_back(Shape{h0});
  for (std::size_t l = 1; l < cfg_.hidden.size(); ++l) {
    shapes.push_back(Shape{cfg_.hidden[l - 1], cfg_.hidden[l]});
    shapes.push_back(Shape{cfg_.hidden[l]});
  }
  shapes.push_back(Shape{cfg_.hidden.back(), cfg_.dim});
  shapes.push_back(Shape{cfg_.dim});
  return shapes;
}

ad::NodeId Mlp::record_raw(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule&,
                           std::span<const ad::NodeId> params) const {
  std::size_t k = 0;
  auto next = [&] { return params[k++]; };
  const std::size_t e = cfg_.embedding_dim;
  const ad::NodeId wx = next();
  ad::NodeId h;
  if (e > 0) {
    const ad::NodeId we = next();
    const ad::NodeId b0 = next();
    Tensor emb(Shape{t.size(), e});
    for (std::size_t r = 0; r < t.size(); ++r) {
      const std::vector<double> v = time_embedding(t[r], e);
      std::copy(v.begin(), v.end(), emb.row(r).begin());
    }
    h = g.add(g.affine(x, wx, b0), g.matmul(g.constant(std::move(emb)), we));
  } else {
    h = g.affine(x, wx, next());
  }
  h = g.activation(h, cfg_.activation);
  for (std::size_t l = 1; l < cfg_.hidden.size(); ++l) {
    const ad::NodeId w = next();
    const ad::NodeId b = next();
    h = g.activation(g.affine(h, w, b), cfg_.activation);
  }
  const ad::NodeId w = next();
  const ad::NodeId b = next();
  return g.affine(h, w, b);
}

// ---------------------------------------------------------------------------

LinearDenoiser::LinearDenoiser(const Tensor& a, const Tensor& b, MeanType mean_type)
    : Denoiser(mean_type, 0.9999), dim_(b.size()) {
  if (a.rank() != 2 || a.rows() != dim_ || a.cols() != dim_) throw ShapeError("linear denoiser: A must be [n, n]");
  params_.assign(a.storage().begin(), a.storage().end());
  params_.insert(params_.end(), b.storage().begin(), b.storage().end());
  ema_ = params_;
}

ad::NodeId LinearDenoiser::record_raw(ad::Graph& g, ad::NodeId x, std::span<const int>, const DiffusionSchedule&,
                                      std::span<const ad::NodeId> params) const {
  return g.affine(x, params[0], params[1]);
}

// ---------------------------------------------------------------------------

AnalyticDenoiser::AnalyticDenoiser(std::size_t dim, std::string name, Recipe recipe, MeanType mean_type)
    : Denoiser(mean_type, 0.0), dim_(dim), name_(std::move(name)), recipe_(std::move(recipe)) {}

ad::NodeId AnalyticDenoiser::record_raw(ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s,
                                        std::span<const ad::NodeId>) const {
  return recipe_(g, x, t, s);
}

AnalyticDenoiser gaussian_posterior_denoiser(std::size_t dim, double prior_var, double prior_mean) {
  // E[x | x_t] = m + v sqrt(ab) (x_t - sqrt(ab) m) / (ab v + 1 - ab)
  return AnalyticDenoiser(dim, "gaussian-posterior",
                          [dim, prior_var, prior_mean](ad::Graph& g, ad::NodeId x, std::span<const int> t,
                                                       const DiffusionSchedule& s) {
                            std::vector<double> gain(t.size()), shift(t.size());
                            for (std::size_t r = 0; r < t.size(); ++r) {
                              const double ab = s.alpha_bar(t[r]);
                              const double sa = std::sqrt(ab);
                              gain[r] = prior_var * sa / (ab * prior_var + 1.0 - ab);
                              shift[r] = prior_mean - gain[r] * sa * prior_mean;
                            }
                            const ad::NodeId scaled = g.mul_const(x, row_broadcast(gain, dim));
                            return g.add(scaled, g.constant(row_broadcast(shift, dim)));
                          });
}

AnalyticDenoiser two_deltas_posterior_denoiser(std::size_t dim) {
  // P(x = +c | x_t) - P(x = -c | x_t) = tanh(sqrt(ab) <1, x_t> / (1 - ab)).
  return AnalyticDenoiser(dim, "two-deltas-posterior",
                          [dim](ad::Graph& g, ad::NodeId x, std::span<const int> t, const DiffusionSchedule& s) {
                            std::vector<double> k(t.size());
                            for (std::size_t r = 0; r < t.size(); ++r) {
                              const double ab = s.alpha_bar(t[r]);
                              k[r] = std::sqrt(ab) / (1.0 - ab);
                            }
                            const ad::NodeId ones_in = g.constant(Tensor(Shape{dim, 1}, 1.0));
                            const ad::NodeId ones_out = g.constant(Tensor(Shape{1, dim}, 1.0));
                            const ad::NodeId proj = g.mul_const(g.matmul(x, ones_in), row_broadcast(k, 1));
                            return g.matmul(g.activation(proj, ad::Activation::tanh), ones_out);
                          });
}

AnalyticDenoiser constant_denoiser(std::vector<double> target) {
  const std::size_t dim = target.size();
  return AnalyticDenoiser(dim, "constant",
                          [target = std::move(target)](ad::Graph& g, ad::NodeId x, std::span<const int> t,
                                                       const DiffusionSchedule&) {
                            Tensor c(Shape{t.size(), target.size()});
                            for (std::size_t r = 0; r < t.size(); ++r) std::copy(target.begin(), target.end(), c.row(r).begin());
                            // 0 * x keeps the output attached to the input node.
                            return g.add(g.scale(x, 0.0), g.constant(std::move(c)));
                          });
}

AnalyticDenoiser zero_denoiser(std::size_t dim) { return constant_denoiser(std::vector<double>(dim, 0.0)); }

}  // namespace gsure
