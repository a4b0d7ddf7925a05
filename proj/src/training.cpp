#include "gsure/training.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <thread>

#include "gsure/error.hpp"

namespace gsure {

namespace {

void put(std::string& out, std::string_view key, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(key).append("=").append(buf, res.ptr).append(";");
}

void put(std::string& out, std::string_view key, long long v) {
  out.append(key).append("=").append(std::to_string(v)).append(";");
}

void put(std::string& out, std::string_view key, std::string_view v) {
  out.append(key).append("=").append(v).append(";");
}

std::string canonical(const MlpConfig& m) {
  std::string out;
  put(out, "dim", static_cast<long long>(m.dim));
  std::string widths;
  for (std::size_t h : m.hidden) widths += std::to_string(h) + ",";
  put(out, "hidden", widths);
  put(out, "embedding_dim", static_cast<long long>(m.embedding_dim));
  put(out, "mean_type", to_string(m.mean_type));
  put(out, "activation", static_cast<long long>(m.activation));
  put(out, "ema_decay", m.ema_decay);
  return out;
}

}  // namespace

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam: gradient and parameter sizes differ");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
  }
}

void TrainConfig::validate() const {
  if (!seed) throw ConfigError("train: a seed is required");
  if (iterations < 0) throw ConfigError("train: iterations must be non-negative");
  if (batch_size == 0 || chunk_size == 0 || threads == 0) throw ConfigError("train: batch, chunk and thread counts must be positive");
  if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
  if (!(adam.learning_rate > 0.0) || !(adam.epsilon > 0.0)) throw ConfigError("train: learning rate and epsilon must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: adam betas must be in [0, 1)");
  }
  if (schedule.T < 1) throw ConfigError("train: schedule needs T >= 1");
  loss.validate();
}

std::string TrainConfig::canonical() const {
  std::string out;
  put(out, "iterations", static_cast<long long>(iterations));
  put(out, "batch_size", static_cast<long long>(batch_size));
  put(out, "lr", adam.learning_rate);
  put(out, "beta1", adam.beta1);
  put(out, "beta2", adam.beta2);
  put(out, "eps", adam.epsilon);
  put(out, "seed", static_cast<long long>(seed.value_or(0)));
  put(out, "gamma", to_string(loss.gamma));
  put(out, "lambda", to_string(loss.lambda));
  put(out, "lambda_c", loss.lambda_c);
  put(out, "ybar", static_cast<long long>(loss.use_ybar_variant));
  put(out, "probes", static_cast<long long>(loss.probes));
  put(out, "probe", static_cast<long long>(loss.probe));
  put(out, "divergence", static_cast<long long>(loss.divergence));
  put(out, "fd_step", loss.fd_step);
  put(out, "T", static_cast<long long>(schedule.T));
  put(out, "beta_1", schedule.beta_1);
  put(out, "beta_T", schedule.beta_T);
  put(out, "oracle", static_cast<long long>(oracle_mode));
  put(out, "chunk", static_cast<long long>(chunk_size));
  put(out, "ema_warmup", static_cast<long long>(ema_warmup));
  // threads, log_every and timing do not affect the trajectory.
  return out;
}

double PrecomputedDataset::max_noise_var() const {
  double m = 0.0;
  for (const auto& r : records)
    for (double v : r.noise_var) m = std::max(m, v);
  return m;
}

PrecomputedDataset simulate_dataset(std::span<const std::vector<double>> clean, const MaskDistribution& masks,
                                    const OrthoTransform& vt, double singular, double sigma0, std::uint64_t seed) {
  if (masks.dim() != vt.dim()) throw ShapeError("simulate: mask family and transform dimensions differ");
  PrecomputedDataset d;
  d.vt = vt;
  d.w = weight_matrix(expected_projection(masks));
  d.records.reserve(clean.size());
  d.clean_bar.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean[i].size() != vt.dim()) throw ShapeError("simulate: signal dimension mismatch");
    Rng rng(Rng::derive(seed, i));
    const SpectralDegradation deg = sample_degradation(masks, vt, singular, sigma0, rng);
    d.records.push_back(corrupt(clean[i], deg, rng));
    d.clean_bar.push_back(vt.apply(clean[i]));
  }
  return d;
}

PrecomputedDataset precompute(std::span<const RawRecord> raw, std::uint64_t seed) {
  if (raw.empty()) throw DomainError("precompute: no records");
  PrecomputedDataset d;
  d.vt = raw.front().degradation.vt;
  std::vector<Mask> masks;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(raw[i].degradation.vt == d.vt)) throw DomainError("precompute: records use different V^T");
    Rng rng(Rng::derive(seed, i));
    d.records.push_back(corrupt(raw[i].x, raw[i].degradation, rng));
    d.clean_bar.push_back(d.vt.apply(raw[i].x));
    masks.push_back(d.records.back().mask);
  }
  d.w = weight_matrix(empirical_projection(masks));
  return d;
}

PrecomputedDataset ingest_dataset(OrthoTransform vt, std::vector<Measurement> records,
                                  std::optional<std::vector<double>> expected) {
  PrecomputedDataset d;
  d.vt = std::move(vt);
  std::vector<Mask> masks;
  for (const auto& r : records) {
    if (r.dim() != d.vt.dim() || r.ybar.size() != d.vt.dim() || r.noise_var.size() != d.vt.dim()) {
      throw ShapeError("ingest: record dimension does not match the transform");
    }
    masks.push_back(r.mask);
  }
  if (expected) {
    if (expected->size() != d.vt.dim()) throw ShapeError("ingest: E[P] dimension mismatch");
    d.w = weight_matrix(*expected);
  } else {
    d.w = weight_matrix(empirical_projection(masks));
  }
  d.records = std::move(records);
  return d;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t schedule_digest(const DiffusionSchedule& s) {
  std::string bytes(reinterpret_cast<const char*>(s.betas.data()), s.betas.size() * sizeof(double));
  return fnv1a64(bytes);
}

Checkpoint make_checkpoint(const Mlp& model, const DiffusionSchedule& s, std::uint64_t config_digest, long step) {
  Checkpoint c;
  c.model_kind = model.kind();
  c.model = model.config();
  c.config_digest = config_digest;
  c.schedule_digest = schedule_digest(s);
  c.step = step;
  c.params = model.params();
  c.ema = model.ema_params();
  return c;
}

Mlp restore_model(const Checkpoint& c) {
  if (c.model_kind != "mlp") throw FormatError("checkpoint: unsupported model kind '" + c.model_kind + "'");
  Mlp m(c.model, 0);
  if (c.params.size() != m.parameter_count() || c.ema.size() != m.parameter_count()) {
    throw FormatError("checkpoint: parameter count does not match the model description");
  }
  m.params() = c.params;
  m.ema_params() = c.ema;
  return m;
}

namespace {

struct ChunkResult {
  double loss = 0.0;
  double divergence = 0.0;
  std::vector<double> grad;
};

ChunkResult evaluate_chunk(const Mlp& model, const TrainConfig& cfg, const PrecomputedDataset& data,
                           const DiffusionSchedule& s, int t_min, std::span<const std::size_t> idx,
                           std::uint64_t chunk_seed, double share) {
  Rng rng(chunk_seed);
  std::vector<int> ts(idx.size());
  for (int& t : ts) t = static_cast<int>(rng.uniform_int(t_min, s.T));

  ad::Graph g;
  const auto params = model.bind_parameters(g);
  LossTerms terms;
  if (cfg.oracle_mode) {
    Tensor xt(Shape{idx.size(), data.dim()}), clean(Shape{idx.size(), data.dim()});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& xbar = data.clean_bar[idx[r]];
      const Tensor row = diffuse_clean(xbar, ts[r], s, rng);
      for (std::size_t j = 0; j < data.dim(); ++j) {
        xt.at(r, j) = row[j];
        clean.at(r, j) = xbar[j];
      }
    }
    terms = record_supervised_loss(g, model, params, xt, clean, ts, s, cfg.loss);
  } else {
    std::vector<const Measurement*> items;
    for (std::size_t i : idx) items.push_back(&data.records[i]);
    const GsureBatch batch = make_gsure_batch(items, ts, s, cfg.loss, rng);
    terms = record_gsure_loss(g, model, params, batch, data.w, s, cfg.loss, rng);
  }
  ChunkResult out;
  out.loss = share * g.forward().item();
  out.divergence = share * g.value(terms.divergence).item();
  out.grad = flatten(g.backward(Tensor::scalar(share)).params);
  return out;
}

}  // namespace

StepEvaluation evaluate_step(const Mlp& model, const TrainConfig& cfg, const PrecomputedDataset& data,
                             const DiffusionSchedule& s, int t_min, long step) {
  const std::uint64_t step_seed = Rng::derive(*cfg.seed, static_cast<std::uint64_t>(step));
  Rng pick(Rng::derive(step_seed, 0));
  std::vector<std::size_t> idx(cfg.batch_size);
  for (auto& i : idx) i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<long>(data.size()) - 1));

  const std::size_t chunks = (cfg.batch_size + cfg.chunk_size - 1) / cfg.chunk_size;
  std::vector<ChunkResult> results(chunks);
  std::vector<std::exception_ptr> errors(chunks);
  auto run = [&](std::size_t c) {
    try {
      const std::size_t lo = c * cfg.chunk_size, hi = std::min(cfg.batch_size, lo + cfg.chunk_size);
      const double share = static_cast<double>(hi - lo) / static_cast<double>(cfg.batch_size);
      results[c] = evaluate_chunk(model, cfg, data, s, t_min, std::span(idx).subspan(lo, hi - lo),
                                  Rng::derive(step_seed, 1 + c), share);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(cfg.threads, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Fixed-order reduction.
  StepEvaluation out;
  out.grad.assign(model.parameter_count(), 0.0);
  for (const auto& r : results) {
    out.loss += r.loss;
    out.divergence += r.divergence;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += r.grad[i];
  }
  return out;
}

TrainResult train(Mlp& model, const TrainConfig& cfg, const PrecomputedDataset& data,
                  const std::function<void(const MetricsRow&)>& on_metrics) {
  cfg.validate();
  if (data.size() == 0 && cfg.iterations > 0) throw DomainError("train: empty dataset");
  if (data.dim() != model.dim()) throw ShapeError("train: model and data dimensions differ");
  if (cfg.oracle_mode && data.clean_bar.size() != data.size()) {
    throw DomainError("train: oracle mode needs clean signals");
  }
  const DiffusionSchedule s = cfg.schedule.build();
  TrainResult result;
  result.t_min = cfg.oracle_mode ? 1 : check_psd_feasibility(s, std::vector<double>{data.max_noise_var()});

  const std::uint64_t digest = fnv1a64(cfg.canonical() + canonical(model.config()));
  AdamState adam;
  const double decay = model.ema_decay();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  for (long k = 1; k <= cfg.iterations; ++k) {
    StepEvaluation ev;
    try {
      ev = evaluate_step(model, cfg, data, s, result.t_min, k);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(std::string("training diverged: ") + e.what(), k);
    }
    double norm2 = 0.0;
    for (double gi : ev.grad) norm2 += gi * gi;
    if (!std::isfinite(ev.loss) || !std::isfinite(norm2)) throw DivergenceError("training diverged: non-finite loss or gradient", k);

    adam_step(model.params(), ev.grad, adam, cfg.adam);
    if (cfg.ema_warmup) {
      model.set_ema_decay(std::min(decay, (1.0 + static_cast<double>(k)) / (10.0 + static_cast<double>(k))));
    }
    model.ema_update();
    model.set_ema_decay(decay);

    if (k % cfg.log_every == 0) {
      MetricsRow row{k, ev.loss, ev.divergence, std::sqrt(norm2), 0.0};
      if (cfg.record_wall_time) {
        row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
      }
      result.metrics.push_back(row);
      if (on_metrics) on_metrics(row);
    }
  }
  result.checkpoint = make_checkpoint(model, s, digest, cfg.iterations);
  return result;
}

}  // namespace gsure
