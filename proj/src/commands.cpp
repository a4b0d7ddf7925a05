#include "gsure/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "gsure/datasets.hpp"
#include "gsure/error.hpp"
#include "gsure/io.hpp"
#include "gsure/sampling.hpp"

namespace gsure::commands {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

Tensor rows_to_tensor(std::span<const std::vector<double>> rows, std::size_t dim) {
  Tensor out(Shape{rows.size(), dim});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != dim) throw ShapeError("row dimension mismatch");
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::vector<double>> tensor_to_rows(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected a [count, dim] array");
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r].assign(t.row(r).begin(), t.row(r).end());
  return out;
}

std::string digest_hex(const ExperimentConfig& c) { return io::hex64(config_digest(c)); }

void write_json(const fs::path& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

json sidecar(const ExperimentConfig& c, const std::string& kind) {
  json j;
  j["format"] = kind;
  j["version"] = kSidecarVersion;
  j["config_digest"] = digest_hex(c);
  return j;
}

double max_noise_var(const ExperimentConfig& c) {
  const double s = c.degradation.singular;
  return c.degradation.sigma0 * c.degradation.sigma0 / (s * s);
}

int feasible_t(const ExperimentConfig& c, const DiffusionSchedule& s) {
  return check_psd_feasibility(s, std::vector<double>{max_noise_var(c)});
}

std::vector<int> strided_ts(int t_min, int T, int stride) {
  std::vector<int> ts;
  for (int t = t_min; t <= T; t += stride) ts.push_back(t);
  if (ts.empty() || ts.back() != T) ts.push_back(T);
  return ts;
}

std::string csv_join(std::initializer_list<std::string> cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ",";
    out += c;
  }
  return out + "\n";
}

}  // namespace

std::vector<std::vector<double>> generate_clean(const ExperimentConfig& c, std::size_t count, std::uint64_t stream) {
  Rng rng(Rng::derive(c.data.seed, 2 * stream));
  const auto& d = c.data;
  std::vector<std::vector<double>> out;
  if (d.kind == "two-deltas") {
    out = two_deltas(count, rng, d.dim);
  } else if (d.kind == "isotropic-gaussian") {
    out = isotropic_gaussian(count, d.dim, rng, d.variance);
  } else if (d.kind == "synthetic-shapes") {
    out = synthetic_shapes(count, d.height, d.width, rng);
    if (d.complex) {
      for (auto& x : out) x.resize(2 * d.height * d.width, 0.0);
    }
  } else {
    const Tensor all = io::read_array(d.path);
    if (all.rank() != 2 || all.cols() != d.dim) throw ShapeError("external data must be a [count, data.dim] array");
    if (stream != 0) throw DomainError("external data has no held-out stream; provide eval.heldout_file");
    out = tensor_to_rows(all);
    if (count < out.size()) out.resize(count);
  }
  return out;
}

PrecomputedDataset build_dataset(const ExperimentConfig& c) {
  const OrthoTransform vt = build_transform(c);
  const MaskDistribution masks = build_masks(c);
  if (c.io.dataset_dir.empty()) {
    const auto clean = generate_clean(c, c.data.count);
    return simulate_dataset(clean, masks, vt, c.degradation.singular, c.degradation.sigma0, Rng::derive(c.data.seed, 1));
  }
  const fs::path dir = c.io.dataset_dir;
  const Tensor ybar = io::read_array(dir / "ybar.bin");
  const Tensor mask = io::read_array(dir / "mask.bin");
  const Tensor noise = io::read_array(dir / "noise_var.bin");
  if (ybar.rank() != 2 || ybar.shape() != mask.shape() || ybar.shape() != noise.shape() || ybar.cols() != vt.dim()) {
    throw ShapeError("dataset arrays must share the shape [count, dim] of the configured signals");
  }
  std::vector<Measurement> records;
  for (std::size_t r = 0; r < ybar.rows(); ++r) {
    Measurement m;
    m.ybar = Tensor(Shape{vt.dim()}, std::vector<double>(ybar.row(r).begin(), ybar.row(r).end()));
    for (double v : mask.row(r)) {
      if (v != 0.0 && v != 1.0) throw FormatError("mask entries must be 0 or 1");
      m.mask.push_back(v == 1.0 ? 1 : 0);
    }
    m.noise_var.assign(noise.row(r).begin(), noise.row(r).end());
    m.sigma0 = c.degradation.sigma0;
    records.push_back(std::move(m));
  }
  PrecomputedDataset data = ingest_dataset(vt, std::move(records), expected_projection(masks));
  if (fs::exists(dir / "clean.bin")) {
    const Tensor clean = io::read_array(dir / "clean.bin");
    if (clean.shape() != ybar.shape()) throw ShapeError("clean.bin does not match ybar.bin");
    for (std::size_t r = 0; r < clean.rows(); ++r) data.clean_bar.push_back(vt.apply(clean.row(r)));
  }
  return data;
}

GenDataSummary gen_data(const ExperimentConfig& c, const fs::path& out) {
  const auto clean = generate_clean(c, c.data.count);
  const OrthoTransform vt = build_transform(c);
  const PrecomputedDataset data =
      simulate_dataset(clean, build_masks(c), vt, c.degradation.singular, c.degradation.sigma0, Rng::derive(c.data.seed, 1));
  const std::size_t n = c.data.signal_dim();
  Tensor ybar(Shape{data.size(), n}), mask(Shape{data.size(), n}), noise(Shape{data.size(), n});
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& m = data.records[r];
    for (std::size_t j = 0; j < n; ++j) {
      ybar.at(r, j) = m.ybar[j];
      mask.at(r, j) = m.mask[j];
      noise.at(r, j) = m.noise_var[j];
    }
  }
  io::write_array(out / "clean.bin", rows_to_tensor(clean, n));
  io::write_array(out / "ybar.bin", ybar);
  io::write_array(out / "mask.bin", mask);
  io::write_array(out / "noise_var.bin", noise);
  io::write_array(out / "weights.bin", Tensor(Shape{n}, data.w));

  GenDataSummary summary{data.size(), n, feasible_t(c, c.train.schedule.build())};
  json j = sidecar(c, "gsure-dataset");
  j["count"] = summary.count;
  j["shape"] = {summary.count, n};
  j["data_kind"] = c.data.kind;
  j["transform"] = c.degradation.transform;
  j["masks"] = build_masks(c).kind_name();
  j["sigma0"] = c.degradation.sigma0;
  j["singular"] = c.degradation.singular;
  j["seed"] = c.data.seed;
  j["t_min"] = summary.t_min;
  j["files"] = {"clean.bin", "ybar.bin", "mask.bin", "noise_var.bin", "weights.bin"};
  write_json(out / "dataset.json", j);
  return summary;
}

TrainSummary train(const ExperimentConfig& c, const fs::path& out, std::optional<fs::path> checkpoint_path) {
  if (!c.train.seed) throw ConfigError("train: a seed is required (train.seed or --seed)");
  const PrecomputedDataset data = build_dataset(c);
  MlpConfig mc = c.model;
  mc.dim = data.dim();
  Mlp model(mc, Rng::derive(*c.train.seed, 0));
  TrainResult r = gsure::train(model, c.train, data);

  TrainSummary s;
  s.checkpoint = std::move(r.checkpoint);
  s.metrics = std::move(r.metrics);
  s.t_min = r.t_min;
  s.checkpoint_path = checkpoint_path.value_or(out / "checkpoint.ckpt");
  io::write_checkpoint(s.checkpoint_path, s.checkpoint);
  io::write_metrics_csv(out / "metrics.csv", s.metrics);
  json j = sidecar(c, "gsure-train");
  j["training_digest"] = io::hex64(s.checkpoint.config_digest);
  j["schedule_digest"] = io::hex64(s.checkpoint.schedule_digest);
  j["steps"] = s.checkpoint.step;
  j["t_min"] = s.t_min;
  j["oracle_mode"] = c.train.oracle_mode;
  j["parameters"] = s.checkpoint.params.size();
  j["records"] = data.size();
  j["final_loss"] = s.metrics.empty() ? json(nullptr) : json(io::format_double(s.metrics.back().loss));
  write_json(out / "train.json", j);
  return s;
}

Mlp load_model(const ExperimentConfig& c, const fs::path& checkpoint) {
  const DiffusionSchedule s = c.train.schedule.build();
  const Checkpoint ck = io::read_checkpoint(checkpoint, std::nullopt, schedule_digest(s));
  if (ck.model.dim != c.data.signal_dim()) {
    throw ShapeError("checkpoint model dimension " + std::to_string(ck.model.dim) + " does not match the data (" +
                     std::to_string(c.data.signal_dim()) + ")");
  }
  return restore_model(ck);
}

Tensor sample(const ExperimentConfig& c, const fs::path& checkpoint, const fs::path& out) {
  const Mlp model = load_model(c, checkpoint);
  const DiffusionSchedule s = c.train.schedule.build();
  const OrthoTransform vt = build_transform(c);
  const int t_min = feasible_t(c, s);
  Rng rng(c.sample.seed);
  Tensor x;
  if (c.sample.sampler == "ddpm") {
    x = ddpm_sample(model, s, c.sample.count, rng, vt, t_min, c.sample.weights);
  } else {
    SamplerConfig sc;
    sc.steps = c.sample.steps;
    sc.eta = c.sample.eta;
    sc.t_min = t_min;
    sc.weights = c.sample.weights;
    x = ddim_sample(model, s, sc, c.sample.count, rng, vt);
  }
  io::write_array(out / "samples.bin", x);
  json j = sidecar(c, "gsure-samples");
  j["sampler"] = c.sample.sampler;
  j["steps"] = c.sample.sampler == "ddpm" ? s.T - t_min + 1 : c.sample.steps;
  j["eta"] = c.sample.eta;
  j["count"] = c.sample.count;
  j["seed"] = c.sample.seed;
  j["t_min"] = t_min;
  j["shape"] = x.shape();
  j["checkpoint_digest"] = io::hex64(fnv1a64(io::read_file(checkpoint)));
  write_json(out / "samples.json", j);
  return x;
}

ReconstructSummary acceleration_sweep(const Denoiser& model, const ExperimentConfig& c,
                                      std::span<const std::vector<double>> clean) {
  if (c.degradation.family != "lines") throw ConfigError("acceleration sweep needs the lines degradation family");
  const DiffusionSchedule s = c.train.schedule.build();
  const OrthoTransform vt = build_transform(c);
  const std::size_t h = c.data.height, w = c.data.width;
  ReconstructSummary out;
  out.accelerations = c.reconstruct.r_sweep;
  std::sort(out.accelerations.begin(), out.accelerations.end());
  out.residual_norms.assign(out.accelerations.size(), 0.0);
  SamplerConfig sc;
  sc.steps = c.reconstruct.steps;
  sc.t_min = feasible_t(c, s);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Rng mask_rng(Rng::derive(c.reconstruct.seed, 3 * i));
    const auto lines = sample_nested_line_masks(w, out.accelerations, mask_rng);
    for (std::size_t k = 0; k < lines.size(); ++k) {
      const Mask m = expand_line_mask(lines[k], h);
      std::vector<double> sing(m.size());
      for (std::size_t j = 0; j < m.size(); ++j) sing[j] = m[j] ? c.degradation.singular : 0.0;
      Rng noise_rng(Rng::derive(c.reconstruct.seed, 3 * i + 1));
      const Measurement meas = corrupt(clean[i], SpectralDegradation(vt, sing, c.degradation.sigma0), noise_rng);
      Rng sampler_rng(Rng::derive(c.reconstruct.seed, 3 * i + 2));
      const auto rec = reconstruct(model, s, meas, sc, sampler_rng, vt);
      double sq = 0.0;
      for (std::size_t j = 0; j < rec.size(); ++j) {
        if (!std::isfinite(rec[j])) out.all_finite = false;
        sq += (rec[j] - clean[i][j]) * (rec[j] - clean[i][j]);
      }
      out.residual_norms[k] += std::sqrt(sq) / static_cast<double>(clean.size());
    }
  }
  return out;
}

ReconstructSummary reconstruct(const ExperimentConfig& c, const fs::path& checkpoint, const fs::path& out) {
  const Mlp model = load_model(c, checkpoint);
  const DiffusionSchedule s = c.train.schedule.build();
  const OrthoTransform vt = build_transform(c);
  const PrecomputedDataset data = build_dataset(c);
  const std::size_t count = std::min(c.reconstruct.count, data.size());
  const std::size_t n = vt.dim();

  ReconstructSummary summary;
  summary.reconstructions = Tensor(Shape{count, n});
  summary.zero_filled = Tensor(Shape{count, n});
  SamplerConfig sc;
  sc.steps = c.reconstruct.steps;
  for (std::size_t i = 0; i < count; ++i) {
    const Measurement& m = data.records[i];
    sc.t_min = check_psd_feasibility(s, m);
    Rng rng(Rng::derive(c.reconstruct.seed, i));
    const auto rec = reconstruct(model, s, m, sc, rng, vt);
    const auto zf = zero_filled(m, vt);
    for (std::size_t j = 0; j < n; ++j) {
      summary.reconstructions.at(i, j) = rec[j];
      summary.zero_filled.at(i, j) = zf[j];
      if (!std::isfinite(rec[j])) summary.all_finite = false;
    }
  }
  io::write_array(out / "recon.bin", summary.reconstructions);
  io::write_array(out / "zero_filled.bin", summary.zero_filled);

  json j = sidecar(c, "gsure-reconstruct");
  j["count"] = count;
  j["steps"] = c.reconstruct.steps;
  j["seed"] = c.reconstruct.seed;
  j["files"] = {"recon.bin", "zero_filled.bin"};

  if (count > 0 && c.reconstruct.uncertainty_runs >= 2) {
    sc.t_min = check_psd_feasibility(s, data.records[0]);
    const UncertaintyMap u =
        uncertainty_map(model, s, data.records[0], vt, sc, Rng::derive(c.reconstruct.seed, 1u << 20),
                        c.reconstruct.uncertainty_runs);
    Tensor um(Shape{2, n});
    std::copy(u.mean.begin(), u.mean.end(), um.row(0).begin());
    std::copy(u.stddev.begin(), u.stddev.end(), um.row(1).begin());
    io::write_array(out / "uncertainty.bin", um);
    j["files"].push_back("uncertainty.bin");
  }

  if (c.degradation.family == "lines" && !c.reconstruct.r_sweep.empty() && count > 0) {
    const auto clean = generate_clean(c, count);
    const ReconstructSummary sweep = acceleration_sweep(model, c, clean);
    summary.accelerations = sweep.accelerations;
    summary.residual_norms = sweep.residual_norms;
    summary.all_finite = summary.all_finite && sweep.all_finite;
    std::string csv = "acceleration,residual_norm\n";
    for (std::size_t k = 0; k < sweep.accelerations.size(); ++k) {
      csv += std::to_string(sweep.accelerations[k]) + "," + io::format_double(sweep.residual_norms[k]) + "\n";
    }
    io::write_file(out / "r_sweep.csv", csv);
    j["files"].push_back("r_sweep.csv");
  }
  j["all_finite"] = summary.all_finite;
  write_json(out / "reconstruct.json", j);
  return summary;
}

std::vector<std::string> evaluate(const ExperimentConfig& c, std::optional<fs::path> checkpoint, const fs::path& out) {
  const DiffusionSchedule s = c.train.schedule.build();
  const OrthoTransform vt = build_transform(c);
  std::vector<std::string> written;
  auto need_model = [&]() {
    if (!checkpoint) throw ConfigError("this evaluation needs --checkpoint");
    return load_model(c, *checkpoint);
  };
  auto heldout = [&]() {
    if (!c.eval.heldout_file.empty()) return tensor_to_rows(io::read_array(c.eval.heldout_file));
    return generate_clean(c, c.eval.samples, 1);
  };

  for (const auto& op : c.eval.operations) {
    Rng rng(Rng::derive(c.eval.seed, fnv1a64(op)));
    if (op == "mse-sweep" || op == "psnr") {
      const Mlp a = need_model();
      if (c.eval.reference_checkpoint.empty()) throw ConfigError(op + " needs eval.reference_checkpoint");
      const Mlp b = load_model(c, c.eval.reference_checkpoint);
      const auto clean = heldout();
      const auto ts = strided_ts(feasible_t(c, s), s.T, c.eval.t_stride);
      std::string csv;
      if (op == "mse-sweep") {
        const SweepResult r = denoising_mse_sweep(a, b, clean, vt, s, ts, rng, Weights::ema, c.data.kind);
        csv = "t,mse_a,mse_b\n";
        for (const auto& row : r.rows) {
          csv += csv_join({std::to_string(row.t), io::format_double(row.mse_a), io::format_double(row.mse_b)});
        }
        io::write_file(out / "mse_sweep.csv", csv);
        written.push_back("mse_sweep.csv");
      } else {
        const auto rows = generalization_psnr(a, b, clean, vt, s, ts, rng, c.eval.data_range);
        csv = "t,psnr\n";
        for (const auto& row : rows) csv += csv_join({std::to_string(row.t), io::format_double(row.psnr)});
        io::write_file(out / "psnr.csv", csv);
        written.push_back("psnr.csv");
      }
    } else if (op == "independence-demo") {
      std::string csv = "prior,t,snr,statistic,null_mean,null_sd,p_value,significant\n";
      for (DemoPrior prior : {DemoPrior::isotropic_gaussian, DemoPrior::two_deltas}) {
        const AnalyticDenoiser model = prior == DemoPrior::two_deltas ? two_deltas_posterior_denoiser(2)
                                                                      : gaussian_posterior_denoiser(2, 1.0);
        const auto res = independence_demo(prior, model, s, c.eval.snr_levels, c.eval.samples, rng,
                                           c.degradation.sigma0, c.eval.shuffles);
        for (const auto& r : res) {
          csv += csv_join({prior == DemoPrior::two_deltas ? "two-deltas" : "isotropic-gaussian", std::to_string(r.t),
                           io::format_double(r.snr), io::format_double(r.test.statistic),
                           io::format_double(r.test.null_mean), io::format_double(r.test.null_sd),
                           io::format_double(r.test.p_value), r.test.significant() ? "1" : "0"});
        }
      }
      io::write_file(out / "independence.csv", csv);
      written.push_back("independence.csv");
    } else if (op == "distance") {
      if (c.eval.samples_file.empty()) throw ConfigError("distance needs eval.samples_file");
      const Tensor a = io::read_array(c.eval.samples_file);
      const auto ref = heldout();
      const Tensor b = rows_to_tensor(ref, a.cols());
      const DistributionDistance d = distribution_distance(a, b, c.eval.projections, rng);
      std::string csv = "sliced_w2,mean_gap,cov_gap,energy_distance\n";
      csv += csv_join({io::format_double(d.sliced_w2), io::format_double(d.mean_gap), io::format_double(d.cov_gap),
                       io::format_double(energy_distance(a, b))});
      io::write_file(out / "distance.csv", csv);
      written.push_back("distance.csv");
    } else if (op == "cca") {
      // Linear CCA between denoising errors and masks of freshly simulated
      // measurements, per timestep.
      const Mlp model = need_model();
      const auto clean = heldout();
      const MaskDistribution masks = build_masks(c);
      const auto ts = strided_ts(feasible_t(c, s), s.T, c.eval.t_stride);
      const std::size_t n = vt.dim();
      std::string csv = "t,rho1\n";
      for (int t : ts) {
        Tensor xt(Shape{clean.size(), n}), err(Shape{clean.size(), n}), mk(Shape{clean.size(), n});
        std::vector<std::vector<double>> xbars;
        for (std::size_t i = 0; i < clean.size(); ++i) {
          const SpectralDegradation deg = sample_degradation(masks, vt, c.degradation.singular, c.degradation.sigma0, rng);
          const Measurement m = corrupt(clean[i], deg, rng);
          const Tensor row = perturb(m, t, s, rng);
          std::copy(row.data().begin(), row.data().end(), xt.row(i).begin());
          for (std::size_t j = 0; j < n; ++j) mk.at(i, j) = m.mask[j];
          xbars.push_back(vt.apply(clean[i]));
        }
        const Tensor f = model.predict(xt, t, s, Weights::ema);
        for (std::size_t i = 0; i < clean.size(); ++i)
          for (std::size_t j = 0; j < n; ++j) err.at(i, j) = f.at(i, j) - xbars[i][j];
        const auto rho = linear_cca(err, mk);
        csv += csv_join({std::to_string(t), io::format_double(rho.empty() ? 0.0 : rho.front())});
      }
      io::write_file(out / "cca.csv", csv);
      written.push_back("cca.csv");
    }
  }
  json j = sidecar(c, "gsure-eval");
  j["reports"] = written;
  j["seed"] = c.eval.seed;
  write_json(out / "eval.json", j);
  return written;
}

std::string inspect(const fs::path& path, const std::optional<PgmRequest>& pgm) {
  const std::string bytes = io::read_file(path);
  json j;
  if (bytes.rfind("GSURE-ARRAY", 0) == 0) {
    const Tensor t = io::decode_array(bytes);
    j["type"] = "array";
    j["shape"] = t.shape();
    if (t.size() > 0) {
      const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
      double sum = 0.0;
      bool finite = true;
      for (double v : t.data()) {
        sum += v;
        finite = finite && std::isfinite(v);
      }
      j["min"] = io::format_double(*lo);
      j["max"] = io::format_double(*hi);
      j["mean"] = io::format_double(sum / static_cast<double>(t.size()));
      j["finite"] = finite;
    }
    if (pgm) {
      if (t.rank() != 2 || pgm->index >= t.rows()) throw ShapeError("pgm: row index out of range");
      const std::size_t hw = pgm->height * pgm->width;
      const auto row = t.row(pgm->index);
      if (row.size() != hw && row.size() != 2 * hw) throw ShapeError("pgm: row size does not match height x width");
      io::write_pgm(pgm->out, row.subspan(0, hw), pgm->height, pgm->width, pgm->lo, pgm->hi);
      j["pgm"] = pgm->out.string();
    }
  } else if (bytes.rfind("GSURE-CKPT", 0) == 0) {
    const Checkpoint c = io::decode_checkpoint(bytes);
    j["type"] = "checkpoint";
    j["model_kind"] = c.model_kind;
    j["dim"] = c.model.dim;
    j["hidden"] = c.model.hidden;
    j["embedding_dim"] = c.model.embedding_dim;
    j["mean_type"] = to_string(c.model.mean_type);
    j["step"] = c.step;
    j["parameters"] = c.params.size();
    j["training_digest"] = io::hex64(c.config_digest);
    j["schedule_digest"] = io::hex64(c.schedule_digest);
  } else {
    const ExperimentConfig c = parse_config(bytes);
    j["type"] = "config";
    j["config_digest"] = digest_hex(c);
    j["effective"] = json::parse(dump_config(c));
  }
  return j.dump(2) + "\n";
}

}  // namespace gsure::commands
