#include "gsure/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gsure/error.hpp"

namespace gsure {

namespace {

using json = nlohmann::ordered_json;

// Reads keys from one JSON object and rejects any key that was not consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned()) {
            out = static_cast<T>(v.get<std::uint64_t>());
          } else {
            const auto x = v.get<std::int64_t>();
            if (x < 0) throw ConfigError("");
            out = static_cast<T>(x);
          }
        } else {
          out = static_cast<T>(v.get<std::int64_t>());
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      } else {
        if (!v.is_array()) throw ConfigError("");
        T items;
        for (const auto& e : v) {
          typename T::value_type x{};
          Section wrap(json{{"v", e}}, name_ + "." + key);
          wrap.get("v", x);
          items.push_back(x);
        }
        out = std::move(items);
      }
    } catch (const ConfigError&) {
      throw ConfigError("'" + name_ + "." + key + "' has the wrong type");
    }
  }

  json child(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? j_.at(key) : json::object();
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  json j_;
  std::string name_;
  std::set<std::string> used_;
};

LossConfig loss_preset(const std::string& name) {
  if (name == "faces") return LossConfig::faces();
  if (name == "mri") return LossConfig::mri();
  if (name == "theoretical") return LossConfig::theoretical();
  if (name == "stein_exact") return LossConfig::stein_exact();
  if (name == "snr_weighted") return LossConfig::snr_weighted();
  if (name == "default") return LossConfig{};
  throw ConfigError("unknown loss preset '" + name + "'");
}

std::string probe_name(ProbeKind k) { return k == ProbeKind::gaussian ? "gaussian" : "rademacher"; }
std::string divergence_name(DivergenceMode m) {
  return m == DivergenceMode::autodiff ? "autodiff" : "finite_difference";
}
std::string weights_name(Weights w) { return w == Weights::ema ? "ema" : "live"; }
std::string activation_name(ad::Activation a) { return a == ad::Activation::silu ? "silu" : "tanh"; }

void parse_loss(Section sec, LossConfig& l) {
  std::string preset = "default";
  sec.get("preset", preset);
  l = loss_preset(preset);
  std::string gamma = to_string(l.gamma), lambda = to_string(l.lambda);
  std::string probe = probe_name(l.probe), divergence = divergence_name(l.divergence);
  sec.get("gamma", gamma);
  sec.get("lambda", lambda);
  sec.get("lambda_c", l.lambda_c);
  sec.get("use_ybar_variant", l.use_ybar_variant);
  sec.get("probes", l.probes);
  sec.get("probe", probe);
  sec.get("divergence", divergence);
  sec.get("fd_step", l.fd_step);
  sec.finish();
  l.gamma = gamma_rule_from_string(gamma);
  l.lambda = lambda_rule_from_string(lambda);
  if (probe == "gaussian") l.probe = ProbeKind::gaussian;
  else if (probe == "rademacher") l.probe = ProbeKind::rademacher;
  else throw ConfigError("unknown probe kind '" + probe + "'");
  if (divergence == "autodiff") l.divergence = DivergenceMode::autodiff;
  else if (divergence == "finite_difference") l.divergence = DivergenceMode::finite_difference;
  else throw ConfigError("unknown divergence mode '" + divergence + "'");
}

json loss_json(const LossConfig& l) {
  return json{{"gamma", to_string(l.gamma)},       {"lambda", to_string(l.lambda)},
              {"lambda_c", l.lambda_c},            {"use_ybar_variant", l.use_ybar_variant},
              {"probes", l.probes},                {"probe", probe_name(l.probe)},
              {"divergence", divergence_name(l.divergence)}, {"fd_step", l.fd_step}};
}

json to_json(const ExperimentConfig& c) {
  json mask = json::array();
  for (auto b : c.degradation.mask) mask.push_back(static_cast<int>(b));
  json out;
  out["data"] = {{"kind", c.data.kind},       {"count", c.data.count},     {"seed", c.data.seed},
                 {"dim", c.data.dim},         {"variance", c.data.variance}, {"height", c.data.height},
                 {"width", c.data.width},     {"complex", c.data.complex}, {"path", c.data.path}};
  out["degradation"] = {{"family", c.degradation.family},
                        {"transform", c.degradation.transform},
                        {"p", c.degradation.p},
                        {"patch", c.degradation.patch},
                        {"acceleration", c.degradation.acceleration},
                        {"mask", mask},
                        {"singular", c.degradation.singular},
                        {"sigma0", c.degradation.sigma0}};
  out["schedule"] = {{"T", c.train.schedule.T}, {"beta_1", c.train.schedule.beta_1}, {"beta_T", c.train.schedule.beta_T}};
  out["model"] = {{"hidden", c.model.hidden},
                  {"embedding_dim", c.model.embedding_dim},
                  {"mean_type", to_string(c.model.mean_type)},
                  {"activation", activation_name(c.model.activation)},
                  {"ema_decay", c.model.ema_decay}};
  json train = {{"iterations", c.train.iterations},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.adam.learning_rate},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"epsilon", c.train.adam.epsilon},
                {"oracle_mode", c.train.oracle_mode},
                {"log_every", c.train.log_every},
                {"chunk_size", c.train.chunk_size},
                {"threads", c.train.threads},
                {"ema_warmup", c.train.ema_warmup},
                {"record_wall_time", c.train.record_wall_time},
                {"loss", loss_json(c.train.loss)}};
  train["seed"] = c.train.seed ? json(*c.train.seed) : json(nullptr);
  out["train"] = train;
  out["sample"] = {{"sampler", c.sample.sampler}, {"steps", c.sample.steps}, {"eta", c.sample.eta},
                   {"count", c.sample.count},     {"seed", c.sample.seed},   {"weights", weights_name(c.sample.weights)}};
  out["reconstruct"] = {{"steps", c.reconstruct.steps},
                        {"count", c.reconstruct.count},
                        {"seed", c.reconstruct.seed},
                        {"r_sweep", c.reconstruct.r_sweep},
                        {"uncertainty_runs", c.reconstruct.uncertainty_runs}};
  out["eval"] = {{"operations", c.eval.operations},     {"reference_checkpoint", c.eval.reference_checkpoint},
                 {"t_stride", c.eval.t_stride},         {"samples", c.eval.samples},
                 {"seed", c.eval.seed},                 {"snr_levels", c.eval.snr_levels},
                 {"shuffles", c.eval.shuffles},         {"projections", c.eval.projections},
                 {"data_range", c.eval.data_range},     {"samples_file", c.eval.samples_file},
                 {"heldout_file", c.eval.heldout_file}};
  out["io"] = {{"out_dir", c.io.out_dir}, {"dataset_dir", c.io.dataset_dir}};
  return out;
}

}  // namespace

std::size_t DataSpec::signal_dim() const {
  if (kind == "synthetic-shapes") return (complex ? 2 : 1) * height * width;
  return dim;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");

  {
    Section s(top.child("data"), "data");
    s.get("kind", c.data.kind);
    s.get("count", c.data.count);
    s.get("seed", c.data.seed);
    s.get("dim", c.data.dim);
    s.get("variance", c.data.variance);
    s.get("height", c.data.height);
    s.get("width", c.data.width);
    s.get("complex", c.data.complex);
    s.get("path", c.data.path);
    s.finish();
  }
  {
    Section s(top.child("degradation"), "degradation");
    s.get("family", c.degradation.family);
    s.get("transform", c.degradation.transform);
    s.get("p", c.degradation.p);
    s.get("patch", c.degradation.patch);
    s.get("acceleration", c.degradation.acceleration);
    std::vector<int> mask;
    s.get("mask", mask);
    for (int b : mask) {
      if (b != 0 && b != 1) throw ConfigError("'degradation.mask' entries must be 0 or 1");
      c.degradation.mask.push_back(static_cast<std::uint8_t>(b));
    }
    s.get("singular", c.degradation.singular);
    s.get("sigma0", c.degradation.sigma0);
    s.finish();
  }
  {
    Section s(top.child("schedule"), "schedule");
    s.get("T", c.train.schedule.T);
    s.get("beta_1", c.train.schedule.beta_1);
    s.get("beta_T", c.train.schedule.beta_T);
    s.finish();
  }
  {
    Section s(top.child("model"), "model");
    s.get("hidden", c.model.hidden);
    s.get("embedding_dim", c.model.embedding_dim);
    std::string mean = to_string(c.model.mean_type), act = activation_name(c.model.activation);
    s.get("mean_type", mean);
    s.get("activation", act);
    s.get("ema_decay", c.model.ema_decay);
    s.finish();
    try {
      c.model.mean_type = mean_type_from_string(mean);
    } catch (const Error&) {
      throw ConfigError("unknown mean_type '" + mean + "'");
    }
    if (act == "silu") c.model.activation = ad::Activation::silu;
    else if (act == "tanh") c.model.activation = ad::Activation::tanh;
    else throw ConfigError("unknown activation '" + act + "'");
  }
  {
    Section s(top.child("train"), "train");
    s.get("iterations", c.train.iterations);
    s.get("batch_size", c.train.batch_size);
    s.get("learning_rate", c.train.adam.learning_rate);
    s.get("beta1", c.train.adam.beta1);
    s.get("beta2", c.train.adam.beta2);
    s.get("epsilon", c.train.adam.epsilon);
    if (s.has("seed") && !root["train"]["seed"].is_null()) {
      std::uint64_t seed = 0;
      s.get("seed", seed);
      c.train.seed = seed;
    } else {
      s.child("seed");  // absent or null: supplied on the command line
    }
    s.get("oracle_mode", c.train.oracle_mode);
    s.get("log_every", c.train.log_every);
    s.get("chunk_size", c.train.chunk_size);
    s.get("threads", c.train.threads);
    s.get("ema_warmup", c.train.ema_warmup);
    s.get("record_wall_time", c.train.record_wall_time);
    parse_loss(Section(s.child("loss"), "train.loss"), c.train.loss);
    s.finish();
  }
  {
    Section s(top.child("sample"), "sample");
    s.get("sampler", c.sample.sampler);
    s.get("steps", c.sample.steps);
    s.get("eta", c.sample.eta);
    s.get("count", c.sample.count);
    s.get("seed", c.sample.seed);
    std::string w = weights_name(c.sample.weights);
    s.get("weights", w);
    if (w == "ema") c.sample.weights = Weights::ema;
    else if (w == "live") c.sample.weights = Weights::live;
    else throw ConfigError("unknown weights '" + w + "'");
    s.finish();
  }
  {
    Section s(top.child("reconstruct"), "reconstruct");
    s.get("steps", c.reconstruct.steps);
    s.get("count", c.reconstruct.count);
    s.get("seed", c.reconstruct.seed);
    s.get("r_sweep", c.reconstruct.r_sweep);
    s.get("uncertainty_runs", c.reconstruct.uncertainty_runs);
    s.finish();
  }
  {
    Section s(top.child("eval"), "eval");
    s.get("operations", c.eval.operations);
    s.get("reference_checkpoint", c.eval.reference_checkpoint);
    s.get("t_stride", c.eval.t_stride);
    s.get("samples", c.eval.samples);
    s.get("seed", c.eval.seed);
    s.get("snr_levels", c.eval.snr_levels);
    s.get("shuffles", c.eval.shuffles);
    s.get("projections", c.eval.projections);
    s.get("data_range", c.eval.data_range);
    s.get("samples_file", c.eval.samples_file);
    s.get("heldout_file", c.eval.heldout_file);
    s.finish();
  }
  {
    Section s(top.child("io"), "io");
    s.get("out_dir", c.io.out_dir);
    s.get("dataset_dir", c.io.dataset_dir);
    s.finish();
  }
  top.finish();
  c.model.dim = c.data.signal_dim();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

std::uint64_t config_digest(const ExperimentConfig& c) {
  // Neither the worker count nor the output location changes any result, so
  // they are not part of the identity of a run.
  json j = to_json(c);
  j["train"].erase("threads");
  j["io"].erase("out_dir");
  return fnv1a64(j.dump());
}

void ExperimentConfig::validate() const {
  const std::set<std::string> kinds = {"two-deltas", "isotropic-gaussian", "synthetic-shapes", "external-binary"};
  if (!kinds.count(data.kind)) throw ConfigError("unknown data.kind '" + data.kind + "'");
  if (data.kind == "external-binary" && data.path.empty()) throw ConfigError("external-binary data needs data.path");
  if (data.kind == "synthetic-shapes" && (data.height == 0 || data.width == 0)) {
    throw ConfigError("synthetic-shapes needs positive height and width");
  }
  if (data.signal_dim() == 0) throw ConfigError("data dimension must be positive");
  if (!(data.variance > 0.0)) throw ConfigError("data.variance must be positive");

  const std::set<std::string> families = {"none", "single-drop", "patch", "lines", "fixed"};
  if (!families.count(degradation.family)) throw ConfigError("unknown degradation.family '" + degradation.family + "'");
  if (degradation.transform != "identity" && degradation.transform != "spectral") {
    throw ConfigError("unknown degradation.transform '" + degradation.transform + "'");
  }
  if (degradation.transform == "spectral" && !(data.kind == "synthetic-shapes" && data.complex)) {
    throw ConfigError("the spectral transform needs synthetic-shapes data with complex = true");
  }
  if (degradation.family == "lines" && degradation.transform != "spectral") {
    throw ConfigError("line masks need the spectral transform");
  }
  if (degradation.family == "patch" && data.kind != "synthetic-shapes") {
    throw ConfigError("patch masks need image data (synthetic-shapes)");
  }
  if (degradation.family == "fixed" && degradation.mask.size() != data.signal_dim()) {
    throw ConfigError("degradation.mask length must equal the signal dimension");
  }
  if (!(degradation.singular > 0.0)) throw ConfigError("degradation.singular must be positive");
  if (!(degradation.sigma0 >= 0.0)) throw ConfigError("degradation.sigma0 must be non-negative");

  if (!(train.schedule.beta_1 > 0.0 && train.schedule.beta_1 <= train.schedule.beta_T && train.schedule.beta_T < 1.0)) {
    throw ConfigError("schedule needs 0 < beta_1 <= beta_T < 1");
  }
  if (train.schedule.T < 1) throw ConfigError("schedule.T must be >= 1");
  if (model.embedding_dim == 0) throw ConfigError("model.embedding_dim must be positive");
  for (auto h : model.hidden)
    if (h == 0) throw ConfigError("model.hidden widths must be positive");
  if (!(model.ema_decay > 0.0 && model.ema_decay < 1.0)) throw ConfigError("model.ema_decay must be in (0, 1)");

  {
    TrainConfig t = train;
    if (!t.seed) t.seed = 0;  // the seed may still come from the command line
    t.validate();
  }

  if (sample.sampler != "ddim" && sample.sampler != "ddpm") throw ConfigError("sample.sampler must be ddim or ddpm");
  if (sample.steps < 1 || sample.steps > train.schedule.T) throw ConfigError("sample.steps must be in [1, T]");
  if (!(sample.eta >= 0.0 && sample.eta <= 1.0)) throw ConfigError("sample.eta must be in [0, 1]");
  if (reconstruct.steps < 1 || reconstruct.steps > train.schedule.T) throw ConfigError("reconstruct.steps must be in [1, T]");
  if (reconstruct.uncertainty_runs < 0 || reconstruct.uncertainty_runs == 1) {
    throw ConfigError("reconstruct.uncertainty_runs must be 0 or >= 2");
  }
  for (auto r : reconstruct.r_sweep)
    if (r == 0) throw ConfigError("reconstruct.r_sweep entries must be positive");

  const std::set<std::string> ops = {"mse-sweep", "psnr", "independence-demo", "distance", "cca"};
  for (const auto& op : eval.operations)
    if (!ops.count(op)) throw ConfigError("unknown eval operation '" + op + "'");
  if (eval.t_stride < 1) throw ConfigError("eval.t_stride must be >= 1");
  if (eval.shuffles < 1 || eval.projections < 1) throw ConfigError("eval.shuffles and eval.projections must be >= 1");
  if (!(eval.data_range > 0.0)) throw ConfigError("eval.data_range must be positive");
  if (io.out_dir.empty()) throw ConfigError("io.out_dir must not be empty");
}

OrthoTransform build_transform(const ExperimentConfig& c) {
  if (c.degradation.transform == "spectral") return OrthoTransform::spectral(c.data.height, c.data.width);
  return OrthoTransform::identity(c.data.signal_dim());
}

MaskDistribution build_masks(const ExperimentConfig& c) {
  const auto& d = c.degradation;
  const std::size_t n = c.data.signal_dim();
  if (d.family == "none") return MaskDistribution(FixedMask{Mask(n, 1)});
  if (d.family == "fixed") return MaskDistribution(FixedMask{d.mask});
  if (d.family == "single-drop") return MaskDistribution(SingleDrop{n});
  if (d.family == "patch") {
    if (c.data.complex) throw ConfigError("patch masks act on real images; set data.complex = false");
    return MaskDistribution(PatchDrop{c.data.height, c.data.width, d.patch, d.p});
  }
  return MaskDistribution(LineSubsample{c.data.height, c.data.width, d.acceleration});
}

}  // namespace gsure
