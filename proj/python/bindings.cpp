#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "gsure/commands.hpp"
#include "gsure/config.hpp"
#include "gsure/error.hpp"
#include "gsure/eval.hpp"
#include "gsure/io.hpp"
#include "gsure/losses.hpp"
#include "gsure/operators.hpp"
#include "gsure/schedule.hpp"

namespace py = pybind11;
using namespace gsure;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

Array vector_to_numpy(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Mask to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& m) {
  return Mask(m.data(), m.data() + m.size());
}

py::dict metrics_dict(const std::vector<MetricsRow>& rows) {
  py::dict d;
  std::vector<long> step;
  std::vector<double> loss, div, grad;
  for (const auto& r : rows) {
    step.push_back(r.step);
    loss.push_back(r.loss);
    div.push_back(r.divergence_term);
    grad.push_back(r.grad_norm);
  }
  d["step"] = step;
  d["loss"] = loss;
  d["divergence_term"] = div;
  d["grad_norm"] = grad;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GSURE diffusion training from degraded measurements";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<DiffusionSchedule>(m, "Schedule")
      .def_readonly("T", &DiffusionSchedule::T)
      .def_property_readonly("betas", [](const DiffusionSchedule& s) { return vector_to_numpy(s.betas); })
      .def_property_readonly("alpha_bars", [](const DiffusionSchedule& s) { return vector_to_numpy(s.alpha_bars); })
      .def("alpha_bar", &DiffusionSchedule::alpha_bar, py::arg("t"));
  m.def("linear_schedule", &linear_schedule, py::arg("T"), py::arg("beta_1"), py::arg("beta_T"));
  m.def(
      "psd_feasible_t",
      [](const DiffusionSchedule& s, const Array& noise_var) { return check_psd_feasibility(s, to_vector(noise_var)); },
      py::arg("schedule"), py::arg("noise_var"), "Smallest timestep at which every entry can be topped up.");

  m.def(
      "patch_mask_expectation",
      [](std::size_t h, std::size_t w, std::size_t patch, double p) {
        return vector_to_numpy(expected_projection(MaskDistribution(PatchDrop{h, w, patch, p})));
      },
      py::arg("height"), py::arg("width"), py::arg("patch"), py::arg("p"));
  m.def(
      "weight_matrix", [](const Array& ep) { return vector_to_numpy(weight_matrix(to_vector(ep))); },
      py::arg("expected_projection"), "Diagonal of E[P]^{-1/2}.");
  m.def(
      "projected_loss",
      [](const Array& f, const Array& xbar, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask,
         const Array& w) { return projected_loss(to_vector(f), to_vector(xbar), to_mask(mask), to_vector(w)); },
      py::arg("f"), py::arg("xbar"), py::arg("mask"), py::arg("w"));
  m.def(
      "sure", [](const Array& f, const Array& y, double sigma, double div) { return sure(to_vector(f), to_vector(y), sigma, div); },
      py::arg("f"), py::arg("y"), py::arg("sigma"), py::arg("divergence"));

  m.def(
      "energy_distance", [](const Array& a, const Array& b) { return energy_distance(to_tensor(a), to_tensor(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "linear_cca", [](const Array& x, const Array& y, double ridge) { return linear_cca(to_tensor(x), to_tensor(y), ridge); },
      py::arg("x"), py::arg("y"), py::arg("ridge") = 1e-6);
  m.def(
      "sliced_wasserstein",
      [](const Array& a, const Array& b, int projections, std::uint64_t seed) {
        Rng rng(seed);
        const DistributionDistance d = distribution_distance(to_tensor(a), to_tensor(b), projections, rng);
        return py::dict(py::arg("sliced_w2") = d.sliced_w2, py::arg("mean_gap") = d.mean_gap,
                        py::arg("cov_gap") = d.cov_gap);
      },
      py::arg("a"), py::arg("b"), py::arg("projections") = 256, py::arg("seed") = 0);

  m.def(
      "read_array", [](const std::filesystem::path& p) { return to_numpy(io::read_array(p)); }, py::arg("path"));
  m.def(
      "write_array", [](const std::filesystem::path& p, const Array& a) { io::write_array(p, to_tensor(a)); },
      py::arg("path"), py::arg("array"));

  py::class_<ExperimentConfig>(m, "Config")
      .def_static("from_json", &parse_config, py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def("to_json", &dump_config)
      .def_property_readonly("digest", [](const ExperimentConfig& c) { return io::hex64(config_digest(c)); })
      .def_property(
          "train_seed", [](const ExperimentConfig& c) { return c.train.seed; },
          [](ExperimentConfig& c, std::optional<std::uint64_t> s) { c.train.seed = s; })
      .def_property(
          "threads", [](const ExperimentConfig& c) { return c.train.threads; },
          [](ExperimentConfig& c, std::size_t t) { c.train.threads = t; })
      .def_property_readonly("signal_dim", [](const ExperimentConfig& c) { return c.data.signal_dim(); });

  py::class_<Mlp>(m, "Model")
      .def_property_readonly("dim", &Mlp::dim)
      .def_property_readonly("parameter_count", &Mlp::parameter_count)
      .def(
          "predict",
          [](const Mlp& model, const Array& x, int t, const DiffusionSchedule& s, bool ema) {
            return to_numpy(model.predict(to_tensor(x), t, s, ema ? Weights::ema : Weights::live));
          },
          py::arg("xbar_t"), py::arg("t"), py::arg("schedule"), py::arg("ema") = true,
          "Denoised estimate of xbar_0 for a [B, dim] batch.");

  m.def(
      "gen_data",
      [](const ExperimentConfig& c, const std::filesystem::path& out) {
        const auto s = commands::gen_data(c, out);
        return py::dict(py::arg("count") = s.count, py::arg("dim") = s.dim, py::arg("t_min") = s.t_min);
      },
      py::arg("config"), py::arg("out"));
  m.def(
      "train",
      [](const ExperimentConfig& c, const std::filesystem::path& out) {
        commands::TrainSummary s;
        {
          py::gil_scoped_release release;
          s = commands::train(c, out);
        }
        py::dict d = metrics_dict(s.metrics);
        d["t_min"] = s.t_min;
        d["checkpoint"] = s.checkpoint_path;
        return d;
      },
      py::arg("config"), py::arg("out"));
  m.def("load_model", &commands::load_model, py::arg("config"), py::arg("checkpoint"));
  m.def(
      "sample",
      [](const ExperimentConfig& c, const std::filesystem::path& ckpt, const std::filesystem::path& out) {
        return to_numpy(commands::sample(c, ckpt, out));
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"));
  m.def(
      "reconstruct",
      [](const ExperimentConfig& c, const std::filesystem::path& ckpt, const std::filesystem::path& out) {
        const auto s = commands::reconstruct(c, ckpt, out);
        return py::dict(py::arg("reconstructions") = to_numpy(s.reconstructions),
                        py::arg("zero_filled") = to_numpy(s.zero_filled), py::arg("accelerations") = s.accelerations,
                        py::arg("residual_norms") = s.residual_norms, py::arg("all_finite") = s.all_finite);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"));
  m.def(
      "evaluate",
      [](const ExperimentConfig& c, std::optional<std::filesystem::path> ckpt, const std::filesystem::path& out) {
        return commands::evaluate(c, ckpt, out);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"));
  m.def(
      "inspect", [](const std::filesystem::path& p) { return commands::inspect(p); }, py::arg("path"));
}
