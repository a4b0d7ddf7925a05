#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gsure/commands.hpp"
#include "gsure/config.hpp"
#include "gsure/error.hpp"
#include "gsure/io.hpp"

namespace {

using namespace gsure;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* sub, Common& c, bool needs_checkpoint) {
  sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "overrides the command's seed");
  sub->add_option("--out", c.out, "output directory (default: io.out_dir)");
  auto* ck = sub->add_option("--checkpoint", c.checkpoint, "checkpoint file");
  if (needs_checkpoint) ck->required()->check(CLI::ExistingFile);
}

ExperimentConfig load(const Common& c, const std::string& command) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) {
    if (command == "gen-data") cfg.data.seed = *c.seed;
    if (command == "train") cfg.train.seed = *c.seed;
    if (command == "sample") cfg.sample.seed = *c.seed;
    if (command == "reconstruct") cfg.reconstruct.seed = *c.seed;
    if (command == "eval") cfg.eval.seed = *c.seed;
  }
  if (c.threads) cfg.train.threads = *c.threads;
  if (!c.out.empty()) cfg.io.out_dir = c.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion models trained from degraded measurements with GSURE"};
  app.require_subcommand(1);

  Common gen, tr, sa, re, ev;
  add_common(app.add_subcommand("gen-data", "simulate a dataset of degraded measurements"), gen, false);
  auto* train_cmd = app.add_subcommand("train", "train a denoiser (GSURE or oracle mode)");
  add_common(train_cmd, tr, false);
  train_cmd->add_option("--threads", tr.threads, "worker threads (results do not depend on it)");
  add_common(app.add_subcommand("sample", "generate samples from a checkpoint"), sa, true);
  add_common(app.add_subcommand("reconstruct", "reconstruct measurements, zero-filled baselines, R sweep"), re, true);
  add_common(app.add_subcommand("eval", "write evaluation reports"), ev, false);

  auto* insp = app.add_subcommand("inspect", "describe an array, checkpoint or config file");
  std::string inspect_path;
  commands::PgmRequest pgm;
  std::string pgm_out;
  insp->add_option("path", inspect_path, "file to inspect")->required()->check(CLI::ExistingFile);
  insp->add_option("--pgm", pgm_out, "write one array row as a binary graymap");
  insp->add_option("--index", pgm.index, "row to convert");
  insp->add_option("--height", pgm.height, "image height");
  insp->add_option("--width", pgm.width, "image width");
  insp->add_option("--lo", pgm.lo, "intensity mapped to black");
  insp->add_option("--hi", pgm.hi, "intensity mapped to white");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) {
      const auto cfg = load(gen, "gen-data");
      const auto s = commands::gen_data(cfg, cfg.io.out_dir);
      std::cout << "wrote " << s.count << " records of dimension " << s.dim << " to " << cfg.io.out_dir
                << " (t_min " << s.t_min << ")\n";
    } else if (app.got_subcommand("train")) {
      const auto cfg = load(tr, "train");
      std::optional<std::filesystem::path> ck;
      if (!tr.checkpoint.empty()) ck = tr.checkpoint;
      const auto s = commands::train(cfg, cfg.io.out_dir, ck);
      std::cout << "trained " << s.checkpoint.step << " steps (t_min " << s.t_min << ")";
      if (!s.metrics.empty()) std::cout << ", final loss " << io::format_double(s.metrics.back().loss);
      std::cout << "; checkpoint " << s.checkpoint_path.string() << "\n";
    } else if (app.got_subcommand("sample")) {
      const auto cfg = load(sa, "sample");
      const Tensor x = commands::sample(cfg, sa.checkpoint, cfg.io.out_dir);
      std::cout << "wrote " << x.rows() << " samples to " << cfg.io.out_dir << "\n";
    } else if (app.got_subcommand("reconstruct")) {
      const auto cfg = load(re, "reconstruct");
      const auto s = commands::reconstruct(cfg, re.checkpoint, cfg.io.out_dir);
      std::cout << "reconstructed " << s.reconstructions.rows() << " measurements";
      for (std::size_t k = 0; k < s.accelerations.size(); ++k) {
        std::cout << (k == 0 ? "; residual by R:" : ",") << " R=" << s.accelerations[k] << " "
                  << io::format_double(s.residual_norms[k]);
      }
      std::cout << "\n";
      if (!s.all_finite) {
        std::cerr << "error: non-finite reconstruction\n";
        return 3;
      }
    } else if (app.got_subcommand("eval")) {
      const auto cfg = load(ev, "eval");
      std::optional<std::filesystem::path> ck;
      if (!ev.checkpoint.empty()) ck = ev.checkpoint;
      for (const auto& f : commands::evaluate(cfg, ck, cfg.io.out_dir)) std::cout << "wrote " << f << "\n";
    } else {
      std::optional<commands::PgmRequest> req;
      if (!pgm_out.empty()) {
        pgm.out = pgm_out;
        req = pgm;
      }
      std::cout << commands::inspect(inspect_path, req);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
