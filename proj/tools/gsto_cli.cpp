#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "gsto/audit.hpp"
#include "gsto/config.hpp"
#include "gsto/experiment.hpp"

using gsto::cli::RunConfig;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string seed;
  std::string out;
  std::string precision;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--set", c.sets, "override one key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--precision", c.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : gsto::cli::load_config(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw gsto::cli::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.seed.empty()) cfg.set("seed", c.seed);
  if (!c.out.empty()) cfg.set("out", c.out);
  if (!c.precision.empty()) cfg.set("precision", c.precision);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated scale-transfer segmentation networks"};
  app.require_subcommand(1);
  Common common;
  CLI::App* train = app.add_subcommand("train", "train a network and write log, checkpoint, heatmaps");
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on the validation split");
  CLI::App* compare = app.add_subcommand("compare", "train every variant over several seeds");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  CLI::App* heatmap = app.add_subcommand("heatmap", "write feature and gate heatmaps");
  CLI::App* gen = app.add_subcommand("gen-data", "dump the synthetic dataset as GST1 files");
  for (CLI::App* cmd : {train, eval, compare, gradcheck, heatmap, gen}) add_common(cmd, common);
  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve(common);
    if (train->parsed()) {
      const auto s = gsto::cli::run_train(cfg, std::cout);
      std::printf("train_pixacc %.6f", s.train.pixel_accuracy);
      if (s.val) std::printf(" val_pixacc %.6f val_miou %.6f", s.val->pixel_accuracy, s.val->miou);
      std::printf(" params %zu gate_params %zu seconds %.1f\n", s.params, s.gate_params, s.seconds);
    } else if (eval->parsed()) {
      gsto::cli::run_eval(cfg, std::cout);
    } else if (compare->parsed()) {
      gsto::cli::run_compare(cfg, std::cout);
    } else if (gradcheck->parsed()) {
      if (!gsto::cli::run_gradcheck(cfg, std::cout).passed()) return 1;
    } else if (heatmap->parsed()) {
      for (const auto& f : gsto::cli::run_heatmap(cfg, std::cout)) std::cout << f << '\n';
    } else if (gen->parsed()) {
      gsto::cli::run_gen_data(cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
