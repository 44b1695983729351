#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bce3s/commands.hpp"
#include "bce3s/io.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string out_dir;
  bool quiet = false;
  bool seed_set = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, GlobalOptions& opts, bool needs_config) {
  auto* config = sub->add_option("--config", opts.config_path, "experiment config (JSON)");
  if (needs_config) config->required();
  sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
  sub->add_option("--seed", opts.seed, "seed override")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  sub->add_flag("--quiet", opts.quiet, "suppress informational output");
}

// --out moves run artifacts; the dataset location stays as configured except
// for gen-data, where --out redirects the dumps themselves.
bce3s::ExperimentConfig load_config(const GlobalOptions& opts, bool out_is_dataset = false) {
  bce3s::ExperimentConfig cfg = bce3s::load_experiment_config(opts.config_path);
  if (!opts.out_dir.empty()) {
    cfg.out_dir = opts.out_dir;
    if (out_is_dataset) cfg.dataset_dir = opts.out_dir;
  }
  if (opts.seed_set) cfg.train.seed = opts.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"long-tailed recognition losses, metrics, and training experiments"};
  app.require_subcommand(1);

  GlobalOptions gen_opts, train_opts, ablation_opts, gradcheck_opts, metrics_opts,
      etf_opts;

  auto* gen = app.add_subcommand("gen-data", "generate long-tailed train/test dumps");
  add_common(gen, gen_opts, true);

  auto* train = app.add_subcommand("train", "run the two-stage training pipeline");
  add_common(train, train_opts, true);

  auto* ablation = app.add_subcommand("ablation", "run a grid of loss variants");
  add_common(ablation, ablation_opts, true);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  double tol = 1e-4;
  int num_seeds = 20;
  gradcheck->add_option("--tol", tol, "max relative error tolerance");
  gradcheck->add_option("--seeds", num_seeds, "number of seeds per operation");
  add_common(gradcheck, gradcheck_opts, false);

  auto* metrics = app.add_subcommand("metrics", "geometry metrics from dump files");
  std::string features_path, classifier_path;
  metrics->add_option("--features", features_path, "feature dump (or checkpoint)")
      ->required();
  metrics->add_option("--classifier", classifier_path, "classifier dump (or checkpoint)")
      ->required();
  add_common(metrics, metrics_opts, false);

  auto* etf = app.add_subcommand("etf-sim", "uniform-loss dynamics over unit vectors");
  int etf_k = 4, etf_d = 8, etf_inits = 1;
  long long etf_steps = 5000;
  double etf_lr = 0.1;
  etf->add_option("--K", etf_k, "number of class vectors");
  etf->add_option("--d", etf_d, "vector dimension");
  etf->add_option("--steps", etf_steps, "gradient steps");
  etf->add_option("--lr", etf_lr, "learning rate");
  etf->add_option("--inits", etf_inits, "number of random initializations");
  add_common(etf, etf_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return bce3s::kExitConfig;
  }

  try {
    if (gen->parsed())
      return bce3s::cmd_gen_data(load_config(gen_opts, /*out_is_dataset=*/true),
                                 gen_opts.quiet, std::cout);
    if (train->parsed())
      return bce3s::cmd_train(load_config(train_opts), train_opts.quiet, std::cout);
    if (ablation->parsed()) {
      bce3s::AblationGrid grid = bce3s::load_ablation_grid(ablation_opts.config_path);
      if (!ablation_opts.out_dir.empty()) grid.base.out_dir = ablation_opts.out_dir;
      return bce3s::cmd_ablation(grid, ablation_opts.quiet, std::cout);
    }
    if (gradcheck->parsed()) {
      const std::uint64_t base = gradcheck_opts.seed_set ? gradcheck_opts.seed : 1;
      return bce3s::cmd_gradcheck(tol, num_seeds, base, gradcheck_opts.quiet, std::cout);
    }
    if (metrics->parsed()) {
      const std::string out_dir = metrics_opts.out_dir.empty() ? "." : metrics_opts.out_dir;
      return bce3s::cmd_metrics(features_path, classifier_path, out_dir, metrics_opts.quiet,
                                std::cout);
    }
    if (etf->parsed()) {
      const std::string out_dir = etf_opts.out_dir.empty() ? "." : etf_opts.out_dir;
      const std::uint64_t seed = etf_opts.seed_set ? etf_opts.seed : 1;
      return bce3s::cmd_etf_sim(etf_k, etf_d, etf_steps, etf_lr, seed, etf_inits, out_dir,
                                etf_opts.quiet, std::cout);
    }
  } catch (const bce3s::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return bce3s::kExitConfig;
  } catch (const bce3s::IoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return bce3s::kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return bce3s::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return bce3s::kExitConfig;
}
