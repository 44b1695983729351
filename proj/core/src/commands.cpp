#include "bce3s/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "bce3s/grads.hpp"
#include "bce3s/io.hpp"

namespace bce3s {
namespace {

namespace fs = std::filesystem;

std::string acc_cell(const std::optional<double>& v) {
  if (!v) return "   -  ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.2f", *v);
  return buf;
}

std::string acc_cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.2f", v);
  return buf;
}

void print_eval_table(std::ostream& out, const std::string& label, const EvalReport& eval) {
  out << "                    Many    Med.    Few     All\n";
  out << std::left << std::setw(18) << label << std::right << "  " << acc_cell(eval.acc_many)
      << "  " << acc_cell(eval.acc_medium) << "  " << acc_cell(eval.acc_few) << "  "
      << acc_cell(eval.acc_all) << "\n";
}

Dataset dataset_from_dumps(const ExperimentConfig& cfg) {
  const FeatureDump train = read_feature_dump_file(cfg.train_dump_path());
  const FeatureDump test = read_feature_dump_file(cfg.test_dump_path());
  if (train.num_classes != test.num_classes || train.dim != test.dim)
    throw IoError("train and test dumps disagree on K or d");
  Dataset ds;
  ds.num_classes = train.num_classes;
  ds.input_dim = train.dim;
  ds.train = std::move(train.features);
  ds.test = std::move(test.features);
  ds.train_counts.assign(static_cast<std::size_t>(ds.num_classes), 0);
  for (const auto& f : ds.train) ++ds.train_counts[static_cast<std::size_t>(f.label)];
  return ds;
}

struct RunArtifacts {
  Model model;
  History history;
  EvalReport final_eval;
};

// Shared by cmd_train and cmd_ablation; writes artifacts under out_dir.
RunArtifacts run_training(const ExperimentConfig& cfg, const Dataset& ds,
                          bool write_files) {
  Model model = make_model(cfg.train, ds.input_dim, ds.num_classes);
  TrainResult result = train_stage1(std::move(model), ds, cfg.train);
  History history = std::move(result.history);

  const auto encoded_features = [&](const Model& m) {
    FeatureDump dump;
    dump.num_classes = ds.num_classes;
    dump.dim = m.feature_dim();
    dump.features.reserve(ds.train.size());
    for (const auto& sample : ds.train) {
      Vec f = m.encoder.empty() ? sample.x : m.encoder.forward(sample.x);
      dump.features.push_back({std::move(f), sample.label});
    }
    return dump;
  };

  if (write_files) {
    write_checkpoint_file(cfg.out_dir + "/checkpoint.s1", encoded_features(result.model),
                          result.model.classifier);
  }

  if (cfg.train.epochs_stage2 > 0) {
    finetune_stage2(result.model, ds, cfg.train, &history);
    if (write_files) {
      write_checkpoint_file(cfg.out_dir + "/checkpoint.s2", encoded_features(result.model),
                            result.model.classifier);
    }
  }

  if (write_files) {
    write_history_csv(cfg.out_dir + "/history.csv", history);
    for (const auto& snapshot : history.metrics) {
      char name[64];
      std::snprintf(name, sizeof(name), "/metrics_epoch%04d.csv", snapshot.epoch);
      write_metric_csv(cfg.out_dir + name, snapshot.report);
    }
  }

  RunArtifacts artifacts;
  artifacts.final_eval = evaluate(result.model, ds.test, subset_split(ds.train_counts));
  artifacts.model = std::move(result.model);
  artifacts.history = std::move(history);
  return artifacts;
}

}  // namespace

int cmd_gen_data(const ExperimentConfig& cfg, bool quiet, std::ostream& out) {
  const Dataset ds = generate_dataset(cfg.data);
  fs::create_directories(cfg.dataset_dir);

  FeatureDump train;
  train.num_classes = ds.num_classes;
  train.dim = ds.input_dim;
  train.features = ds.train;
  write_feature_dump_file(cfg.train_dump_path(), train);

  FeatureDump test;
  test.num_classes = ds.num_classes;
  test.dim = ds.input_dim;
  test.features = ds.test;
  write_feature_dump_file(cfg.test_dump_path(), test);

  if (!quiet) {
    out << "wrote " << cfg.train_dump_path() << " (" << ds.train.size() << " samples), "
        << cfg.test_dump_path() << " (" << ds.test.size() << " samples)\n";
    out << "per-class train counts:";
    for (long long c : ds.train_counts) out << ' ' << c;
    out << "\n";
  }
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, bool quiet, std::ostream& out) {
  if (!fs::exists(cfg.train_dump_path()) || !fs::exists(cfg.test_dump_path()))
    throw IoError("dataset dumps not found under '" + cfg.dataset_dir +
                  "' (run gen-data first)");
  const Dataset ds = dataset_from_dumps(cfg);
  fs::create_directories(cfg.out_dir);

  try {
    const RunArtifacts artifacts = run_training(cfg, ds, /*write_files=*/true);
    if (!quiet) {
      out << "history: " << cfg.out_dir << "/history.csv\n";
      print_eval_table(out, "final", artifacts.final_eval);
    }
  } catch (const DivergenceError& e) {
    out << "training diverged: " << e.what() << " (last finite epoch "
        << e.last_finite_epoch() << ")\n";
    return kExitDivergence;
  }
  return kExitOk;
}

int cmd_ablation(const AblationGrid& grid, bool quiet, std::ostream& out) {
  const Dataset ds = generate_dataset(grid.base.data);
  fs::create_directories(grid.base.out_dir);

  struct Row {
    std::string variant;
    std::uint64_t seed;
    bool ok = false;
    std::string error;
    EvalReport eval;
  };
  std::vector<Row> rows;

  for (const auto& variant : grid.variants) {
    for (const std::uint64_t seed : grid.seeds) {
      ExperimentConfig cfg = apply_variant(grid, variant, seed);
      cfg.out_dir = grid.base.out_dir + "/" + variant.name + "/seed" + std::to_string(seed);
      fs::create_directories(cfg.out_dir);
      Row row{variant.name, seed, false, "", {}};
      try {
        const RunArtifacts artifacts = run_training(cfg, ds, /*write_files=*/true);
        row.ok = true;
        row.eval = artifacts.final_eval;
      } catch (const DivergenceError& e) {
        row.error = std::string("divergence: ") + e.what();
      }
      if (!quiet) {
        out << variant.name << " seed " << seed << ": "
            << (row.ok ? "acc_all " + acc_cell(row.eval.acc_all) : row.error) << "\n";
      }
      rows.push_back(std::move(row));
    }
  }

  const std::string results_path = grid.base.out_dir + "/ablation_results.csv";
  {
    std::ofstream csv(results_path, std::ios::binary);
    csv << "variant,seed,status,acc_many,acc_medium,acc_few,acc_all\n";
    for (const auto& row : rows) {
      csv << row.variant << ',' << row.seed << ',' << (row.ok ? "ok" : "failed") << ',';
      if (row.ok) {
        csv << (row.eval.acc_many ? format_double(*row.eval.acc_many) : "") << ','
            << (row.eval.acc_medium ? format_double(*row.eval.acc_medium) : "") << ','
            << (row.eval.acc_few ? format_double(*row.eval.acc_few) : "") << ','
            << format_double(row.eval.acc_all);
      } else {
        csv << ",,,";
      }
      csv << "\n";
    }
  }

  // Mean block over seeds, Table-layout column order (Many, Med., Few, All).
  std::ofstream mean_csv(grid.base.out_dir + "/ablation_mean.csv", std::ios::binary);
  mean_csv << "variant,acc_many,acc_medium,acc_few,acc_all,runs\n";
  out << "\nmean over seeds\n";
  out << "                    Many    Med.    Few     All\n";
  for (const auto& variant : grid.variants) {
    double many = 0, med = 0, few = 0, all = 0;
    int n = 0, n_many = 0, n_med = 0, n_few = 0;
    for (const auto& row : rows) {
      if (row.variant != variant.name || !row.ok) continue;
      ++n;
      all += row.eval.acc_all;
      if (row.eval.acc_many) { many += *row.eval.acc_many; ++n_many; }
      if (row.eval.acc_medium) { med += *row.eval.acc_medium; ++n_med; }
      if (row.eval.acc_few) { few += *row.eval.acc_few; ++n_few; }
    }
    std::optional<double> mean_many, mean_med, mean_few;
    if (n_many) mean_many = many / n_many;
    if (n_med) mean_med = med / n_med;
    if (n_few) mean_few = few / n_few;
    out << std::left << std::setw(18) << variant.name << std::right << "  "
        << acc_cell(mean_many) << "  " << acc_cell(mean_med) << "  " << acc_cell(mean_few)
        << "  " << (n ? acc_cell(all / n) : "   -  ") << (n ? "" : "  (all runs failed)")
        << "\n";
    mean_csv << variant.name << ',' << (mean_many ? format_double(*mean_many) : "") << ','
             << (mean_med ? format_double(*mean_med) : "") << ','
             << (mean_few ? format_double(*mean_few) : "") << ','
             << (n ? format_double(all / n) : "") << ',' << n << "\n";
  }
  if (!quiet) out << "\nresults: " << results_path << "\n";
  return kExitOk;
}

int cmd_gradcheck(double tol, int num_seeds, std::uint64_t base_seed, bool quiet,
                  std::ostream& out) {
  if (num_seeds < 1) throw ConfigError("need at least one seed");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < num_seeds; ++i) seeds.push_back(base_seed + static_cast<std::uint64_t>(i));
  const auto reports = gradcheck_suite(seeds, tol);

  // Worst case per operation.
  std::map<std::string, const GradReport*> worst;
  for (const auto& r : reports) {
    auto it = worst.find(r.op);
    if (it == worst.end() || r.max_rel_err > it->second->max_rel_err) worst[r.op] = &r;
  }
  bool all_pass = true;
  for (const auto& [op, report] : worst) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-22s worst rel err %.3e (seed %llu, coord %d) %s",
                  op.c_str(), report->max_rel_err,
                  static_cast<unsigned long long>(report->seed), report->worst_index,
                  report->pass ? "ok" : "FAIL");
    out << buf << "\n";
  }
  for (const auto& r : reports) {
    if (r.pass) continue;
    all_pass = false;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "FAIL %s seed %llu: rel err %.3e at coordinate %d",
                  r.op.c_str(), static_cast<unsigned long long>(r.seed), r.max_rel_err,
                  r.worst_index);
    out << buf << "\n";
  }
  if (!quiet)
    out << (all_pass ? "gradcheck passed" : "gradcheck FAILED") << " (" << reports.size()
        << " checks, tol " << tol << ")\n";
  return all_pass ? kExitOk : kExitGradcheck;
}

int cmd_metrics(const std::string& features_path, const std::string& classifier_path,
                const std::string& out_dir, bool quiet, std::ostream& out) {
  const FeatureDump dump = read_feature_dump_file(features_path);
  const Classifier clf = read_classifier_file(classifier_path);
  if (dump.num_classes != clf.num_classes())
    throw IoError("feature dump and classifier disagree on K");

  const MetricReport report = metric_report(dump.features, clf);
  const SeparabilityMatrix matrix = separability_matrix(clf);

  fs::create_directories(out_dir);
  write_metric_csv(out_dir + "/metrics.csv", report);
  write_separability_csv(out_dir + "/separability_matrix.csv", matrix);

  out << metric_summary_line(report) << "\n";
  if (!quiet)
    out << "wrote " << out_dir << "/metrics.csv and " << out_dir
        << "/separability_matrix.csv\n";
  return kExitOk;
}

int cmd_etf_sim(int num_classes, int dim, long long steps, double lr,
                std::uint64_t seed, int inits, const std::string& out_dir, bool quiet,
                std::ostream& out) {
  if (inits < 1) throw ConfigError("need at least one initialization");
  if (dim < num_classes - 1)
    out << "warning: dim " << dim << " < K-1 = " << num_classes - 1
        << "; an exact ETF is not realizable, reporting best achievable deviation\n";

  fs::create_directories(out_dir);
  double worst_final = 0.0;
  for (int init = 0; init < inits; ++init) {
    const UniformDynamics dyn =
        run_uniform_dynamics(num_classes, dim, steps, lr,
                             derive_seed(seed, static_cast<std::uint64_t>(init)));
    char name[64];
    std::snprintf(name, sizeof(name), "/trajectory_init%02d.csv", init);
    std::ofstream csv(out_dir + name, std::ios::binary);
    csv << "step,max_cos_deviation,loss\n";
    for (std::size_t t = 0; t < dyn.deviation.size(); ++t)
      csv << t << ',' << format_double(dyn.deviation[t]) << ','
          << format_double(dyn.loss[t]) << "\n";
    worst_final = std::max(worst_final, dyn.final_deviation);
    if (!quiet)
      out << "init " << init << ": final max |cos + 1/(K-1)| = "
          << format_double(dyn.final_deviation) << "\n";
  }
  out << "worst final deviation over " << inits << " init(s): " << format_double(worst_final)
      << "\n";
  return kExitOk;
}

}  // namespace bce3s
