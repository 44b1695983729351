#pragma once

#include <iosfwd>
#include <string>

#include "bce3s/config.hpp"

namespace bce3s {

// Exit-code contract shared by every subcommand:
//   0 success, 2 config/input error, 3 divergence, 4 gradcheck failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitGradcheck = 4;

int cmd_gen_data(const ExperimentConfig& cfg, bool quiet, std::ostream& out);

int cmd_train(const ExperimentConfig& cfg, bool quiet, std::ostream& out);

int cmd_ablation(const AblationGrid& grid, bool quiet, std::ostream& out);

int cmd_gradcheck(double tol, int num_seeds, std::uint64_t base_seed, bool quiet,
                  std::ostream& out);

int cmd_metrics(const std::string& features_path, const std::string& classifier_path,
                const std::string& out_dir, bool quiet, std::ostream& out);

int cmd_etf_sim(int num_classes, int dim, long long steps, double lr,
                std::uint64_t seed, int inits, const std::string& out_dir, bool quiet,
                std::ostream& out);

}  // namespace bce3s
