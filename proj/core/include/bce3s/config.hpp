#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bce3s/data.hpp"
#include "bce3s/train.hpp"

namespace bce3s {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One experiment: dataset spec + loss + training schedule + output layout.
// Parsed from a JSON document with sections "data", "loss", "train" plus
// top-level "out_dir" and "dataset_dir". Unknown keys are hard errors.
struct ExperimentConfig {
  LongTailSpec data;
  TrainConfig train;  // train.loss holds the LossConfig
  std::string out_dir = "out";
  std::string dataset_dir;  // defaults to out_dir

  std::string train_dump_path() const;
  std::string test_dump_path() const;
  void validate() const;
};

struct AblationVariant {
  std::string name;
  std::string patch_json;  // partial {"loss": ..., "train": ...} overrides
};

struct AblationGrid {
  ExperimentConfig base;
  std::string base_json;  // base document, for re-patching per variant
  std::vector<std::uint64_t> seeds;
  std::vector<AblationVariant> variants;
};

// Environment overrides: BCE3S_<section>__<key>=<value> (double underscore
// nests), e.g. BCE3S_loss__lambda_ss=2.5 or BCE3S_out_dir=/tmp/run.
// Values parse as JSON scalars, falling back to strings.
ExperimentConfig load_experiment_config(const std::string& path,
                                        bool apply_env_overrides = true);
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         bool apply_env_overrides = true);

AblationGrid load_ablation_grid(const std::string& path, bool apply_env_overrides = true);

// Base document with a variant patch merged in (loss/train sections only).
ExperimentConfig apply_variant(const AblationGrid& grid, const AblationVariant& variant,
                               std::uint64_t seed);

}  // namespace bce3s
