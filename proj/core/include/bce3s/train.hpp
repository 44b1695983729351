#pragma once

#include <optional>
#include <stdexcept>

#include "bce3s/data.hpp"
#include "bce3s/geometry.hpp"
#include "bce3s/losses.hpp"
#include "bce3s/model.hpp"

namespace bce3s {

struct TrainConfig {
  int epochs_stage1 = 200;
  int epochs_stage2 = 0;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 64;
  LossConfig loss;
  std::uint64_t seed = 42;

  // Model layout.
  std::vector<int> encoder_hidden = {32};  // empty + matching dims = identity
  int feature_dim = 16;
  int projection_dim = 8;
  int projector_hidden = 0;  // 0 = feature_dim
  Nonlinearity nonlinearity = Nonlinearity::kTanh;

  int metric_cadence = 10;  // epochs between metric snapshots; 0 disables

  void validate() const;
};

struct EvalReport {
  double acc_all = 0.0;                 // percent
  std::optional<double> acc_many;
  std::optional<double> acc_medium;
  std::optional<double> acc_few;
  std::vector<double> per_class;        // percent, length K
};

struct EpochStats {
  int epoch = 0;  // 1-based, continuous across the two stages
  int stage = 1;
  double loss_total = 0.0;
  double loss_sc = 0.0;
  double loss_ss = 0.0;  // lambda-weighted contribution
  double loss_cc = 0.0;  // lambda-weighted contribution
  double lr = 0.0;       // value at the first step of the epoch
  double train_acc = 0.0;
  EvalReport eval;
};

struct MetricSnapshot {
  int epoch = 0;
  MetricReport report;
};

struct History {
  std::vector<EpochStats> epochs;
  std::vector<MetricSnapshot> metrics;
};

// Loss became non-finite; carries the last epoch that completed finitely.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& msg, int last_finite_epoch)
      : std::runtime_error(msg), last_finite_epoch_(last_finite_epoch) {}
  int last_finite_epoch() const { return last_finite_epoch_; }

 private:
  int last_finite_epoch_;
};

// lr0 * (1 + cos(pi t / T)) / 2, applied per iteration.
double cosine_lr(long long step, long long total_steps, double lr0);

// v <- momentum v + grad + weight_decay param; param <- param - lr v.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum,
                       double weight_decay);

// Unit-norm variant for classifier rows: the radial component of the step
// direction is removed once the velocity is formed, and the row is
// renormalized after the update.
void sgd_momentum_step_unit(std::span<double> row, std::span<const double> grads,
                            std::span<double> velocity, double lr, double momentum,
                            double weight_decay);

Model make_model(const TrainConfig& cfg, int input_dim, int num_classes);

// The exact objective a training step differentiates, as a pure function of
// the model; exposed so tests can arbitrate the backward pass by finite
// differences.
TripartiteParts batch_objective(const Model& model,
                                std::span<const LabeledFeature> batch_inputs,
                                const MemoryBank& bank, const LossConfig& cfg,
                                std::span<const NegativeMask> masks);

struct TrainResult {
  Model model;
  MemoryBank bank;
  History history;
};

// Stage 1: batch SGD on the tripartite loss. Deterministic given (cfg, seed).
// The memory bank starts cold (all slots uninitialized) unless a warm bank is
// injected.
TrainResult train_stage1(Model model, const Dataset& ds, const TrainConfig& cfg,
                         const MemoryBank* initial_bank = nullptr);

// Stage 2: encoder and projector frozen, classifier fine-tuned with the
// class-balanced joint loss of the configured family, r forced to 1.
void finetune_stage2(Model& model, const Dataset& ds, const TrainConfig& cfg,
                     History* history = nullptr);

EvalReport evaluate(const Model& model, std::span<const LabeledFeature> test,
                    const SubsetSplit& split);

struct UniformDynamics {
  std::vector<double> deviation;  // max pairwise |cos + 1/(K-1)| per step (index 0 = init)
  std::vector<double> loss;       // (1/K) sum_k L_cc per step
  std::vector<Vec> weights;       // final rows
  double final_deviation = 0.0;
};

// Projected gradient descent on the BCE uniform loss alone over K unit
// vectors; the probe behind the etf-sim command.
UniformDynamics run_uniform_dynamics(int num_classes, int dim, long long steps,
                                     double lr, std::uint64_t seed);

}  // namespace bce3s
