#pragma once

#include <optional>
#include <span>

#include "bce3s/rng.hpp"
#include "bce3s/types.hpp"

namespace bce3s {

// log(1 + exp(x)) without overflow anywhere on the real line.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> v);

// Sample-to-class metrics w~_j . x~ + b_j under the classifier's
// normalization mode.
Vec joint_logits(const LabeledFeature& sample, const Classifier& clf);

// Loss cores on precomputed metrics; the feature-level entry points below
// and the training loop share these.
double ce_joint_from_logits(std::span<const double> logits, int label);
double bce_joint_from_logits(std::span<const double> logits, int label,
                             const NegativeMask& mask);

// -log softmax_k over all K classes.
double ce_joint(const LabeledFeature& sample, const Classifier& clf);

// softplus(-logit_k) plus the kept negative softplus(logit_j) terms.
double bce_joint(const LabeledFeature& sample, const Classifier& clf,
                 const NegativeMask& mask);

// One independent Bernoulli(r) draw per negative class. keep[label] stays true
// but is never read.
NegativeMask draw_negative_mask(int label, int num_classes, double r, Rng& rng);

// Cosine similarities of z against every initialized bank slot; entries for
// uninitialized slots are left at 0 and must be ignored via bank.initialized.
Vec bank_cosines(std::span<const double> z, const MemoryBank& bank);

// Contrastive losses over the initialized bank slots. nullopt = the sample's
// own slot is uninitialized and the sample is skipped.
std::optional<double> ce_contrastive(std::span<const double> z, int label,
                                     const MemoryBank& bank, double tau);
std::optional<double> bce_contrastive(std::span<const double> z, int label,
                                      const MemoryBank& bank, double tau);

// Class-to-class uniform losses on the effective (unit-norm) classifier rows.
// Throws if the effective rows are not unit norm.
double bce_uniform(const Classifier& clf, int label, bool include_positive);
double ce_uniform(const Classifier& clf, int label);

// Unchecked cores over arbitrary weight rows; used by the public entry points,
// the gradients, and the finite-difference harness.
double bce_uniform_raw(std::span<const Vec> weights, int label, bool include_positive);
double ce_uniform_raw(std::span<const Vec> weights, int label);

// (1 - beta) / (1 - beta^n): per-sample weight for class-balanced fine-tuning.
double cb_weight(long long n_k, double beta);

struct TripartiteParts {
  double sc = 0.0;  // (1/B) sum of joint losses
  double ss = 0.0;  // (lambda_ss/B) sum of contrastive losses
  double cc = 0.0;  // (lambda_cc/K) sum of uniform losses
  double total() const { return sc + ss + cc; }
};

// Batch loss with explicit per-sample negative masks (masks ignored for CE).
// Samples whose own bank slot is uninitialized contribute zero to ss.
TripartiteParts tripartite_parts(std::span<const LabeledFeature> batch,
                                 std::span<const Vec> projections,
                                 const Classifier& clf, const MemoryBank& bank,
                                 const LossConfig& cfg,
                                 std::span<const NegativeMask> masks);

// Convenience entry point drawing fresh masks from rng (one per sample, in
// batch order).
double tripartite_loss(std::span<const LabeledFeature> batch,
                       std::span<const Vec> projections, const Classifier& clf,
                       const MemoryBank& bank, const LossConfig& cfg, Rng& rng);

}  // namespace bce3s
