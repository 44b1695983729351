#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bce3s/losses.hpp"
#include "bce3s/types.hpp"

namespace bce3s {

enum class ActivationKind { kSoftmaxCe, kSigmoidBce };

inline ActivationKind activation_for(LossFamily f) {
  return f == LossFamily::kBce ? ActivationKind::kSigmoidBce : ActivationKind::kSoftmaxCe;
}

// dL/dlogit_j of the joint loss. CE: softmax_j - delta_jk over all classes.
// BCE: sigmoid(logit_k) - 1 for the positive, sigmoid(logit_j) for kept
// negatives, 0 for masked ones. The mask is ignored for CE.
Vec joint_logit_grads(std::span<const double> logits, int label,
                      const NegativeMask& mask, ActivationKind family);

// Exact gradient of the joint loss with respect to the raw input feature,
// including the chain rule through feature normalization when the mode
// applies it. The classifier rows act through their effective (normalized)
// versions.
Vec grad_joint_wrt_feature(const LabeledFeature& sample, const Classifier& clf,
                           const NegativeMask& mask, ActivationKind family);

struct ClassifierGrads {
  std::vector<Vec> weights;  // K x d
  Vec biases;                // K
};

// Gradient of the batch-mean joint loss with respect to the effective weight
// rows and biases. Under unit-norm modes this is the direction fed to the
// projected update (radial component removed at step time); under mode None
// it is the exact raw-parameter gradient.
ClassifierGrads grad_joint_wrt_classifier(std::span<const LabeledFeature> batch,
                                          const Classifier& clf,
                                          std::span<const NegativeMask> masks,
                                          ActivationKind family);

// Exact gradient of the contrastive loss through the full cosine, i.e. with
// the tangent-space projection of the normalization chain rule. Bank slots
// are constants. The result is orthogonal to z.
Vec grad_contrastive_wrt_projection(std::span<const double> z, int label,
                                    const MemoryBank& bank, double tau,
                                    ActivationKind family);

// The simplified pulling/repelling form (no cosine chain rule); kept for
// comparison against the exact gradient, not used in training.
Vec grad_contrastive_simplified(std::span<const double> z, int label,
                                const MemoryBank& bank, double tau,
                                ActivationKind family);

// Exact gradient of (1/K) sum_k L_cc(w_k) over the given rows, counting the
// symmetric contribution of each pair to both of its rows.
std::vector<Vec> grad_uniform_raw(std::span<const Vec> weights, ActivationKind family,
                                  bool include_positive);

// Same, on the classifier's effective rows (requires unit norm).
std::vector<Vec> grad_uniform_wrt_classifier(const Classifier& clf,
                                             ActivationKind family,
                                             bool include_positive);

// Remove the component of g parallel to w (per row). Used by the projected
// optimizer step and by the stationarity probes.
Vec project_out_radial(std::span<const double> grad, std::span<const double> w);

// Central differences (f(t + h e_i) - f(t - h e_i)) / 2h per coordinate.
Vec finite_diff(const std::function<double(std::span<const double>)>& loss,
                std::span<const double> theta, double step);

struct GradReport {
  std::string op;
  std::uint64_t seed = 0;
  Vec analytic;
  Vec numeric;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int worst_index = -1;
  bool pass = false;
};

// Relative error with the denominator floored at 1e-8 to absorb near-zero
// coordinates.
GradReport compare_grads(std::string op, std::uint64_t seed, Vec analytic, Vec numeric,
                         double tol);

// Runs every analytic gradient above against central finite differences
// (step 1e-6) for both families over the given seeds.
std::vector<GradReport> gradcheck_suite(std::span<const std::uint64_t> seeds, double tol);

}  // namespace bce3s
