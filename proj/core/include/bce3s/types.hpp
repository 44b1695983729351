#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bce3s/vecmath.hpp"

namespace bce3s {

enum class LossFamily { kBce, kCe };

enum class Normalization { kNone, kFeatureOnly, kClassifierOnly, kBoth };

std::string to_string(LossFamily f);
std::string to_string(Normalization n);
LossFamily loss_family_from_string(const std::string& s);
Normalization normalization_from_string(const std::string& s);

inline bool normalizes_classifier(Normalization n) {
  return n == Normalization::kClassifierOnly || n == Normalization::kBoth;
}
inline bool normalizes_feature(Normalization n) {
  return n == Normalization::kFeatureOnly || n == Normalization::kBoth;
}

// Weights for the three learning components plus the knobs shared by the
// BCE and CE loss families.
struct LossConfig {
  LossFamily family = LossFamily::kBce;
  double lambda_ss = 0.0;  // weight of the contrastive (sample-to-sample) term
  double lambda_cc = 0.0;  // weight of the uniform (class-to-class) term
  double tau = 0.5;        // contrastive temperature
  double r = 1.0;          // keep probability for each negative sample-to-class term
  double beta = 0.9999;    // class-balanced re-weighting base (stage-2 fine-tune)
  bool include_cc_positive = false;
  Normalization normalization = Normalization::kClassifierOnly;

  void validate() const;  // throws std::invalid_argument on a bad field
};

struct LabeledFeature {
  Vec x;
  int label = 0;
};

// Linear classifier: K weight rows of dimension d plus per-class biases.
// The normalization mode decides whether forward passes use unit-norm rows.
struct Classifier {
  std::vector<Vec> weights;
  Vec biases;
  Normalization normalization = Normalization::kNone;

  int num_classes() const { return static_cast<int>(weights.size()); }
  int dim() const { return weights.empty() ? 0 : static_cast<int>(weights[0].size()); }

  // Weight rows as used by a forward pass (unit-norm when the mode says so).
  std::vector<Vec> effective_weights() const;
  Vec effective_weight(int j) const;

  void validate() const;

  static Classifier random_unit(int num_classes, int dim, Normalization mode,
                                std::uint64_t seed);
};

// keep[j] marks whether the negative term for class j enters the BCE joint
// loss; keep[label] is unused.
struct NegativeMask {
  std::vector<bool> keep;

  static NegativeMask all(int num_classes, bool value = true) {
    return NegativeMask{std::vector<bool>(static_cast<std::size_t>(num_classes), value)};
  }
};

// One slot per class holding the most recently stored unit projection.
struct MemoryBank {
  std::vector<Vec> slots;
  std::vector<bool> initialized;

  int num_slots() const { return static_cast<int>(slots.size()); }
  int dim() const;
  int initialized_count() const;

  static MemoryBank empty(int num_classes, int dim);
};

}  // namespace bce3s
