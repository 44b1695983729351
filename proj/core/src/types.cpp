#include "bce3s/types.hpp"

#include <stdexcept>

#include "bce3s/rng.hpp"

namespace bce3s {

std::string to_string(LossFamily f) {
  return f == LossFamily::kBce ? "bce" : "ce";
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::kNone: return "none";
    case Normalization::kFeatureOnly: return "feature";
    case Normalization::kClassifierOnly: return "classifier";
    case Normalization::kBoth: return "both";
  }
  return "none";
}

LossFamily loss_family_from_string(const std::string& s) {
  if (s == "bce") return LossFamily::kBce;
  if (s == "ce") return LossFamily::kCe;
  throw std::invalid_argument("unknown loss family '" + s + "' (expected bce|ce)");
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "none") return Normalization::kNone;
  if (s == "feature") return Normalization::kFeatureOnly;
  if (s == "classifier") return Normalization::kClassifierOnly;
  if (s == "both") return Normalization::kBoth;
  throw std::invalid_argument("unknown normalization '" + s +
                              "' (expected none|feature|classifier|both)");
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("r must be in (0, 1]");
  if (lambda_ss < 0.0) throw std::invalid_argument("lambda_ss must be >= 0");
  if (lambda_cc < 0.0) throw std::invalid_argument("lambda_cc must be >= 0");
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in [0, 1)");
}

std::vector<Vec> Classifier::effective_weights() const {
  std::vector<Vec> out = weights;
  if (normalizes_classifier(normalization)) {
    for (auto& row : out) normalize_in_place(row);
  }
  return out;
}

Vec Classifier::effective_weight(int j) const {
  Vec w = weights.at(static_cast<std::size_t>(j));
  if (normalizes_classifier(normalization)) normalize_in_place(w);
  return w;
}

void Classifier::validate() const {
  if (weights.empty()) throw std::invalid_argument("classifier has no weight rows");
  const std::size_t d = weights[0].size();
  if (d == 0) throw std::invalid_argument("classifier dimension must be >= 1");
  for (const auto& row : weights) {
    if (row.size() != d) throw std::invalid_argument("classifier rows have mixed dimensions");
    if (!all_finite(row)) throw std::invalid_argument("classifier weights must be finite");
  }
  if (biases.size() != weights.size())
    throw std::invalid_argument("bias count must equal class count");
}

Classifier Classifier::random_unit(int num_classes, int dim, Normalization mode,
                                   std::uint64_t seed) {
  Rng rng(seed);
  Classifier clf;
  clf.normalization = mode;
  clf.weights.resize(static_cast<std::size_t>(num_classes));
  for (auto& row : clf.weights) {
    row.resize(static_cast<std::size_t>(dim));
    double n2 = 0.0;
    do {
      for (auto& v : row) v = rng.gaussian();
      n2 = squared_norm(row);
    } while (n2 == 0.0);
    normalize_in_place(row);
  }
  clf.biases.assign(static_cast<std::size_t>(num_classes), 0.0);
  return clf;
}

int MemoryBank::dim() const {
  for (std::size_t k = 0; k < slots.size(); ++k)
    if (initialized[k]) return static_cast<int>(slots[k].size());
  return 0;
}

int MemoryBank::initialized_count() const {
  int n = 0;
  for (bool b : initialized) n += b ? 1 : 0;
  return n;
}

MemoryBank MemoryBank::empty(int num_classes, int dim) {
  MemoryBank bank;
  bank.slots.assign(static_cast<std::size_t>(num_classes),
                    Vec(static_cast<std::size_t>(dim), 0.0));
  bank.initialized.assign(static_cast<std::size_t>(num_classes), false);
  return bank;
}

}  // namespace bce3s
