#include "bce3s/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bce3s {
namespace {

// Loose enough for finite-difference probes of the loss surface, tight
// enough to reject rows that were never normalized.
constexpr double kUnitNormTol = 1e-5;

void check_dims(const LabeledFeature& sample, const Classifier& clf) {
  if (clf.num_classes() < 1) throw std::invalid_argument("classifier has no classes");
  if (static_cast<int>(sample.x.size()) != clf.dim())
    throw std::invalid_argument("feature dimension does not match classifier");
  if (sample.label < 0 || sample.label >= clf.num_classes())
    throw std::invalid_argument("label out of range");
}

void check_unit_rows(std::span<const Vec> weights) {
  for (const auto& w : weights) {
    if (std::abs(norm(w) - 1.0) > kUnitNormTol)
      throw std::invalid_argument(
          "uniform loss requires unit-norm classifier rows; enable classifier "
          "normalization or pass unit vectors");
  }
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Vec joint_logits(const LabeledFeature& sample, const Classifier& clf) {
  check_dims(sample, clf);
  Vec x = sample.x;
  if (normalizes_feature(clf.normalization)) normalize_in_place(x);
  const auto weights = clf.effective_weights();
  Vec logits(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j)
    logits[j] = dot(weights[j], x) + clf.biases[j];
  return logits;
}

double ce_joint_from_logits(std::span<const double> logits, int label) {
  const std::size_t k = static_cast<std::size_t>(label);
  double m = -std::numeric_limits<double>::infinity();
  for (double x : logits) m = std::max(m, x);
  if (logits[k] == m) {
    // Anchor on the label logit: log(1 + sum_{j!=k} e^{x_j - x_k}) keeps the
    // loss strictly positive instead of cancelling against the max.
    double s = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j)
      if (j != k) s += std::exp(logits[j] - logits[k]);
    return std::log1p(s);
  }
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  return (m - logits[k]) + std::log(s);
}

double bce_joint_from_logits(std::span<const double> logits, int label,
                             const NegativeMask& mask) {
  if (mask.keep.size() != logits.size())
    throw std::invalid_argument("mask length does not match class count");
  const std::size_t k = static_cast<std::size_t>(label);
  double loss = softplus(-logits[k]);
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j == k || !mask.keep[j]) continue;
    loss += softplus(logits[j]);
  }
  return loss;
}

double ce_joint(const LabeledFeature& sample, const Classifier& clf) {
  return ce_joint_from_logits(joint_logits(sample, clf), sample.label);
}

double bce_joint(const LabeledFeature& sample, const Classifier& clf,
                 const NegativeMask& mask) {
  return bce_joint_from_logits(joint_logits(sample, clf), sample.label, mask);
}

NegativeMask draw_negative_mask(int label, int num_classes, double r, Rng& rng) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("r must be in (0, 1]");
  NegativeMask mask = NegativeMask::all(num_classes, true);
  if (r == 1.0) return mask;
  for (int j = 0; j < num_classes; ++j) {
    if (j == label) continue;
    mask.keep[static_cast<std::size_t>(j)] = rng.uniform() < r;
  }
  return mask;
}

Vec bank_cosines(std::span<const double> z, const MemoryBank& bank) {
  const double nz = norm(z);
  if (nz == 0.0) throw std::domain_error("projection has zero norm");
  Vec cos(bank.slots.size(), 0.0);
  for (std::size_t j = 0; j < bank.slots.size(); ++j) {
    if (!bank.initialized[j]) continue;
    cos[j] = dot(z, bank.slots[j]) / (nz * norm(bank.slots[j]));
  }
  return cos;
}

std::optional<double> ce_contrastive(std::span<const double> z, int label,
                                     const MemoryBank& bank, double tau) {
  const std::size_t k = static_cast<std::size_t>(label);
  if (k >= bank.slots.size()) throw std::invalid_argument("label out of range");
  if (!bank.initialized[k]) return std::nullopt;
  const Vec cos = bank_cosines(z, bank);
  Vec scaled;
  scaled.reserve(cos.size());
  for (std::size_t j = 0; j < cos.size(); ++j)
    if (bank.initialized[j]) scaled.push_back(cos[j] / tau);
  return log_sum_exp(scaled) - cos[k] / tau;
}

std::optional<double> bce_contrastive(std::span<const double> z, int label,
                                      const MemoryBank& bank, double tau) {
  const std::size_t k = static_cast<std::size_t>(label);
  if (k >= bank.slots.size()) throw std::invalid_argument("label out of range");
  if (!bank.initialized[k]) return std::nullopt;
  const Vec cos = bank_cosines(z, bank);
  double loss = softplus(-cos[k] / tau);
  for (std::size_t j = 0; j < cos.size(); ++j) {
    if (j == k || !bank.initialized[j]) continue;
    loss += softplus(cos[j] / tau);
  }
  return loss;
}

double bce_uniform_raw(std::span<const Vec> weights, int label, bool include_positive) {
  const std::size_t k = static_cast<std::size_t>(label);
  double loss = include_positive ? softplus(-dot(weights[k], weights[k])) : 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (j == k) continue;
    loss += softplus(dot(weights[k], weights[j]));
  }
  return loss;
}

double ce_uniform_raw(std::span<const Vec> weights, int label) {
  const std::size_t k = static_cast<std::size_t>(label);
  Vec dots(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) dots[j] = dot(weights[k], weights[j]);
  return log_sum_exp(dots) - dots[k];
}

double bce_uniform(const Classifier& clf, int label, bool include_positive) {
  const auto weights = clf.effective_weights();
  check_unit_rows(weights);
  return bce_uniform_raw(weights, label, include_positive);
}

double ce_uniform(const Classifier& clf, int label) {
  const auto weights = clf.effective_weights();
  check_unit_rows(weights);
  return ce_uniform_raw(weights, label);
}

double cb_weight(long long n_k, double beta) {
  if (n_k < 1) throw std::invalid_argument("class count must be >= 1");
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in [0, 1)");
  if (beta == 0.0) return 1.0;
  // 1 - beta^n via expm1 keeps the denominator accurate for beta near 1.
  const double denom = -std::expm1(static_cast<double>(n_k) * std::log(beta));
  return (1.0 - beta) / denom;
}

TripartiteParts tripartite_parts(std::span<const LabeledFeature> batch,
                                 std::span<const Vec> projections,
                                 const Classifier& clf, const MemoryBank& bank,
                                 const LossConfig& cfg,
                                 std::span<const NegativeMask> masks) {
  if (batch.empty()) throw std::invalid_argument("batch must be nonempty");
  if (projections.size() != batch.size())
    throw std::invalid_argument("projections must align with batch");
  cfg.validate();

  const double B = static_cast<double>(batch.size());
  const int K = clf.num_classes();
  TripartiteParts parts;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec logits = joint_logits(batch[i], clf);
    if (cfg.family == LossFamily::kBce) {
      parts.sc += bce_joint_from_logits(logits, batch[i].label, masks[i]);
    } else {
      parts.sc += ce_joint_from_logits(logits, batch[i].label);
    }
  }
  parts.sc /= B;

  if (cfg.lambda_ss > 0.0) {
    double ss_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto loss = cfg.family == LossFamily::kBce
                            ? bce_contrastive(projections[i], batch[i].label, bank, cfg.tau)
                            : ce_contrastive(projections[i], batch[i].label, bank, cfg.tau);
      if (loss) ss_sum += *loss;
    }
    parts.ss = cfg.lambda_ss / B * ss_sum;
  }

  if (cfg.lambda_cc > 0.0) {
    const auto weights = clf.effective_weights();
    check_unit_rows(weights);
    double cc_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      cc_sum += cfg.family == LossFamily::kBce
                    ? bce_uniform_raw(weights, k, cfg.include_cc_positive)
                    : ce_uniform_raw(weights, k);
    }
    parts.cc = cfg.lambda_cc / static_cast<double>(K) * cc_sum;
  }

  return parts;
}

double tripartite_loss(std::span<const LabeledFeature> batch,
                       std::span<const Vec> projections, const Classifier& clf,
                       const MemoryBank& bank, const LossConfig& cfg, Rng& rng) {
  std::vector<NegativeMask> masks;
  masks.reserve(batch.size());
  for (const auto& sample : batch)
    masks.push_back(draw_negative_mask(sample.label, clf.num_classes(), cfg.r, rng));
  return tripartite_parts(batch, projections, clf, bank, cfg, masks).total();
}

}  // namespace bce3s
