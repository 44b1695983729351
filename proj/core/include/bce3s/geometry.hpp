#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bce3s/types.hpp"

namespace bce3s {

// Per-class geometry metrics, each rescaled to [0, 100]. Classes where a
// metric is undefined (fewer than two samples, or no usable cosine pairs)
// carry nullopt rather than a sentinel value.
struct MetricReport {
  std::vector<std::optional<double>> compactness;        // E^(x,com)
  std::vector<std::optional<double>> feature_sep;        // E^(x,sep)
  std::vector<std::optional<double>> classifier_sep;     // E^(w,sep)
  long long skipped_cosines = 0;  // zero-vector pairs excluded from the means

  double mean_compactness() const;
  double std_compactness() const;
  double mean_feature_sep() const;
  double std_feature_sep() const;
  double mean_classifier_sep() const;
  double std_classifier_sep() const;
};

// Summary helpers over optional-valued per-class metrics (absent classes
// excluded; population standard deviation).
double metric_mean(std::span<const std::optional<double>> values);
double metric_std(std::span<const std::optional<double>> values);

struct SeparabilityMatrix {
  int num_classes = 0;
  std::vector<double> s;  // K x K row-major; diagonal exactly 1

  double at(int j, int k) const { return s[static_cast<std::size_t>(j) * num_classes + k]; }
};

struct EtfReport {
  double target_cos = 0.0;                // -1/(K-1)
  double max_pairwise_cos_deviation = 0.0;
  double max_norm_deviation = 0.0;        // relative mismatch of row norms
  bool realizable = true;                 // K <= d + 1
};

struct ZeroVectorDiagnostics {
  long long skipped = 0;
};

// Mean over ordered same-class pairs of (cos + 1)/2 * 100. Classes with
// fewer than two usable samples report nullopt.
std::vector<std::optional<double>> intra_class_compactness(
    std::span<const LabeledFeature> features, ZeroVectorDiagnostics* diag = nullptr);

// Mean over (sample, other-class) pairs of (1 - cos(x^_i, xbar_j))/2 * 100,
// where x^_i centers the sample by its own class mean and xbar_j is the raw
// mean of class j. Zero-vector cosines are skipped and counted.
std::vector<std::optional<double>> inter_class_feature_separability(
    std::span<const LabeledFeature> features, int num_classes,
    ZeroVectorDiagnostics* diag = nullptr);

// Mean over other classes of (1 - cos(w^_k, w^_j))/2 * 100 on centered rows.
std::vector<double> classifier_separability(const Classifier& clf);

SeparabilityMatrix separability_matrix(const Classifier& clf);

MetricReport metric_report(std::span<const LabeledFeature> features,
                           const Classifier& clf);

EtfReport etf_deviation(const Classifier& clf);

// K unit vectors with pairwise inner products exactly -1/(K-1), randomly
// oriented in d dimensions. Requires d >= K-1.
std::vector<Vec> construct_etf(int num_classes, int dim, std::uint64_t seed);

}  // namespace bce3s
