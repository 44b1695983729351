#pragma once

#include <string>
#include <vector>

#include "bce3s/geometry.hpp"
#include "bce3s/train.hpp"
#include "bce3s/types.hpp"

namespace bce3s {

// Input-file problem (missing, malformed, wrong counts); message carries the
// offending line number where applicable.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full-precision decimal (17 significant digits); round-trips doubles exactly.
std::string format_double(double v);

struct FeatureDump {
  std::vector<LabeledFeature> features;
  int num_classes = 0;
  int dim = 0;
};

// Format, one file:
//   ltr-dump v1, K, d, count
//   label, x_0, ..., x_{d-1}          (count rows)
// A checkpoint appends a classifier block after the rows:
//   ltr-classifier v1, K, d, mode
//   w_0, ..., w_{d-1}, bias           (K rows)
void write_feature_dump(std::ostream& out, const FeatureDump& dump);
void write_classifier_block(std::ostream& out, const Classifier& clf);

void write_feature_dump_file(const std::string& path, const FeatureDump& dump);
void write_checkpoint_file(const std::string& path, const FeatureDump& features,
                           const Classifier& clf);

// Readers accept either a bare dump or a checkpoint (the feature reader stops
// at the classifier header; the classifier reader scans for it).
FeatureDump read_feature_dump_file(const std::string& path);
Classifier read_classifier_file(const std::string& path);

void write_history_csv(const std::string& path, const History& history);
void write_metric_csv(const std::string& path, const MetricReport& report);
void write_separability_csv(const std::string& path, const SeparabilityMatrix& matrix);

std::string metric_summary_line(const MetricReport& report);

bool files_byte_identical(const std::string& a, const std::string& b);

}  // namespace bce3s
