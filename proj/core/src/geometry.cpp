#include "bce3s/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bce3s/rng.hpp"

namespace bce3s {
namespace {

std::vector<std::vector<std::size_t>> group_by_class(
    std::span<const LabeledFeature> features, int num_classes) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int label = features[i].label;
    if (label < 0 || label >= num_classes)
      throw std::invalid_argument("feature label out of range");
    groups[static_cast<std::size_t>(label)].push_back(i);
  }
  return groups;
}

int infer_num_classes(std::span<const LabeledFeature> features) {
  int max_label = -1;
  for (const auto& f : features) max_label = std::max(max_label, f.label);
  return max_label + 1;
}

std::vector<Vec> centered_rows(const std::vector<Vec>& rows) {
  const std::size_t K = rows.size();
  const std::size_t d = rows[0].size();
  Vec mean(d, 0.0);
  for (const auto& row : rows) axpy(1.0, row, mean);
  scale_in_place(mean, 1.0 / static_cast<double>(K));
  std::vector<Vec> out(K, Vec(d));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < d; ++i) out[k][i] = rows[k][i] - mean[i];
  return out;
}

}  // namespace

double metric_mean(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) throw std::domain_error("metric undefined for every class");
  return sum / static_cast<double>(n);
}

double metric_std(std::span<const std::optional<double>> values) {
  const double mean = metric_mean(values);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += (*v - mean) * (*v - mean);
    ++n;
  }
  return std::sqrt(sum / static_cast<double>(n));
}

double MetricReport::mean_compactness() const { return metric_mean(compactness); }
double MetricReport::std_compactness() const { return metric_std(compactness); }
double MetricReport::mean_feature_sep() const { return metric_mean(feature_sep); }
double MetricReport::std_feature_sep() const { return metric_std(feature_sep); }
double MetricReport::mean_classifier_sep() const { return metric_mean(classifier_sep); }
double MetricReport::std_classifier_sep() const { return metric_std(classifier_sep); }

std::vector<std::optional<double>> intra_class_compactness(
    std::span<const LabeledFeature> features, ZeroVectorDiagnostics* diag) {
  const int K = infer_num_classes(features);
  const auto groups = group_by_class(features, K);
  std::vector<std::optional<double>> out(static_cast<std::size_t>(K));

  for (int k = 0; k < K; ++k) {
    const auto& idx = groups[static_cast<std::size_t>(k)];
    if (idx.size() < 2) continue;

    // Sum of pairwise cosines over ordered pairs of the m usable (nonzero)
    // unit vectors equals ||sum u_i||^2 - m.
    Vec acc;
    std::size_t m = 0;
    for (const std::size_t i : idx) {
      const Vec& x = features[i].x;
      const double nx = norm(x);
      if (nx == 0.0) continue;
      if (acc.empty()) acc.assign(x.size(), 0.0);
      axpy(1.0 / nx, x, acc);
      ++m;
    }
    if (diag) {
      const long long n = static_cast<long long>(idx.size());
      const long long mm = static_cast<long long>(m);
      diag->skipped += n * (n - 1) - mm * (mm - 1);
    }
    if (m < 2) continue;
    const double pair_cos_sum = squared_norm(acc) - static_cast<double>(m);
    const double pairs = static_cast<double>(m) * static_cast<double>(m - 1);
    out[static_cast<std::size_t>(k)] = (pair_cos_sum / pairs + 1.0) / 2.0 * 100.0;
  }
  return out;
}

std::vector<std::optional<double>> inter_class_feature_separability(
    std::span<const LabeledFeature> features, int num_classes,
    ZeroVectorDiagnostics* diag) {
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  const auto groups = group_by_class(features, num_classes);
  for (const auto& g : groups)
    if (g.empty()) throw std::invalid_argument("every class must be nonempty");

  const std::size_t d = features[0].x.size();
  const std::size_t K = static_cast<std::size_t>(num_classes);

  std::vector<Vec> class_mean(K, Vec(d, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    for (const std::size_t i : groups[k]) axpy(1.0, features[i].x, class_mean[k]);
    scale_in_place(class_mean[k], 1.0 / static_cast<double>(groups[k].size()));
  }

  // Unit mean directions; classes whose raw mean is a zero vector cannot be
  // compared against and are skipped pair-wise.
  std::vector<bool> mean_usable(K, false);
  std::vector<Vec> mean_unit(K);
  Vec mean_unit_sum(d, 0.0);
  std::size_t usable_means = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double n = norm(class_mean[k]);
    if (n == 0.0) continue;
    mean_usable[k] = true;
    mean_unit[k] = class_mean[k];
    scale_in_place(mean_unit[k], 1.0 / n);
    axpy(1.0, mean_unit[k], mean_unit_sum);
    ++usable_means;
  }

  std::vector<std::optional<double>> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    // Other-class means usable for this class.
    const std::size_t others = usable_means - (mean_usable[k] ? 1 : 0);
    Vec others_sum = mean_unit_sum;
    if (mean_usable[k]) axpy(-1.0, mean_unit[k], others_sum);
    if (diag && others < K - 1)
      diag->skipped +=
          static_cast<long long>(groups[k].size()) * static_cast<long long>(K - 1 - others);
    if (others == 0) continue;

    double term_sum = 0.0;
    std::size_t terms = 0;
    Vec centered(d);
    for (const std::size_t i : groups[k]) {
      for (std::size_t t = 0; t < d; ++t) centered[t] = features[i].x[t] - class_mean[k][t];
      const double n = norm(centered);
      if (n == 0.0) {
        if (diag) diag->skipped += static_cast<long long>(others);
        continue;
      }
      // sum over usable j != k of (1 - cos)/2.
      const double cos_sum = dot(centered, others_sum) / n;
      term_sum += (static_cast<double>(others) - cos_sum) / 2.0;
      terms += others;
    }
    if (terms == 0) continue;
    out[k] = term_sum / static_cast<double>(terms) * 100.0;
  }
  return out;
}

std::vector<double> classifier_separability(const Classifier& clf) {
  clf.validate();
  const int K = clf.num_classes();
  if (K < 2) throw std::invalid_argument("need at least two classifier rows");
  const auto centered = centered_rows(clf.weights);
  std::vector<Vec> unit(centered.size());
  for (std::size_t k = 0; k < centered.size(); ++k) {
    if (norm(centered[k]) == 0.0)
      throw std::domain_error(
          "classifier separability undefined: centered row is zero (identical rows)");
    unit[k] = normalized(centered[k]);
  }
  Vec unit_sum(unit[0].size(), 0.0);
  for (const auto& u : unit) axpy(1.0, u, unit_sum);

  std::vector<double> out(static_cast<std::size_t>(K));
  for (std::size_t k = 0; k < unit.size(); ++k) {
    const double cos_sum = dot(unit[k], unit_sum) - 1.0;  // exclude self (cos = 1)
    out[k] = (static_cast<double>(K - 1) - cos_sum) / 2.0 /
             static_cast<double>(K - 1) * 100.0;
  }
  return out;
}

SeparabilityMatrix separability_matrix(const Classifier& clf) {
  clf.validate();
  const int K = clf.num_classes();
  if (K < 2) throw std::invalid_argument("need at least two classifier rows");
  const auto centered = centered_rows(clf.weights);
  std::vector<Vec> unit(centered.size());
  for (std::size_t k = 0; k < centered.size(); ++k) {
    if (norm(centered[k]) == 0.0)
      throw std::domain_error(
          "separability matrix undefined: centered row is zero (identical rows)");
    unit[k] = normalized(centered[k]);
  }

  SeparabilityMatrix mat;
  mat.num_classes = K;
  mat.s.assign(static_cast<std::size_t>(K) * K, 0.0);
  for (int j = 0; j < K; ++j) {
    mat.s[static_cast<std::size_t>(j) * K + j] = 1.0;
    for (int k = j + 1; k < K; ++k) {
      const double v = (1.0 - dot(unit[static_cast<std::size_t>(j)],
                                  unit[static_cast<std::size_t>(k)])) /
                       2.0;
      mat.s[static_cast<std::size_t>(j) * K + k] = v;
      mat.s[static_cast<std::size_t>(k) * K + j] = v;
    }
  }
  return mat;
}

MetricReport metric_report(std::span<const LabeledFeature> features,
                           const Classifier& clf) {
  MetricReport report;
  ZeroVectorDiagnostics diag;
  report.compactness = intra_class_compactness(features, &diag);
  report.feature_sep =
      inter_class_feature_separability(features, clf.num_classes(), &diag);
  report.classifier_sep.clear();
  for (double v : classifier_separability(clf)) report.classifier_sep.push_back(v);
  report.skipped_cosines = diag.skipped;
  return report;
}

EtfReport etf_deviation(const Classifier& clf) {
  clf.validate();
  const int K = clf.num_classes();
  if (K < 2) throw std::invalid_argument("need at least two classifier rows");
  EtfReport report;
  report.target_cos = -1.0 / static_cast<double>(K - 1);
  report.realizable = K <= clf.dim() + 1;

  const auto centered = centered_rows(clf.weights);
  std::vector<Vec> unit(centered.size());
  for (std::size_t k = 0; k < centered.size(); ++k) {
    if (norm(centered[k]) == 0.0)
      throw std::domain_error("ETF deviation undefined: centered row is zero");
    unit[k] = normalized(centered[k]);
  }
  for (std::size_t j = 0; j < unit.size(); ++j) {
    for (std::size_t k = j + 1; k < unit.size(); ++k) {
      const double dev = std::abs(dot(unit[j], unit[k]) - report.target_cos);
      report.max_pairwise_cos_deviation = std::max(report.max_pairwise_cos_deviation, dev);
    }
  }

  double max_norm = 0.0;
  for (const auto& row : clf.weights) max_norm = std::max(max_norm, norm(row));
  for (std::size_t j = 0; j < clf.weights.size(); ++j) {
    for (std::size_t k = j + 1; k < clf.weights.size(); ++k) {
      const double mismatch =
          std::abs(norm(clf.weights[j]) - norm(clf.weights[k])) / max_norm;
      report.max_norm_deviation = std::max(report.max_norm_deviation, mismatch);
    }
  }
  return report;
}

std::vector<Vec> construct_etf(int num_classes, int dim, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  if (dim < num_classes - 1)
    throw std::invalid_argument("simplex ETF needs dim >= K - 1");
  const std::size_t K = static_cast<std::size_t>(num_classes);
  const std::size_t m = K - 1;

  // Simplex vertices in R^(K-1): v_k = e_k - (1/K) 1 expressed in the
  // Helmert basis of the hyperplane orthogonal to 1, then normalized. The
  // Helmert rows are exactly orthonormal, so pairwise inner products come
  // out at -1/(K-1) to machine precision.
  std::vector<Vec> coords(K, Vec(m, 0.0));
  for (std::size_t j = 0; j < m; ++j) {
    // Helmert row j (0-based): (1,...,1, -(j+1), 0,...,0)/sqrt((j+1)(j+2))
    // with j+1 leading ones.
    const double denom = std::sqrt(static_cast<double>((j + 1) * (j + 2)));
    for (std::size_t k = 0; k < K; ++k) {
      double h = 0.0;
      if (k < j + 1)
        h = 1.0 / denom;
      else if (k == j + 1)
        h = -static_cast<double>(j + 1) / denom;
      // coordinate of v_k = e_k - (1/K)1: the -(1/K)1 part is orthogonal to
      // every Helmert row, so only the e_k component survives.
      coords[k][j] = h;
    }
  }
  for (auto& c : coords) normalize_in_place(c);

  // Random orthonormal frame Q (d x m) via Householder QR of a Gaussian
  // matrix; w_k = Q c_k preserves the inner products.
  Rng rng(seed);
  const std::size_t d = static_cast<std::size_t>(dim);
  std::vector<Vec> a(m, Vec(d));
  for (auto& col : a)
    for (auto& v : col) v = rng.gaussian();

  // Modified Gram-Schmidt with one re-orthogonalization pass.
  std::vector<Vec> q;
  q.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    Vec v = a[j];
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& prev : q) axpy(-dot(v, prev), prev, v);
    }
    const double n = norm(v);
    if (n < 1e-12) throw std::runtime_error("degenerate random frame; retry with a new seed");
    scale_in_place(v, 1.0 / n);
    q.push_back(std::move(v));
  }

  std::vector<Vec> weights(K, Vec(d, 0.0));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < m; ++j) axpy(coords[k][j], q[j], weights[k]);
  return weights;
}

}  // namespace bce3s
