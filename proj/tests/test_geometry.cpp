#include <doctest.h>

#include <cmath>

#include "bce3s/geometry.hpp"
#include "bce3s/rng.hpp"
#include "oracles.hpp"

using namespace bce3s;

namespace {

Vec random_vec(Rng& rng, int d) {
  Vec x(static_cast<std::size_t>(d));
  for (auto& v : x) v = rng.gaussian();
  return x;
}

std::vector<LabeledFeature> random_cloud(Rng& rng, int n, int K, int d) {
  std::vector<LabeledFeature> out;
  for (int i = 0; i < n; ++i)
    out.push_back({random_vec(rng, d), static_cast<int>(rng.below(K))});
  // Guarantee every class at least two samples.
  for (int k = 0; k < K; ++k) {
    out.push_back({random_vec(rng, d), k});
    out.push_back({random_vec(rng, d), k});
  }
  return out;
}

Classifier classifier_from_rows(std::vector<Vec> rows) {
  Classifier clf;
  clf.weights = std::move(rows);
  clf.biases.assign(clf.weights.size(), 0.0);
  clf.normalization = Normalization::kNone;
  return clf;
}

// Householder-free random rotation via Gram-Schmidt on a Gaussian matrix.
std::vector<Vec> random_rotation(Rng& rng, int d) {
  std::vector<Vec> q;
  for (int j = 0; j < d; ++j) {
    Vec v = random_vec(rng, d);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& prev : q) axpy(-dot(v, prev), prev, v);
    normalize_in_place(v);
    q.push_back(std::move(v));
  }
  return q;
}

Vec rotate(const std::vector<Vec>& q, const Vec& x) {
  Vec out(x.size(), 0.0);
  for (std::size_t r = 0; r < q.size(); ++r) out[r] = dot(q[r], x);
  return out;
}

}  // namespace

TEST_CASE("compactness extremes") {
  // Identical nonzero features: every pairwise cosine is 1.
  std::vector<LabeledFeature> same = {{Vec{1.0, 2.0}, 0}, {Vec{1.0, 2.0}, 0},
                                      {Vec{2.0, 4.0}, 0}};
  const auto c = intra_class_compactness(same);
  CHECK(c[0].value() == doctest::Approx(100.0).epsilon(1e-13));

  std::vector<LabeledFeature> antipodal = {{Vec{1.0, 0.0}, 0}, {Vec{-2.0, 0.0}, 0}};
  CHECK(intra_class_compactness(antipodal)[0].value() == doctest::Approx(0.0));

  // Fewer than two samples: metric is absent, not zero.
  std::vector<LabeledFeature> lone = {{Vec{1.0, 0.0}, 0}, {Vec{1.0, 0.0}, 1},
                                      {Vec{0.5, 0.0}, 1}};
  const auto l = intra_class_compactness(lone);
  CHECK_FALSE(l[0].has_value());
  CHECK(l[1].has_value());
}

TEST_CASE("compactness matches the scalar-loop oracle on a seeded cloud") {
  Rng rng(42);
  const auto cloud = random_cloud(rng, 50, 3, 8);
  const auto fast = intra_class_compactness(cloud);
  const auto slow = oracle::compactness(cloud, 3);
  for (int k = 0; k < 3; ++k) {
    REQUIRE(fast[static_cast<std::size_t>(k)].has_value());
    CHECK(fast[static_cast<std::size_t>(k)].value() ==
          doctest::Approx(slow[static_cast<std::size_t>(k)].value()).epsilon(1e-12));
  }
}

TEST_CASE("feature separability matches the scalar-loop oracle") {
  Rng rng(42);
  const auto cloud = random_cloud(rng, 60, 4, 6);
  const auto fast = inter_class_feature_separability(cloud, 4);
  const auto slow = oracle::feature_separability(cloud, 4);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(fast[static_cast<std::size_t>(k)].has_value());
    CHECK(fast[static_cast<std::size_t>(k)].value() ==
          doctest::Approx(slow[static_cast<std::size_t>(k)].value()).epsilon(1e-12));
  }
}

TEST_CASE("feature separability per-term boundary mapping") {
  // A pair with cosine -1 contributes 100, a pair with cosine +1 contributes 0;
  // construct a two-term instance averaging to 50 and check against the oracle.
  // (Centered samples sum to zero, so all-pairs-at-100 is not constructible.)
  std::vector<LabeledFeature> features = {
      {Vec{1.0, 0.0}, 0}, {Vec{-1.0, 0.0}, 0},  // centered: +/- e1
      {Vec{3.0, 0.0}, 1}, {Vec{5.0, 0.0}, 1},   // mean along +e1
  };
  const auto sep = inter_class_feature_separability(features, 2);
  CHECK(sep[0].value() == doctest::Approx(50.0).epsilon(1e-12));
  const auto slow = oracle::feature_separability(features, 2);
  CHECK(sep[0].value() == doctest::Approx(slow[0].value()).epsilon(1e-12));

  // Zero-vector cosines are skipped and counted, not treated as zero.
  std::vector<LabeledFeature> with_zero = {
      {Vec{1.0, 0.0}, 0}, {Vec{1.0, 0.0}, 0},   // both center to zero: skipped
      {Vec{0.0, 2.0}, 1}, {Vec{0.0, 1.0}, 1},
  };
  ZeroVectorDiagnostics diag;
  const auto sep0 = inter_class_feature_separability(with_zero, 2, &diag);
  CHECK_FALSE(sep0[0].has_value());
  CHECK(diag.skipped == 2);
}

TEST_CASE("classifier separability: K=2 centering forces antipodality") {
  const Classifier clf = classifier_from_rows({Vec{0.3, 0.4}, Vec{-1.0, 2.0}});
  const auto sep = classifier_separability(clf);
  CHECK(sep[0] == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(sep[1] == doctest::Approx(100.0).epsilon(1e-12));

  CHECK_THROWS_AS(
      classifier_separability(classifier_from_rows({Vec{1.0, 0.0}, Vec{1.0, 0.0}})),
      std::domain_error);
}

TEST_CASE("classifier separability on a perfect ETF is the closed-form constant") {
  const int K = 100;
  const Classifier clf = classifier_from_rows(construct_etf(K, 128, 7));
  const auto sep = classifier_separability(clf);
  const double expected = 5000.0 / 99.0;  // 100 (1 + 1/(K-1)) / 2
  for (double v : sep) CHECK(v == doctest::Approx(expected).epsilon(1e-10));
  std::vector<std::optional<double>> opt(sep.begin(), sep.end());
  CHECK(metric_std(opt) < 1e-10);
}

TEST_CASE("classifier separability matches the scalar-loop oracle") {
  Rng rng(42);
  std::vector<Vec> rows;
  for (int k = 0; k < 12; ++k) rows.push_back(random_vec(rng, 5));
  const Classifier clf = classifier_from_rows(rows);
  const auto fast = classifier_separability(clf);
  const auto slow = oracle::classifier_separability(clf);
  for (std::size_t k = 0; k < fast.size(); ++k)
    CHECK(fast[k] == doctest::Approx(slow[k]).epsilon(1e-12));
}

TEST_CASE("separability matrix structure and row-mean consistency") {
  const Classifier two = classifier_from_rows({Vec{1.0, 1.0}, Vec{0.0, 3.0}});
  const SeparabilityMatrix m2 = separability_matrix(two);
  CHECK(m2.at(0, 0) == 1.0);
  CHECK(m2.at(1, 1) == 1.0);
  CHECK(m2.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m2.at(1, 0) == m2.at(0, 1));

  const Classifier etf4 = classifier_from_rows(construct_etf(4, 5, 3));
  const SeparabilityMatrix m4 = separability_matrix(etf4);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k)
      if (j != k) CHECK(m4.at(j, k) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Rng rng(42);
  std::vector<Vec> rows;
  for (int k = 0; k < 9; ++k) rows.push_back(random_vec(rng, 4));
  const Classifier clf = classifier_from_rows(rows);
  const SeparabilityMatrix m = separability_matrix(clf);
  const auto sep = classifier_separability(clf);
  for (int j = 0; j < 9; ++j) {
    CHECK(m.at(j, j) == 1.0);
    double row_mean = 0.0;
    for (int k = 0; k < 9; ++k)
      if (k != j) {
        row_mean += m.at(j, k);
        CHECK(m.at(j, k) == m.at(k, j));  // exactly symmetric
        CHECK(m.at(j, k) >= 0.0);
        CHECK(m.at(j, k) <= 1.0);
      }
    row_mean = row_mean / 8.0 * 100.0;
    CHECK(row_mean == doctest::Approx(sep[static_cast<std::size_t>(j)]).epsilon(1e-12));
  }
}

TEST_CASE("etf_deviation") {
  const Classifier etf = classifier_from_rows(construct_etf(4, 3, 11));
  const EtfReport r = etf_deviation(etf);
  CHECK(r.target_cos == doctest::Approx(-1.0 / 3.0));
  CHECK(r.max_pairwise_cos_deviation < 1e-12);
  CHECK(r.max_norm_deviation < 1e-12);
  CHECK(r.realizable);

  // Orthonormal basis rows are not a centered ETF; deviation per the oracle.
  const Classifier ortho = classifier_from_rows(
      {Vec{1.0, 0.0, 0.0}, Vec{0.0, 1.0, 0.0}, Vec{0.0, 0.0, 1.0}});
  const EtfReport ro = etf_deviation(ortho);
  // Centered rows e_k - (1/3)1 have pairwise cosine exactly -1/2.
  CHECK(ro.max_pairwise_cos_deviation == doctest::Approx(std::abs(-0.5 + 0.5)).epsilon(1e-12));
  CHECK(ro.max_norm_deviation == doctest::Approx(0.0));

  const Classifier pair = classifier_from_rows({Vec{0.8, 0.6}, Vec{-0.8, -0.6}});
  CHECK(etf_deviation(pair).max_pairwise_cos_deviation < 1e-12);

  const Classifier squeezed = classifier_from_rows(construct_etf(5, 4, 2));
  CHECK(etf_deviation(squeezed).realizable);
  Classifier infeasible = classifier_from_rows(
      {Vec{1.0, 0.0}, Vec{0.0, 1.0}, Vec{-1.0, 0.0}, Vec{0.0, -1.0}});
  CHECK_FALSE(etf_deviation(infeasible).realizable);
}

TEST_CASE("construct_etf") {
  const auto pair = construct_etf(2, 1, 5);
  CHECK(std::abs(pair[0][0]) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pair[0][0] == doctest::Approx(-pair[1][0]).epsilon(1e-14));

  const auto planar = construct_etf(3, 2, 6);
  for (int j = 0; j < 3; ++j) {
    CHECK(norm(planar[static_cast<std::size_t>(j)]) == doctest::Approx(1.0).epsilon(1e-13));
    for (int k = j + 1; k < 3; ++k)
      CHECK(dot(planar[static_cast<std::size_t>(j)], planar[static_cast<std::size_t>(k)]) ==
            doctest::Approx(-0.5).epsilon(1e-13));
  }

  for (const auto& [K, d] : std::vector<std::pair<int, int>>{{4, 3}, {10, 16}, {100, 128}}) {
    const Classifier clf = classifier_from_rows(construct_etf(K, d, 17));
    CHECK(etf_deviation(clf).max_pairwise_cos_deviation < 1e-12);
    CHECK(etf_deviation(clf).max_norm_deviation < 1e-12);
  }

  CHECK_THROWS_AS(construct_etf(5, 3, 1), std::invalid_argument);
}

TEST_CASE("metrics are invariant under rotation and positive scaling") {
  Rng rng(19);
  const int d = 6;
  const int K = 3;
  const auto cloud = random_cloud(rng, 40, K, d);
  std::vector<Vec> rows;
  for (int k = 0; k < K; ++k) rows.push_back(random_vec(rng, d));
  const Classifier clf = classifier_from_rows(rows);

  const auto rot = random_rotation(rng, d);
  std::vector<LabeledFeature> transformed;
  for (const auto& f : cloud) {
    Vec x = rotate(rot, f.x);
    scale_in_place(x, 2.75);  // uniform positive scaling
    transformed.push_back({std::move(x), f.label});
  }
  std::vector<Vec> rot_rows;
  for (const auto& row : rows) rot_rows.push_back(rotate(rot, row));
  const Classifier rot_clf = classifier_from_rows(rot_rows);

  const auto c0 = intra_class_compactness(cloud);
  const auto c1 = intra_class_compactness(transformed);
  const auto s0 = inter_class_feature_separability(cloud, K);
  const auto s1 = inter_class_feature_separability(transformed, K);
  const auto w0 = classifier_separability(clf);
  const auto w1 = classifier_separability(rot_clf);
  for (int k = 0; k < K; ++k) {
    const std::size_t kk = static_cast<std::size_t>(k);
    CHECK(c1[kk].value() == doctest::Approx(c0[kk].value()).epsilon(1e-10));
    CHECK(s1[kk].value() == doctest::Approx(s0[kk].value()).epsilon(1e-10));
    CHECK(w1[kk] == doctest::Approx(w0[kk]).epsilon(1e-10));
  }
}

TEST_CASE("metric values stay in range on random instances") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(5));
    const auto cloud = random_cloud(rng, 30, K, 4);
    for (const auto& v : intra_class_compactness(cloud)) {
      if (!v) continue;
      CHECK(*v >= 0.0);
      CHECK(*v <= 100.0);
    }
    for (const auto& v : inter_class_feature_separability(cloud, K)) {
      if (!v) continue;
      CHECK(*v >= 0.0);
      CHECK(*v <= 100.0);
    }
  }
}

TEST_CASE("metric_report aggregates all three metric families") {
  Rng rng(29);
  const auto cloud = random_cloud(rng, 50, 4, 5);
  std::vector<Vec> rows;
  for (int k = 0; k < 4; ++k) rows.push_back(random_vec(rng, 5));
  const MetricReport report = metric_report(cloud, classifier_from_rows(rows));
  CHECK(report.compactness.size() == 4);
  CHECK(report.feature_sep.size() == 4);
  CHECK(report.classifier_sep.size() == 4);
  CHECK(report.mean_compactness() > 0.0);
  CHECK(report.std_classifier_sep() >= 0.0);
  CHECK(report.skipped_cosines == 0);
}
