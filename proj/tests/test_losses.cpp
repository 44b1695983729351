#include <doctest.h>

#include <cmath>

#include "bce3s/losses.hpp"
#include "oracles.hpp"

using namespace bce3s;

namespace {

constexpr double kLn2 = 0.69314718055994531;

Classifier random_classifier(Rng& rng, int K, int d, Normalization mode) {
  Classifier clf;
  clf.normalization = mode;
  clf.weights.assign(static_cast<std::size_t>(K), Vec(static_cast<std::size_t>(d)));
  clf.biases.assign(static_cast<std::size_t>(K), 0.0);
  for (auto& row : clf.weights)
    for (auto& v : row) v = rng.gaussian();
  for (auto& b : clf.biases) b = 0.5 * rng.gaussian();
  return clf;
}

Vec random_vec(Rng& rng, int d) {
  Vec x(static_cast<std::size_t>(d));
  for (auto& v : x) v = rng.gaussian();
  return x;
}

MemoryBank random_bank(Rng& rng, int K, int d) {
  MemoryBank bank = MemoryBank::empty(K, d);
  for (int j = 0; j < K; ++j) {
    Vec z = random_vec(rng, d);
    normalize_in_place(z);
    bank.slots[static_cast<std::size_t>(j)] = z;
    bank.initialized[static_cast<std::size_t>(j)] = true;
  }
  return bank;
}

}  // namespace

TEST_CASE("softplus endpoints and asymptotes") {
  CHECK(softplus(0.0) == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(softplus(1000.0) == 1000.0);  // naive exp would overflow
  CHECK(std::abs(softplus(-40.0) - std::exp(-40.0)) < 1e-25);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(std::isfinite(softplus(1e308)));
}

TEST_CASE("softplus is monotone and nonnegative") {
  Rng rng(3);
  double prev = softplus(-1e4);
  for (int i = 0; i < 2000; ++i) {
    const double x = -1e4 + i * 10.0;
    const double y = softplus(x);
    CHECK(y >= 0.0);
    CHECK(y >= prev);
    prev = y;
  }
  (void)rng;
}

TEST_CASE("ce_joint closed forms") {
  // All logits equal: loss is log K regardless of the shared value.
  const int K = 10;
  Classifier clf;
  clf.normalization = Normalization::kNone;
  clf.weights.assign(K, Vec{0.0, 0.0});
  clf.biases.assign(K, 0.7);
  LabeledFeature f{{1.0, -2.0}, 3};
  CHECK(ce_joint(f, clf) == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  // One-hot margin: loss collapses toward zero but stays strictly positive.
  clf.biases.assign(K, 0.0);
  clf.biases[3] = 40.0;
  const double margin_loss = ce_joint(f, clf);
  CHECK(margin_loss < 1e-15);
  CHECK(margin_loss > 0.0);
}

TEST_CASE("ce_joint matches the direct-formula oracle on a seeded instance") {
  Rng rng(42);
  for (const auto mode : {Normalization::kNone, Normalization::kFeatureOnly,
                          Normalization::kClassifierOnly, Normalization::kBoth}) {
    const Classifier clf = random_classifier(rng, 5, 3, mode);
    const LabeledFeature f{random_vec(rng, 3), 2};
    const double expected = static_cast<double>(oracle::ce_joint(f, clf));
    CHECK(ce_joint(f, clf) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("bce_joint closed forms") {
  // All logits zero with every negative kept: K softplus(0) terms.
  Classifier clf;
  clf.normalization = Normalization::kNone;
  clf.weights.assign(3, Vec{0.0, 0.0});
  clf.biases.assign(3, 0.0);
  LabeledFeature f{{0.3, -0.1}, 0};
  CHECK(bce_joint(f, clf, NegativeMask::all(3)) ==
        doctest::Approx(3.0 * kLn2).epsilon(1e-14));

  // K=2 with the single negative masked: only the positive term remains.
  Classifier clf2;
  clf2.normalization = Normalization::kNone;
  clf2.weights = {Vec{1.0, 0.0}, Vec{0.0, 1.0}};
  clf2.biases = {0.25, -3.0};
  LabeledFeature g{{0.5, 2.0}, 0};
  NegativeMask mask = NegativeMask::all(2);
  mask.keep[1] = false;
  const double logit0 = 1.0 * 0.5 + 0.25;
  CHECK(bce_joint(g, clf2, mask) == doctest::Approx(softplus(-logit0)).epsilon(1e-14));
}

TEST_CASE("bce_joint matches the direct-formula oracle on a seeded instance") {
  Rng rng(42);
  const Classifier clf = random_classifier(rng, 5, 3, Normalization::kClassifierOnly);
  const LabeledFeature f{random_vec(rng, 3), 4};
  NegativeMask mask = NegativeMask::all(5);
  mask.keep[1] = false;
  const double expected = static_cast<double>(oracle::bce_joint(f, clf, mask));
  CHECK(bce_joint(f, clf, mask) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bce_joint with r=1 equals a scalar-loop sum of softplus terms") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(8));
    const int d = 1 + static_cast<int>(rng.below(6));
    const Classifier clf = random_classifier(rng, K, d, Normalization::kNone);
    const LabeledFeature f{random_vec(rng, d), static_cast<int>(rng.below(K))};
    const double value = bce_joint(f, clf, NegativeMask::all(K));
    const double again = bce_joint(f, clf, NegativeMask::all(K));
    CHECK(value == again);  // mask-independent, deterministic
    const double expected =
        static_cast<double>(oracle::bce_joint(f, clf, NegativeMask::all(K)));
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("joint losses stay finite for extreme logits") {
  // Logits in [-1e4, 1e4] via a 1-d classifier with huge inputs.
  Rng rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(4));
    Classifier clf;
    clf.normalization = Normalization::kNone;
    clf.weights.assign(static_cast<std::size_t>(K), Vec{0.0});
    clf.biases.assign(static_cast<std::size_t>(K), 0.0);
    for (auto& row : clf.weights) row[0] = rng.uniform(-1.0, 1.0);
    LabeledFeature f{{rng.uniform(-1e4, 1e4)}, static_cast<int>(rng.below(K))};
    CHECK(std::isfinite(ce_joint(f, clf)));
    CHECK(std::isfinite(bce_joint(f, clf, NegativeMask::all(K))));
    CHECK(ce_joint(f, clf) >= 0.0);
  }
}

TEST_CASE("decoupling: bce negative terms ignore other classes, ce couples them") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int K = 4;
    const int d = 3;
    Classifier clf = random_classifier(rng, K, d, Normalization::kNone);
    const LabeledFeature f{random_vec(rng, d), 0};
    const int j = 1;        // negative under scrutiny
    const int other = 2;    // perturbed class (not j, not the label)

    // The components of the BCE loss: per-class softplus terms.
    const Vec before = joint_logits(f, clf);
    const double bce_term_before = softplus(before[j]);
    const auto p_before = std::exp(-ce_joint(f, clf));  // softmax prob of label

    clf.weights[other][0] += 1.5;
    clf.biases[other] -= 0.5;
    const Vec after = joint_logits(f, clf);
    const double bce_term_after = softplus(after[j]);
    const auto p_after = std::exp(-ce_joint(f, clf));

    CHECK(bce_term_before == bce_term_after);
    CHECK(p_before != p_after);
  }
}

TEST_CASE("draw_negative_mask basics") {
  Rng rng(5);
  const NegativeMask all = draw_negative_mask(2, 6, 1.0, rng);
  for (bool keep : all.keep) CHECK(keep);

  Rng a(99), b(99);
  const NegativeMask m1 = draw_negative_mask(0, 50, 0.4, a);
  const NegativeMask m2 = draw_negative_mask(0, 50, 0.4, b);
  CHECK(m1.keep == m2.keep);

  CHECK_THROWS_AS(draw_negative_mask(0, 5, 0.0, rng), std::invalid_argument);
}

TEST_CASE("draw_negative_mask kept count matches binomial statistics") {
  const int K = 100;
  const double r = 0.4;
  const int draws = 10000;
  Rng rng(2024);
  long long total = 0;
  for (int i = 0; i < draws; ++i)
    total += oracle::kept_count(draw_negative_mask(0, K, r, rng), 0);
  const double mean = static_cast<double>(total) / draws;
  const double expected = r * (K - 1);
  const double sigma_mean = std::sqrt((K - 1) * r * (1.0 - r) / draws);
  CHECK(std::abs(mean - expected) <= 3.0 * sigma_mean);
}

TEST_CASE("ce_contrastive closed forms") {
  // Equal cosines across 4 slots: uniform softmax.
  MemoryBank bank = MemoryBank::empty(4, 3);
  for (int j = 0; j < 4; ++j) {
    bank.slots[static_cast<std::size_t>(j)] = {1.0, 0.0, 0.0};
    bank.initialized[static_cast<std::size_t>(j)] = true;
  }
  const Vec z{1.0, 1.0, 0.0};
  CHECK(ce_contrastive(z, 1, bank, 0.5).value() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));

  // Own cosine 1, others -1, tau = 0.1.
  MemoryBank polar = MemoryBank::empty(4, 2);
  polar.slots[0] = {1.0, 0.0};
  for (int j = 1; j < 4; ++j) polar.slots[static_cast<std::size_t>(j)] = {-1.0, 0.0};
  for (int j = 0; j < 4; ++j) polar.initialized[static_cast<std::size_t>(j)] = true;
  const double loss = ce_contrastive(Vec{1.0, 0.0}, 0, polar, 0.1).value();
  CHECK(loss == doctest::Approx(6.18346084819808e-09).epsilon(1e-12));
  CHECK(loss == doctest::Approx(3.0 * std::exp(-20.0)).epsilon(1e-6));

  // Single initialized slot: probability one.
  MemoryBank lone = MemoryBank::empty(3, 2);
  lone.slots[1] = {0.0, 1.0};
  lone.initialized[1] = true;
  CHECK(ce_contrastive(Vec{0.3, 0.8}, 1, lone, 0.7).value() == 0.0);

  // Own slot uninitialized: skip-sample signal.
  CHECK_FALSE(ce_contrastive(Vec{0.3, 0.8}, 0, lone, 0.7).has_value());
}

TEST_CASE("bce_contrastive closed forms") {
  MemoryBank bank = MemoryBank::empty(4, 3);
  for (int j = 0; j < 4; ++j) {
    bank.slots[static_cast<std::size_t>(j)] = {0.0, 1.0, 0.0};
    bank.initialized[static_cast<std::size_t>(j)] = true;
  }
  // z orthogonal to every slot: all cosines 0.
  CHECK(bce_contrastive(Vec{2.0, 0.0, 0.0}, 2, bank, 1.0).value() ==
        doctest::Approx(4.0 * kLn2).epsilon(1e-14));

  MemoryBank polar = MemoryBank::empty(4, 2);
  polar.slots[0] = {1.0, 0.0};
  for (int j = 1; j < 4; ++j) polar.slots[static_cast<std::size_t>(j)] = {-1.0, 0.0};
  for (int j = 0; j < 4; ++j) polar.initialized[static_cast<std::size_t>(j)] = true;
  CHECK(bce_contrastive(Vec{1.0, 0.0}, 0, polar, 1.0).value() ==
        doctest::Approx(4.0 * 0.31326168751822286).epsilon(1e-14));

  CHECK_FALSE(bce_contrastive(Vec{1.0, 0.0}, 1,
                              [] {
                                MemoryBank b = MemoryBank::empty(2, 2);
                                b.slots[0] = {1.0, 0.0};
                                b.initialized[0] = true;
                                return b;
                              }(),
                              1.0)
                  .has_value());
}

TEST_CASE("bce_contrastive matches the oracle on a seeded bank") {
  Rng rng(42);
  const MemoryBank bank = random_bank(rng, 6, 4);
  Vec z = random_vec(rng, 4);
  normalize_in_place(z);
  const double expected = static_cast<double>(oracle::bce_contrastive(z, 3, bank, 0.35));
  CHECK(bce_contrastive(z, 3, bank, 0.35).value() ==
        doctest::Approx(expected).epsilon(1e-12));

  // Uninitialized non-own slots drop out of the sum.
  MemoryBank partial = bank;
  partial.initialized[1] = false;
  const double expected_partial =
      static_cast<double>(oracle::bce_contrastive(z, 3, partial, 0.35));
  CHECK(bce_contrastive(z, 3, partial, 0.35).value() ==
        doctest::Approx(expected_partial).epsilon(1e-12));
  CHECK(expected_partial < expected);  // one softplus term fewer
}

TEST_CASE("bce_uniform closed forms") {
  Classifier antipodal;
  antipodal.normalization = Normalization::kNone;
  antipodal.weights = {Vec{1.0, 0.0}, Vec{-1.0, 0.0}};
  antipodal.biases = {0.0, 0.0};
  CHECK(bce_uniform(antipodal, 0, false) ==
        doctest::Approx(0.31326168751822286).epsilon(1e-14));

  Classifier ortho;
  ortho.normalization = Normalization::kNone;
  ortho.weights = {Vec{1.0, 0.0}, Vec{0.0, 1.0}};
  ortho.biases = {0.0, 0.0};
  CHECK(bce_uniform(ortho, 0, false) == doctest::Approx(kLn2).epsilon(1e-14));

  // Including the positive adds exactly log(1 + e^-1) under unit norms.
  for (const Classifier* clf : {&antipodal, &ortho}) {
    const double delta = bce_uniform(*clf, 1, true) - bce_uniform(*clf, 1, false);
    CHECK(delta == doctest::Approx(0.31326168751822286).epsilon(1e-14));
  }

  // Non-unit rows are a configuration error.
  Classifier bad;
  bad.normalization = Normalization::kNone;
  bad.weights = {Vec{2.0, 0.0}, Vec{0.0, 1.0}};
  bad.biases = {0.0, 0.0};
  CHECK_THROWS_AS(bce_uniform(bad, 0, false), std::invalid_argument);
}

TEST_CASE("bce_uniform strictly decreases as any pairwise dot decreases") {
  // Rotate w_1 away from w_0 in their common plane; only the (0,1) dot moves.
  const int steps = 8;
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 1; s <= steps; ++s) {
    const double theta = 0.3 + 0.25 * s;
    Classifier clf;
    clf.normalization = Normalization::kNone;
    clf.weights = {Vec{1.0, 0.0, 0.0}, Vec{std::cos(theta), std::sin(theta), 0.0},
                   Vec{0.0, 0.0, 1.0}};
    clf.biases = {0.0, 0.0, 0.0};
    const double value = bce_uniform(clf, 0, false);
    CHECK(value < prev);
    prev = value;
  }
}

TEST_CASE("ce_uniform closed forms") {
  Classifier antipodal;
  antipodal.normalization = Normalization::kNone;
  antipodal.weights = {Vec{1.0, 0.0}, Vec{-1.0, 0.0}};
  antipodal.biases = {0.0, 0.0};
  CHECK(ce_uniform(antipodal, 0) == doctest::Approx(0.12692801104297250).epsilon(1e-13));

  Classifier identical;
  identical.normalization = Normalization::kNone;
  identical.weights = {Vec{0.0, 1.0}, Vec{0.0, 1.0}, Vec{0.0, 1.0}};
  identical.biases = {0.0, 0.0, 0.0};
  CHECK(ce_uniform(identical, 1) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  // Planar ETF: three unit vectors at 120 degrees.
  Classifier etf;
  etf.normalization = Normalization::kNone;
  etf.weights = {Vec{1.0, 0.0}, Vec{-0.5, std::sqrt(3.0) / 2.0},
                 Vec{-0.5, -std::sqrt(3.0) / 2.0}};
  etf.biases = {0.0, 0.0, 0.0};
  CHECK(ce_uniform(etf, 0) == doctest::Approx(0.36898113540131541).epsilon(1e-13));
}

TEST_CASE("cb_weight endpoints, oracle value, and monotonicity") {
  for (const double beta : {0.0, 0.5, 0.9, 0.9999}) CHECK(cb_weight(1, beta) == 1.0);

  // n -> infinity asymptote: weight tends to 1 - beta.
  CHECK(cb_weight(1000000000LL, 0.9999) == doctest::Approx(1.0 - 0.9999).epsilon(1e-14));

  CHECK(cb_weight(5000, 0.9999) ==
        doctest::Approx(0.00025413961385537258).epsilon(1e-12));
  CHECK(cb_weight(5000, 0.9999) ==
        doctest::Approx(static_cast<double>(oracle::cb_weight(5000, 0.9999))).epsilon(1e-13));

  double prev = cb_weight(1, 0.999);
  for (long long n = 2; n <= 4096; n *= 2) {
    const double w = cb_weight(n, 0.999);
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("tripartite_loss degenerate weights reduce to the mean joint loss") {
  Rng rng(21);
  const int K = 4;
  const int d = 3;
  const Classifier clf = random_classifier(rng, K, d, Normalization::kClassifierOnly);
  const MemoryBank bank = random_bank(rng, K, d);
  std::vector<LabeledFeature> batch;
  std::vector<Vec> projections;
  for (int i = 0; i < 5; ++i) {
    batch.push_back({random_vec(rng, d), static_cast<int>(rng.below(K))});
    Vec z = random_vec(rng, d);
    normalize_in_place(z);
    projections.push_back(z);
  }
  LossConfig cfg;
  cfg.family = LossFamily::kBce;
  cfg.lambda_ss = 0.0;
  cfg.lambda_cc = 0.0;
  cfg.r = 1.0;
  Rng loss_rng(1);
  const double value = tripartite_loss(batch, projections, clf, bank, cfg, loss_rng);
  long double expected = 0.0L;
  for (const auto& f : batch) expected += oracle::bce_joint(f, clf, NegativeMask::all(K));
  CHECK(value ==
        doctest::Approx(static_cast<double>(expected / batch.size())).epsilon(1e-12));
}

TEST_CASE("tripartite_loss term-by-term closed form") {
  // B=1, K=2, every logit and cosine zero, r=1, BCE, positive excluded:
  // 2 log2 + lambda_ss 2 log2 + (lambda_cc/2) 2 log2.
  Classifier clf;
  clf.normalization = Normalization::kNone;
  clf.weights = {Vec{1.0, 0.0}, Vec{0.0, 1.0}};  // unit rows for the cc term
  clf.biases = {0.0, 0.0};
  std::vector<LabeledFeature> batch = {{Vec{0.0, 0.0}, 0}};

  MemoryBank bank = MemoryBank::empty(2, 2);
  bank.slots[0] = {0.0, 1.0};
  bank.slots[1] = {0.0, -1.0};
  bank.initialized = {true, true};
  std::vector<Vec> projections = {Vec{1.0, 0.0}};

  LossConfig cfg;
  cfg.family = LossFamily::kBce;
  cfg.lambda_ss = 0.7;
  cfg.lambda_cc = 1.3;
  cfg.tau = 1.0;
  cfg.include_cc_positive = false;

  Rng rng(9);
  const double value = tripartite_loss(batch, projections, clf, bank, cfg, rng);
  const double expected = 2.0 * kLn2 * (1.0 + 0.7 + 1.3 / 2.0);
  CHECK(value == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("tripartite_parts matches the summation oracle on a seeded batch") {
  Rng rng(42);
  const int K = 5;
  const int d = 4;
  const Classifier clf = random_classifier(rng, K, d, Normalization::kClassifierOnly);
  MemoryBank bank = random_bank(rng, K, 3);
  bank.initialized[2] = false;  // exercise the skip path
  std::vector<LabeledFeature> batch;
  std::vector<Vec> projections;
  std::vector<NegativeMask> masks;
  for (int i = 0; i < 4; ++i) {
    batch.push_back({random_vec(rng, d), static_cast<int>(rng.below(K))});
    Vec z = random_vec(rng, 3);
    normalize_in_place(z);
    projections.push_back(z);
  }
  LossConfig cfg;
  cfg.family = LossFamily::kBce;
  cfg.lambda_ss = 0.5;
  cfg.lambda_cc = 1.25;
  cfg.tau = 0.4;
  cfg.r = 0.6;
  Rng mask_rng(77);
  for (const auto& f : batch)
    masks.push_back(draw_negative_mask(f.label, K, cfg.r, mask_rng));

  const TripartiteParts parts = tripartite_parts(batch, projections, clf, bank, cfg, masks);
  const double expected =
      static_cast<double>(oracle::tripartite(batch, projections, clf, bank, cfg, masks));
  CHECK(parts.total() == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(
      tripartite_parts({}, {}, clf, bank, cfg, masks), std::invalid_argument);
}

TEST_CASE("loss reductions are reproducible under a fixed seed") {
  Rng rng(15);
  const int K = 6;
  const Classifier clf = random_classifier(rng, K, 3, Normalization::kClassifierOnly);
  const MemoryBank bank = random_bank(rng, K, 3);
  std::vector<LabeledFeature> batch;
  std::vector<Vec> projections;
  for (int i = 0; i < 8; ++i) {
    batch.push_back({random_vec(rng, 3), static_cast<int>(rng.below(K))});
    Vec z = random_vec(rng, 3);
    normalize_in_place(z);
    projections.push_back(z);
  }
  LossConfig cfg;
  cfg.family = LossFamily::kBce;
  cfg.lambda_ss = 1.0;
  cfg.lambda_cc = 1.0;
  cfg.r = 0.5;
  Rng r1(31), r2(31);
  CHECK(tripartite_loss(batch, projections, clf, bank, cfg, r1) ==
        tripartite_loss(batch, projections, clf, bank, cfg, r2));
}
