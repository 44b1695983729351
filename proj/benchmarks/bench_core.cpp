#include <benchmark/benchmark.h>

#include "bce3s/data.hpp"
#include "bce3s/geometry.hpp"
#include "bce3s/grads.hpp"
#include "bce3s/losses.hpp"

using namespace bce3s;

namespace {

Classifier make_unit_classifier(int K, int d) {
  return Classifier::random_unit(K, d, Normalization::kClassifierOnly, 7);
}

std::vector<LabeledFeature> make_batch(int B, int K, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledFeature> batch;
  for (int i = 0; i < B; ++i) {
    Vec x(static_cast<std::size_t>(d));
    for (auto& v : x) v = rng.gaussian();
    batch.push_back({std::move(x), static_cast<int>(rng.below(K))});
  }
  return batch;
}

MemoryBank make_bank(int K, int d, std::uint64_t seed) {
  Rng rng(seed);
  MemoryBank bank = MemoryBank::empty(K, d);
  for (int j = 0; j < K; ++j) {
    Vec z(static_cast<std::size_t>(d));
    for (auto& v : z) v = rng.gaussian();
    normalize_in_place(z);
    bank.slots[static_cast<std::size_t>(j)] = z;
    bank.initialized[static_cast<std::size_t>(j)] = true;
  }
  return bank;
}

}  // namespace

static void BM_BceJointForward(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const int d = 16;
  const Classifier clf = make_unit_classifier(K, d);
  const auto batch = make_batch(1, K, d, 3);
  const NegativeMask mask = NegativeMask::all(K);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bce_joint(batch[0], clf, mask));
  }
}
BENCHMARK(BM_BceJointForward)->Arg(10)->Arg(100)->Arg(1000);

static void BM_CeJointForward(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const int d = 16;
  const Classifier clf = make_unit_classifier(K, d);
  const auto batch = make_batch(1, K, d, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ce_joint(batch[0], clf));
  }
}
BENCHMARK(BM_CeJointForward)->Arg(10)->Arg(100)->Arg(1000);

static void BM_TripartiteBatch(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const int d = 16;
  const Classifier clf = make_unit_classifier(K, d);
  const auto batch = make_batch(64, K, d, 5);
  const MemoryBank bank = make_bank(K, 8, 6);
  std::vector<Vec> projections;
  Rng rng(9);
  for (int i = 0; i < 64; ++i) {
    Vec z(8);
    for (auto& v : z) v = rng.gaussian();
    normalize_in_place(z);
    projections.push_back(z);
  }
  LossConfig cfg;
  cfg.lambda_ss = 0.5;
  cfg.lambda_cc = 1.25;
  for (auto _ : state) {
    Rng loss_rng(11);
    benchmark::DoNotOptimize(tripartite_loss(batch, projections, clf, bank, cfg, loss_rng));
  }
}
BENCHMARK(BM_TripartiteBatch)->Arg(10)->Arg(100);

static void BM_GradJointClassifier(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const int d = 16;
  const Classifier clf = make_unit_classifier(K, d);
  const auto batch = make_batch(64, K, d, 5);
  const std::vector<NegativeMask> masks(64, NegativeMask::all(K));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        grad_joint_wrt_classifier(batch, clf, masks, ActivationKind::kSigmoidBce));
  }
}
BENCHMARK(BM_GradJointClassifier)->Arg(10)->Arg(100);

static void BM_GradUniform(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const Classifier clf = make_unit_classifier(K, 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        grad_uniform_wrt_classifier(clf, ActivationKind::kSigmoidBce, false));
  }
}
BENCHMARK(BM_GradUniform)->Arg(10)->Arg(100);

static void BM_MetricReport(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int K = 10;
  const int d = 16;
  const auto features = make_batch(n, K, d, 13);
  const Classifier clf = make_unit_classifier(K, d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metric_report(features, clf));
  }
}
BENCHMARK(BM_MetricReport)->Arg(200)->Arg(2000);

static void BM_SeparabilityMatrix(benchmark::State& state) {
  const Classifier clf = make_unit_classifier(static_cast<int>(state.range(0)), 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(separability_matrix(clf));
  }
}
BENCHMARK(BM_SeparabilityMatrix)->Arg(10)->Arg(100);

static void BM_BankUpdate(benchmark::State& state) {
  const int K = 100;
  MemoryBank bank = make_bank(K, 8, 3);
  Rng rng(4);
  std::vector<std::pair<int, Vec>> writes;
  for (int i = 0; i < 64; ++i) {
    Vec z(8);
    for (auto& v : z) v = rng.gaussian();
    normalize_in_place(z);
    writes.emplace_back(static_cast<int>(rng.below(K)), std::move(z));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(bank_update(bank, writes));
  }
}
BENCHMARK(BM_BankUpdate);

static void BM_ConstructEtf(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(construct_etf(K, K + 28, 5));
  }
}
BENCHMARK(BM_ConstructEtf)->Arg(10)->Arg(100);

BENCHMARK_MAIN();
