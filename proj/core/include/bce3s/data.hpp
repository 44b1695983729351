#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bce3s/types.hpp"

namespace bce3s {

enum class ClassGeometry { kSimplexMeans, kRandomMeans };

std::string to_string(ClassGeometry g);
ClassGeometry class_geometry_from_string(const std::string& s);

// Synthetic long-tailed dataset: per-class counts follow exponential decay
// from n1 down to n1/IF, inputs are isotropic Gaussians around unit-norm
// class means. noise_sigma sets the difficulty (0+ = separable limit).
struct LongTailSpec {
  int num_classes = 10;
  int n1 = 500;                    // head-class train count
  double imbalance_factor = 100.0; // n1 / n_K
  int input_dim = 32;
  ClassGeometry class_geometry = ClassGeometry::kRandomMeans;
  double noise_sigma = 0.35;
  int test_per_class = 20;         // balanced test set size per class
  std::uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  std::vector<LabeledFeature> train;
  std::vector<LabeledFeature> test;  // balanced
  std::vector<long long> train_counts;
  int num_classes = 0;
  int input_dim = 0;
};

// n_k = round(n1 * IF^(-(k-1)/(K-1))): non-increasing, n_K = round(n1/IF).
std::vector<long long> longtail_counts(int num_classes, long long n1, double imbalance_factor);

Dataset generate_dataset(const LongTailSpec& spec);

// Epoch-deterministic instance-uniform shuffle sliced into batches of size
// batch_size (last batch may be short).
std::vector<std::vector<std::size_t>> batch_iter(std::size_t train_size,
                                                 std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch);

struct BankUpdateStats {
  int written = 0;
  int renormalized = 0;  // projections that arrived non-unit
};

// Last write per class wins (batch order); classes absent from the batch keep
// their slot untouched. Non-unit projections are normalized and counted.
MemoryBank bank_update(const MemoryBank& bank,
                       std::span<const std::pair<int, Vec>> batch_projections,
                       BankUpdateStats* stats = nullptr);

// Class partition by train count: many > many_threshold,
// few < few_threshold, medium in between (boundaries belong to medium).
struct SubsetSplit {
  std::vector<int> many;
  std::vector<int> medium;
  std::vector<int> few;
  long long many_threshold = 100;
  long long few_threshold = 20;
};

SubsetSplit subset_split(std::span<const long long> train_counts,
                         long long many_threshold = 100, long long few_threshold = 20);

}  // namespace bce3s
