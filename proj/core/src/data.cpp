#include "bce3s/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bce3s/geometry.hpp"
#include "bce3s/rng.hpp"

namespace bce3s {

std::string to_string(ClassGeometry g) {
  return g == ClassGeometry::kSimplexMeans ? "simplex" : "random";
}

ClassGeometry class_geometry_from_string(const std::string& s) {
  if (s == "simplex") return ClassGeometry::kSimplexMeans;
  if (s == "random") return ClassGeometry::kRandomMeans;
  throw std::invalid_argument("unknown class geometry '" + s + "' (expected simplex|random)");
}

void LongTailSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (n1 < 1) throw std::invalid_argument("n1 must be >= 1");
  if (imbalance_factor < 1.0) throw std::invalid_argument("imbalance_factor must be >= 1");
  if (static_cast<double>(n1) < imbalance_factor)
    throw std::invalid_argument("n1 must be >= imbalance_factor (tail class would be empty)");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("noise_sigma must be > 0");
  if (test_per_class < 1) throw std::invalid_argument("test_per_class must be >= 1");
  if (class_geometry == ClassGeometry::kSimplexMeans && input_dim < num_classes - 1)
    throw std::invalid_argument("simplex means need input_dim >= num_classes - 1");
}

std::vector<long long> longtail_counts(int num_classes, long long n1,
                                       double imbalance_factor) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (imbalance_factor < 1.0) throw std::invalid_argument("imbalance_factor must be >= 1");
  if (static_cast<double>(n1) < imbalance_factor)
    throw std::invalid_argument("n1 must be >= imbalance_factor (tail class would be empty)");

  std::vector<long long> counts(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    const double exponent = -static_cast<double>(k) / static_cast<double>(num_classes - 1);
    const double value = static_cast<double>(n1) * std::pow(imbalance_factor, exponent);
    counts[static_cast<std::size_t>(k)] = std::llround(value);
  }
  for (std::size_t k = 1; k < counts.size(); ++k)
    counts[k] = std::min(counts[k], counts[k - 1]);
  for (long long c : counts)
    if (c < 1) throw std::invalid_argument("tail class count rounded to zero");
  return counts;
}

Dataset generate_dataset(const LongTailSpec& spec) {
  spec.validate();
  const int K = spec.num_classes;
  const std::size_t d = static_cast<std::size_t>(spec.input_dim);

  std::vector<Vec> means;
  if (spec.class_geometry == ClassGeometry::kSimplexMeans) {
    means = construct_etf(K, spec.input_dim, derive_seed(spec.seed, 0xe7f));
  } else {
    Rng rng(derive_seed(spec.seed, 0xe7f));
    means.resize(static_cast<std::size_t>(K));
    for (auto& mu : means) {
      mu.resize(d);
      do {
        for (auto& v : mu) v = rng.gaussian();
      } while (norm(mu) == 0.0);
      normalize_in_place(mu);
    }
  }

  Dataset ds;
  ds.num_classes = K;
  ds.input_dim = spec.input_dim;
  ds.train_counts = longtail_counts(K, spec.n1, spec.imbalance_factor);

  for (int k = 0; k < K; ++k) {
    Rng rng(derive_seed(spec.seed, 0x1000 + static_cast<std::uint64_t>(k)));
    for (long long i = 0; i < ds.train_counts[static_cast<std::size_t>(k)]; ++i) {
      LabeledFeature f;
      f.label = k;
      f.x.resize(d);
      for (std::size_t t = 0; t < d; ++t)
        f.x[t] = means[static_cast<std::size_t>(k)][t] + spec.noise_sigma * rng.gaussian();
      ds.train.push_back(std::move(f));
    }
  }
  for (int k = 0; k < K; ++k) {
    Rng rng(derive_seed(spec.seed, 0x2000000 + static_cast<std::uint64_t>(k)));
    for (int i = 0; i < spec.test_per_class; ++i) {
      LabeledFeature f;
      f.label = k;
      f.x.resize(d);
      for (std::size_t t = 0; t < d; ++t)
        f.x[t] = means[static_cast<std::size_t>(k)][t] + spec.noise_sigma * rng.gaussian();
      ds.test.push_back(std::move(f));
    }
  }
  return ds;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t train_size,
                                                 std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(train_size);
  for (std::size_t i = 0; i < train_size; ++i) order[i] = i;

  Rng rng(derive_seed(seed, 0xba7c4 + epoch));
  for (std::size_t i = train_size; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < train_size; start += batch_size) {
    const std::size_t end = std::min(train_size, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

MemoryBank bank_update(const MemoryBank& bank,
                       std::span<const std::pair<int, Vec>> batch_projections,
                       BankUpdateStats* stats) {
  MemoryBank out = bank;
  for (const auto& [label, z] : batch_projections) {
    if (label < 0 || label >= bank.num_slots())
      throw std::invalid_argument("projection label out of range");
    Vec unit = z;
    const double n = norm(unit);
    if (n == 0.0) throw std::invalid_argument("cannot store a zero projection");
    if (std::abs(n - 1.0) > 1e-9) {
      scale_in_place(unit, 1.0 / n);
      if (stats) ++stats->renormalized;
    }
    const std::size_t k = static_cast<std::size_t>(label);
    if (stats) ++stats->written;
    out.slots[k] = std::move(unit);
    out.initialized[k] = true;
  }
  return out;
}

SubsetSplit subset_split(std::span<const long long> train_counts,
                         long long many_threshold, long long few_threshold) {
  if (!(many_threshold > few_threshold && few_threshold > 0))
    throw std::invalid_argument("thresholds must satisfy many > few > 0");
  SubsetSplit split;
  split.many_threshold = many_threshold;
  split.few_threshold = few_threshold;
  for (std::size_t k = 0; k < train_counts.size(); ++k) {
    const long long c = train_counts[k];
    if (c > many_threshold)
      split.many.push_back(static_cast<int>(k));
    else if (c < few_threshold)
      split.few.push_back(static_cast<int>(k));
    else
      split.medium.push_back(static_cast<int>(k));
  }
  return split;
}

}  // namespace bce3s
