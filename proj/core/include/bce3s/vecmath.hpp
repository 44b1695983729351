#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace bce3s {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

inline void scale_in_place(std::span<double> a, double c) {
  for (double& v : a) v *= c;
}

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void normalize_in_place(std::span<double> a) {
  const double n = norm(a);
  if (n == 0.0) throw std::domain_error("cannot normalize a zero vector");
  scale_in_place(a, 1.0 / n);
}

inline Vec normalized(std::span<const double> a) {
  Vec out(a.begin(), a.end());
  normalize_in_place(out);
  return out;
}

// Cosine similarity; throws on zero vectors (callers that need a skip
// policy check norms themselves).
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace bce3s
