#include "bce3s/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bce3s/losses.hpp"

namespace bce3s {

std::string to_string(Nonlinearity n) {
  return n == Nonlinearity::kTanh ? "tanh" : "relu";
}

Nonlinearity nonlinearity_from_string(const std::string& s) {
  if (s == "tanh") return Nonlinearity::kTanh;
  if (s == "relu") return Nonlinearity::kRelu;
  throw std::invalid_argument("unknown nonlinearity '" + s + "' (expected tanh|relu)");
}

Mlp::Mlp(std::span<const int> dims, Nonlinearity nl, Rng& rng) : nonlinearity_(nl) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    LinearLayer layer;
    layer.in = dims[i];
    layer.out = dims[i + 1];
    if (layer.in < 1 || layer.out < 1) throw std::invalid_argument("mlp dims must be >= 1");
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
    for (auto& v : layer.w) v = rng.uniform(-bound, bound);
    layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
    layers_.push_back(std::move(layer));
  }
}

namespace {

inline double activate(double x, Nonlinearity nl) {
  return nl == Nonlinearity::kTanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

inline double activate_grad(double pre, Nonlinearity nl) {
  if (nl == Nonlinearity::kTanh) {
    const double t = std::tanh(pre);
    return 1.0 - t * t;
  }
  return pre > 0.0 ? 1.0 : 0.0;
}

Vec linear_forward(const LinearLayer& layer, std::span<const double> x) {
  Vec y(static_cast<std::size_t>(layer.out));
  for (int o = 0; o < layer.out; ++o) {
    const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
    double s = layer.b[static_cast<std::size_t>(o)];
    for (int i = 0; i < layer.in; ++i) s += row[i] * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = s;
  }
  return y;
}

}  // namespace

Vec Mlp::forward(std::span<const double> x) const {
  Vec cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cur = linear_forward(layers_[l], cur);
    if (l + 1 < layers_.size())
      for (auto& v : cur) v = activate(v, nonlinearity_);
  }
  return cur;
}

Vec Mlp::forward(std::span<const double> x, Cache& cache) const {
  cache.inputs.clear();
  cache.preacts.clear();
  Vec cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.inputs.push_back(cur);
    cur = linear_forward(layers_[l], cur);
    cache.preacts.push_back(cur);
    if (l + 1 < layers_.size())
      for (auto& v : cur) v = activate(v, nonlinearity_);
  }
  return cur;
}

Vec Mlp::backward(const Cache& cache, std::span<const double> dy, Mlp& grads) const {
  Vec delta(dy.begin(), dy.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LinearLayer& layer = layers_[l];
    LinearLayer& g = grads.layers_[l];
    // delta currently holds dL/d(activation output of layer l); fold in the
    // activation derivative except for the final (linear) layer.
    if (l + 1 < layers_.size()) {
      for (int o = 0; o < layer.out; ++o)
        delta[static_cast<std::size_t>(o)] *=
            activate_grad(cache.preacts[l][static_cast<std::size_t>(o)], nonlinearity_);
    }
    const Vec& input = cache.inputs[l];
    for (int o = 0; o < layer.out; ++o) {
      const double dout = delta[static_cast<std::size_t>(o)];
      if (dout == 0.0) continue;
      double* grow = g.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) grow[i] += dout * input[static_cast<std::size_t>(i)];
      g.b[static_cast<std::size_t>(o)] += dout;
    }
    Vec dx(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double dout = delta[static_cast<std::size_t>(o)];
      if (dout == 0.0) continue;
      const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) dx[static_cast<std::size_t>(i)] += dout * row[i];
    }
    delta = std::move(dx);
  }
  return delta;
}

Mlp Mlp::zeros_like(const Mlp& other) {
  Mlp out;
  out.nonlinearity_ = other.nonlinearity_;
  out.layers_ = other.layers_;
  out.fill(0.0);
  return out;
}

void Mlp::fill(double value) {
  for (auto& layer : layers_) {
    std::fill(layer.w.begin(), layer.w.end(), value);
    std::fill(layer.b.begin(), layer.b.end(), value);
  }
}

Model::Forward Model::forward(std::span<const double> input) const {
  Forward out;
  out.feature = encoder.empty() ? Vec(input.begin(), input.end()) : encoder.forward(input);
  if (normalizes_feature(classifier.normalization)) normalize_in_place(out.feature);

  const auto weights = classifier.effective_weights();
  out.logits.resize(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j)
    out.logits[j] = dot(weights[j], out.feature) + classifier.biases[j];

  out.projection = projector.forward(out.feature);
  normalize_in_place(out.projection);
  return out;
}

int Model::predict(std::span<const double> input) const {
  Vec feature = encoder.empty() ? Vec(input.begin(), input.end()) : encoder.forward(input);
  if (normalizes_feature(classifier.normalization)) normalize_in_place(feature);
  const auto weights = classifier.effective_weights();
  Vec logits(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j)
    logits[j] = dot(weights[j], feature) + classifier.biases[j];
  return argmax_lowest(logits);
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

namespace {

void append_mlp(const Mlp& mlp, Vec& out) {
  for (const auto& layer : mlp.layers()) {
    out.insert(out.end(), layer.w.begin(), layer.w.end());
    out.insert(out.end(), layer.b.begin(), layer.b.end());
  }
}

std::size_t read_mlp(Mlp& mlp, std::span<const double> theta, std::size_t pos) {
  for (auto& layer : mlp.layers()) {
    for (auto& v : layer.w) v = theta[pos++];
    for (auto& v : layer.b) v = theta[pos++];
  }
  return pos;
}

}  // namespace

Vec flatten_params(const Model& model) {
  Vec out;
  append_mlp(model.encoder, out);
  for (const auto& row : model.classifier.weights) out.insert(out.end(), row.begin(), row.end());
  out.insert(out.end(), model.classifier.biases.begin(), model.classifier.biases.end());
  append_mlp(model.projector, out);
  return out;
}

void unflatten_params(Model& model, std::span<const double> theta) {
  std::size_t pos = read_mlp(model.encoder, theta, 0);
  for (auto& row : model.classifier.weights)
    for (auto& v : row) v = theta[pos++];
  for (auto& b : model.classifier.biases) b = theta[pos++];
  pos = read_mlp(model.projector, theta, pos);
  if (pos != theta.size()) throw std::invalid_argument("parameter vector length mismatch");
}

}  // namespace bce3s
