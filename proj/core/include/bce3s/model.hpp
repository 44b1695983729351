#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bce3s/rng.hpp"
#include "bce3s/types.hpp"

namespace bce3s {

enum class Nonlinearity { kTanh, kRelu };

std::string to_string(Nonlinearity n);
Nonlinearity nonlinearity_from_string(const std::string& s);

struct LinearLayer {
  int in = 0;
  int out = 0;
  Vec w;  // out x in, row-major
  Vec b;  // out
};

// Small fully-connected stack; nonlinearity between layers, none after the
// last. Backward accumulates parameter gradients into a same-shaped Mlp.
class Mlp {
 public:
  struct Cache {
    std::vector<Vec> inputs;   // input to each layer
    std::vector<Vec> preacts;  // pre-activation output of each layer
  };

  Mlp() = default;
  Mlp(std::span<const int> dims, Nonlinearity nl, Rng& rng);

  bool empty() const { return layers_.empty(); }
  int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

  Vec forward(std::span<const double> x) const;
  Vec forward(std::span<const double> x, Cache& cache) const;
  // dy is dL/d(output); returns dL/d(input); grads accumulates.
  Vec backward(const Cache& cache, std::span<const double> dy, Mlp& grads) const;

  static Mlp zeros_like(const Mlp& other);
  void fill(double value);

  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  Nonlinearity nonlinearity() const { return nonlinearity_; }

 private:
  std::vector<LinearLayer> layers_;
  Nonlinearity nonlinearity_ = Nonlinearity::kTanh;
};

// Encoder (identity when empty) -> classifier; projector branches off the
// mode-normalized feature and its output is L2-normalized.
struct Model {
  Mlp encoder;
  Classifier classifier;
  Mlp projector;
  int input_dim = 0;

  struct Forward {
    Vec feature;     // mode-normalized feature consumed by the joint loss
    Vec logits;
    Vec projection;  // unit-norm
  };

  Forward forward(std::span<const double> input) const;
  // argmax over logits; ties broken by lowest class index.
  int predict(std::span<const double> input) const;

  int feature_dim() const { return classifier.dim(); }
  int num_classes() const { return classifier.num_classes(); }
  int projection_dim() const { return projector.output_dim(); }
};

int argmax_lowest(std::span<const double> v);

// Flat views over all trainable parameters, in a fixed order
// (encoder, classifier weights, classifier biases, projector).
Vec flatten_params(const Model& model);
void unflatten_params(Model& model, std::span<const double> theta);

}  // namespace bce3s
