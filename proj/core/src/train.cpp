#include "bce3s/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bce3s/grads.hpp"

namespace bce3s {

void TrainConfig::validate() const {
  if (epochs_stage1 < 0 || epochs_stage2 < 0)
    throw std::invalid_argument("epoch counts must be >= 0");
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (feature_dim < 1 || projection_dim < 1)
    throw std::invalid_argument("feature_dim and projection_dim must be >= 1");
  if (projector_hidden < 0) throw std::invalid_argument("projector_hidden must be >= 0");
  if (metric_cadence < 0) throw std::invalid_argument("metric_cadence must be >= 0");
  for (int h : encoder_hidden)
    if (h < 1) throw std::invalid_argument("encoder hidden sizes must be >= 1");
  loss.validate();
}

double cosine_lr(long long step, long long total_steps, double lr0) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("step out of range");
  if (total_steps == 0) return lr0;
  constexpr double pi = 3.141592653589793238462643383279;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * (1.0 + std::cos(pi * frac)) / 2.0;
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum,
                       double weight_decay) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i] + weight_decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

void sgd_momentum_step_unit(std::span<double> row, std::span<const double> grads,
                            std::span<double> velocity, double lr, double momentum,
                            double weight_decay) {
  for (std::size_t i = 0; i < row.size(); ++i)
    velocity[i] = momentum * velocity[i] + grads[i] + weight_decay * row[i];
  // Remove the radial component of the step direction, then renormalize.
  const double w2 = squared_norm(row);
  const double radial = dot(velocity, row) / w2;
  for (std::size_t i = 0; i < row.size(); ++i)
    row[i] -= lr * (velocity[i] - radial * row[i]);
  normalize_in_place(row);
}

Model make_model(const TrainConfig& cfg, int input_dim, int num_classes) {
  cfg.validate();
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");

  Model model;
  model.input_dim = input_dim;

  if (!(cfg.encoder_hidden.empty() && input_dim == cfg.feature_dim)) {
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    dims.push_back(cfg.feature_dim);
    Rng rng(derive_seed(cfg.seed, 0xE0));
    model.encoder = Mlp(dims, cfg.nonlinearity, rng);
  }

  model.classifier = Classifier::random_unit(num_classes, cfg.feature_dim,
                                             cfg.loss.normalization,
                                             derive_seed(cfg.seed, 0xC0));

  const int hidden = cfg.projector_hidden > 0 ? cfg.projector_hidden : cfg.feature_dim;
  const std::vector<int> proj_dims = {cfg.feature_dim, hidden, cfg.projection_dim};
  Rng rng(derive_seed(cfg.seed, 0xF0));
  model.projector = Mlp(proj_dims, cfg.nonlinearity, rng);
  return model;
}

TripartiteParts batch_objective(const Model& model,
                                std::span<const LabeledFeature> batch_inputs,
                                const MemoryBank& bank, const LossConfig& cfg,
                                std::span<const NegativeMask> masks) {
  std::vector<LabeledFeature> features;
  std::vector<Vec> projections;
  features.reserve(batch_inputs.size());
  projections.reserve(batch_inputs.size());
  for (const auto& sample : batch_inputs) {
    const Model::Forward fwd = model.forward(sample.x);
    features.push_back({fwd.feature, sample.label});
    projections.push_back(fwd.projection);
  }
  return tripartite_parts(features, projections, model.classifier, bank, cfg, masks);
}

namespace {

constexpr std::uint64_t kMaskSaltBase = 0x4d61736bULL;  // per (epoch, batch) streams

struct Velocities {
  Mlp encoder;
  Mlp projector;
  std::vector<Vec> clf_w;
  Vec clf_b;

  static Velocities zeros_for(const Model& model) {
    Velocities v;
    v.encoder = Mlp::zeros_like(model.encoder);
    v.projector = Mlp::zeros_like(model.projector);
    v.clf_w.assign(model.classifier.weights.size(),
                   Vec(static_cast<std::size_t>(model.classifier.dim()), 0.0));
    v.clf_b.assign(model.classifier.biases.size(), 0.0);
    return v;
  }
};

struct BatchOutcome {
  TripartiteParts parts;
  int correct = 0;
};

class Trainer {
 public:
  Trainer(Model& model, const Dataset& ds, const TrainConfig& cfg)
      : model_(model), ds_(ds), cfg_(cfg), vel_(Velocities::zeros_for(model)),
        bank_(MemoryBank::empty(model.num_classes(), model.projection_dim())) {}

  // stage: 1 = full tripartite, 2 = class-balanced classifier fine-tune.
  void run_stage(int stage, int epochs, History* history, int epoch_offset) {
    if (epochs == 0) return;
    const auto split = subset_split(ds_.train_counts);
    std::vector<double> cb;
    if (stage == 2) {
      cb.resize(ds_.train_counts.size());
      for (std::size_t k = 0; k < cb.size(); ++k)
        cb[k] = cb_weight(ds_.train_counts[k], cfg_.loss.beta);
      freeze_features();
    }

    const long long batches_per_epoch = static_cast<long long>(
        (ds_.train.size() + static_cast<std::size_t>(cfg_.batch_size) - 1) /
        static_cast<std::size_t>(cfg_.batch_size));
    const long long total_steps = batches_per_epoch * epochs;
    long long step = 0;

    for (int e = 0; e < epochs; ++e) {
      const int epoch_label = epoch_offset + e + 1;
      const auto batches =
          batch_iter(ds_.train.size(), static_cast<std::size_t>(cfg_.batch_size),
                     derive_seed(cfg_.seed, stage), static_cast<std::uint64_t>(e));
      TripartiteParts epoch_parts;
      double first_lr = 0.0;
      long long correct = 0;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const double lr = cosine_lr(step, total_steps, cfg_.lr0);
        if (b == 0) first_lr = lr;
        BatchOutcome out;
        try {
          out = stage == 1 ? step_stage1(batches[b], e, b, lr)
                           : step_stage2(batches[b], cb, lr);
        } catch (const std::domain_error& err) {
          throw DivergenceError(err.what(), epoch_label - 1);
        }
        if (!std::isfinite(out.parts.total()))
          throw DivergenceError("loss became non-finite", epoch_label - 1);
        epoch_parts.sc += out.parts.sc;
        epoch_parts.ss += out.parts.ss;
        epoch_parts.cc += out.parts.cc;
        correct += out.correct;
        ++step;
      }

      if (history) {
        EpochStats stats;
        stats.epoch = epoch_label;
        stats.stage = stage;
        const double nb = static_cast<double>(batches.size());
        stats.loss_sc = epoch_parts.sc / nb;
        stats.loss_ss = epoch_parts.ss / nb;
        stats.loss_cc = epoch_parts.cc / nb;
        stats.loss_total = stats.loss_sc + stats.loss_ss + stats.loss_cc;
        stats.lr = first_lr;
        stats.train_acc =
            100.0 * static_cast<double>(correct) / static_cast<double>(ds_.train.size());
        stats.eval = evaluate(model_, ds_.test, split);
        history->epochs.push_back(std::move(stats));

        const bool cadence_hit =
            cfg_.metric_cadence > 0 &&
            ((e + 1) % cfg_.metric_cadence == 0 || e + 1 == epochs);
        if (cadence_hit) {
          history->metrics.push_back(
              {epoch_label, metric_report(encoded_train_features(), model_.classifier)});
        }
      }
    }
  }

  // Raw encoder outputs for the whole train set (metric snapshots and
  // checkpoint dumps share this definition of "feature").
  std::vector<LabeledFeature> encoded_train_features() const {
    std::vector<LabeledFeature> out;
    out.reserve(ds_.train.size());
    for (const auto& sample : ds_.train) {
      Vec f = model_.encoder.empty() ? sample.x : model_.encoder.forward(sample.x);
      out.push_back({std::move(f), sample.label});
    }
    return out;
  }

  const MemoryBank& bank() const { return bank_; }
  void set_bank(MemoryBank bank) { bank_ = std::move(bank); }

 private:
  // Mode-normalized feature the losses consume (stage 2 uses frozen copies).
  void freeze_features() {
    frozen_features_.clear();
    frozen_features_.reserve(ds_.train.size());
    for (const auto& sample : ds_.train) {
      Vec f = model_.encoder.empty() ? sample.x : model_.encoder.forward(sample.x);
      if (normalizes_feature(cfg_.loss.normalization)) normalize_in_place(f);
      frozen_features_.push_back(std::move(f));
    }
  }

  BatchOutcome step_stage1(const std::vector<std::size_t>& indices, int epoch,
                           std::size_t batch_index, double lr) {
    const bool use_bce = cfg_.loss.family == LossFamily::kBce;
    const ActivationKind act = activation_for(cfg_.loss.family);
    const bool contrastive_on = cfg_.loss.lambda_ss > 0.0;
    const bool uniform_on = cfg_.loss.lambda_cc > 0.0;
    const bool feature_norm = normalizes_feature(cfg_.loss.normalization);
    const bool train_encoder = !model_.encoder.empty();

    const int K = model_.num_classes();
    const std::size_t d = static_cast<std::size_t>(model_.feature_dim());
    const auto weights = model_.classifier.effective_weights();
    const double inv_b = 1.0 / static_cast<double>(indices.size());

    Mlp enc_grads = Mlp::zeros_like(model_.encoder);
    Mlp proj_grads = Mlp::zeros_like(model_.projector);
    std::vector<Vec> clf_w_grads(static_cast<std::size_t>(K), Vec(d, 0.0));
    Vec clf_b_grads(static_cast<std::size_t>(K), 0.0);
    std::vector<std::pair<int, Vec>> bank_writes;

    Rng mask_rng(derive_seed(cfg_.seed,
                             kMaskSaltBase + static_cast<std::uint64_t>(epoch) * 0x100000ULL +
                                 batch_index));

    BatchOutcome out;
    Mlp::Cache enc_cache, proj_cache;
    for (const std::size_t idx : indices) {
      const LabeledFeature& sample = ds_.train[idx];
      const std::size_t k = static_cast<std::size_t>(sample.label);

      Vec raw = model_.encoder.empty() ? sample.x
                                       : model_.encoder.forward(sample.x, enc_cache);
      double raw_norm = 0.0;
      Vec x = raw;
      if (feature_norm) {
        raw_norm = norm(raw);
        if (raw_norm == 0.0) throw std::domain_error("encoder output collapsed to zero");
        scale_in_place(x, 1.0 / raw_norm);
      }

      Vec logits(static_cast<std::size_t>(K));
      for (int j = 0; j < K; ++j)
        logits[static_cast<std::size_t>(j)] =
            dot(weights[static_cast<std::size_t>(j)], x) +
            model_.classifier.biases[static_cast<std::size_t>(j)];
      if (!all_finite(logits)) throw std::domain_error("logits became non-finite");
      if (argmax_lowest(logits) == sample.label) ++out.correct;

      const NegativeMask mask = draw_negative_mask(sample.label, K, cfg_.loss.r, mask_rng);
      out.parts.sc += inv_b * (use_bce ? bce_joint_from_logits(logits, sample.label, mask)
                                       : ce_joint_from_logits(logits, sample.label));

      const Vec dlogits = joint_logit_grads(logits, sample.label, mask, act);
      Vec dx(d, 0.0);
      for (int j = 0; j < K; ++j) {
        const double g = dlogits[static_cast<std::size_t>(j)] * inv_b;
        if (g == 0.0) continue;
        axpy(g, x, clf_w_grads[static_cast<std::size_t>(j)]);
        clf_b_grads[static_cast<std::size_t>(j)] += g;
        if (train_encoder) axpy(g, weights[static_cast<std::size_t>(j)], dx);
      }

      if (contrastive_on) {
        Vec u = model_.projector.forward(x, proj_cache);
        const double u_norm = norm(u);
        if (u_norm == 0.0) throw std::domain_error("projection collapsed to zero");
        Vec z = u;
        scale_in_place(z, 1.0 / u_norm);
        bank_writes.emplace_back(sample.label, z);

        if (bank_.initialized[k]) {
          const auto loss = use_bce ? bce_contrastive(z, sample.label, bank_, cfg_.loss.tau)
                                    : ce_contrastive(z, sample.label, bank_, cfg_.loss.tau);
          out.parts.ss += cfg_.loss.lambda_ss * inv_b * loss.value();
          Vec dz = grad_contrastive_wrt_projection(z, sample.label, bank_, cfg_.loss.tau, act);
          scale_in_place(dz, cfg_.loss.lambda_ss * inv_b / u_norm);
          Vec dx_proj = model_.projector.backward(proj_cache, dz, proj_grads);
          if (train_encoder) axpy(1.0, dx_proj, dx);
        }
      }

      if (train_encoder) {
        if (feature_norm) {
          // x = raw/||raw||: remove the radial part, scale by 1/||raw||.
          const double radial = dot(dx, x);
          for (std::size_t t = 0; t < d; ++t) dx[t] = (dx[t] - radial * x[t]) / raw_norm;
        }
        model_.encoder.backward(enc_cache, dx, enc_grads);
      }
    }

    if (uniform_on) {
      for (const auto& w : weights) {
        if (std::abs(norm(w) - 1.0) > 1e-5)
          throw std::invalid_argument(
              "uniform learning requires classifier normalization");
      }
      double cc_sum = 0.0;
      for (int k = 0; k < K; ++k)
        cc_sum += use_bce ? bce_uniform_raw(weights, k, cfg_.loss.include_cc_positive)
                          : ce_uniform_raw(weights, k);
      out.parts.cc = cfg_.loss.lambda_cc / static_cast<double>(K) * cc_sum;
      const auto uniform_grads =
          grad_uniform_raw(weights, act, cfg_.loss.include_cc_positive);
      for (int k = 0; k < K; ++k)
        axpy(cfg_.loss.lambda_cc, uniform_grads[static_cast<std::size_t>(k)],
             clf_w_grads[static_cast<std::size_t>(k)]);
    }

    apply_updates(lr, /*update_encoder=*/train_encoder,
                  /*update_projector=*/contrastive_on, enc_grads, proj_grads,
                  clf_w_grads, clf_b_grads);

    if (contrastive_on) bank_ = bank_update(bank_, bank_writes);
    return out;
  }

  BatchOutcome step_stage2(const std::vector<std::size_t>& indices,
                           const std::vector<double>& cb, double lr) {
    const bool use_bce = cfg_.loss.family == LossFamily::kBce;
    const ActivationKind act = activation_for(cfg_.loss.family);
    const int K = model_.num_classes();
    const std::size_t d = static_cast<std::size_t>(model_.feature_dim());
    const auto weights = model_.classifier.effective_weights();
    const double inv_b = 1.0 / static_cast<double>(indices.size());
    const NegativeMask mask = NegativeMask::all(K, true);  // r forced to 1

    std::vector<Vec> clf_w_grads(static_cast<std::size_t>(K), Vec(d, 0.0));
    Vec clf_b_grads(static_cast<std::size_t>(K), 0.0);

    BatchOutcome out;
    for (const std::size_t idx : indices) {
      const LabeledFeature& sample = ds_.train[idx];
      const Vec& x = frozen_features_[idx];
      Vec logits(static_cast<std::size_t>(K));
      for (int j = 0; j < K; ++j)
        logits[static_cast<std::size_t>(j)] =
            dot(weights[static_cast<std::size_t>(j)], x) +
            model_.classifier.biases[static_cast<std::size_t>(j)];
      if (!all_finite(logits)) throw std::domain_error("logits became non-finite");
      if (argmax_lowest(logits) == sample.label) ++out.correct;

      const double weight = cb[static_cast<std::size_t>(sample.label)];
      out.parts.sc +=
          weight * inv_b * (use_bce ? bce_joint_from_logits(logits, sample.label, mask)
                                    : ce_joint_from_logits(logits, sample.label));

      const Vec dlogits = joint_logit_grads(logits, sample.label, mask, act);
      for (int j = 0; j < K; ++j) {
        const double g = dlogits[static_cast<std::size_t>(j)] * inv_b * weight;
        if (g == 0.0) continue;
        axpy(g, x, clf_w_grads[static_cast<std::size_t>(j)]);
        clf_b_grads[static_cast<std::size_t>(j)] += g;
      }
    }

    Mlp no_grads;
    apply_updates(lr, /*update_encoder=*/false, /*update_projector=*/false, no_grads,
                  no_grads, clf_w_grads, clf_b_grads);
    return out;
  }

  void apply_updates(double lr, bool update_encoder, bool update_projector,
                     Mlp& enc_grads, Mlp& proj_grads, std::vector<Vec>& clf_w_grads,
                     Vec& clf_b_grads) {
    if (update_encoder) {
      for (std::size_t l = 0; l < model_.encoder.layers().size(); ++l) {
        auto& layer = model_.encoder.layers()[l];
        auto& g = enc_grads.layers()[l];
        auto& v = vel_.encoder.layers()[l];
        sgd_momentum_step(layer.w, g.w, v.w, lr, cfg_.momentum, cfg_.weight_decay);
        sgd_momentum_step(layer.b, g.b, v.b, lr, cfg_.momentum, 0.0);
      }
    }
    if (update_projector) {
      for (std::size_t l = 0; l < model_.projector.layers().size(); ++l) {
        auto& layer = model_.projector.layers()[l];
        auto& g = proj_grads.layers()[l];
        auto& v = vel_.projector.layers()[l];
        sgd_momentum_step(layer.w, g.w, v.w, lr, cfg_.momentum, cfg_.weight_decay);
        sgd_momentum_step(layer.b, g.b, v.b, lr, cfg_.momentum, 0.0);
      }
    }
    const bool unit_rows = normalizes_classifier(cfg_.loss.normalization);
    for (std::size_t k = 0; k < model_.classifier.weights.size(); ++k) {
      auto& row = model_.classifier.weights[k];
      if (unit_rows) {
        sgd_momentum_step_unit(row, clf_w_grads[k], vel_.clf_w[k], lr, cfg_.momentum,
                               cfg_.weight_decay);
      } else {
        sgd_momentum_step(row, clf_w_grads[k], vel_.clf_w[k], lr, cfg_.momentum,
                          cfg_.weight_decay);
      }
    }
    sgd_momentum_step(model_.classifier.biases, clf_b_grads, vel_.clf_b, lr,
                      cfg_.momentum, 0.0);
  }

  Model& model_;
  const Dataset& ds_;
  const TrainConfig& cfg_;
  Velocities vel_;
  MemoryBank bank_;
  std::vector<Vec> frozen_features_;
};

}  // namespace

TrainResult train_stage1(Model model, const Dataset& ds, const TrainConfig& cfg,
                         const MemoryBank* initial_bank) {
  cfg.validate();
  if (ds.train.empty()) throw std::invalid_argument("dataset must be nonempty");
  TrainResult result{std::move(model), MemoryBank::empty(0, 0), History{}};
  Trainer trainer(result.model, ds, cfg);
  if (initial_bank != nullptr) trainer.set_bank(*initial_bank);
  trainer.run_stage(1, cfg.epochs_stage1, &result.history, 0);
  result.bank = trainer.bank();
  return result;
}

void finetune_stage2(Model& model, const Dataset& ds, const TrainConfig& cfg,
                     History* history) {
  cfg.validate();
  if (ds.train.empty()) throw std::invalid_argument("dataset must be nonempty");
  if (cfg.epochs_stage2 == 0) return;
  Trainer trainer(model, ds, cfg);
  trainer.run_stage(2, cfg.epochs_stage2, history, cfg.epochs_stage1);
}

EvalReport evaluate(const Model& model, std::span<const LabeledFeature> test,
                    const SubsetSplit& split) {
  if (test.empty()) throw std::invalid_argument("test set must be nonempty");
  const int K = model.num_classes();
  std::vector<long long> totals(static_cast<std::size_t>(K), 0);
  std::vector<long long> hits(static_cast<std::size_t>(K), 0);
  for (const auto& sample : test) {
    const std::size_t k = static_cast<std::size_t>(sample.label);
    ++totals[k];
    if (model.predict(sample.x) == sample.label) ++hits[k];
  }

  EvalReport report;
  report.per_class.resize(static_cast<std::size_t>(K), 0.0);
  long long hit_sum = 0;
  for (int k = 0; k < K; ++k) {
    const std::size_t kk = static_cast<std::size_t>(k);
    report.per_class[kk] =
        totals[kk] > 0 ? 100.0 * static_cast<double>(hits[kk]) / static_cast<double>(totals[kk])
                       : 0.0;
    hit_sum += hits[kk];
  }
  report.acc_all = 100.0 * static_cast<double>(hit_sum) / static_cast<double>(test.size());

  const auto subset_acc = [&](const std::vector<int>& classes) -> std::optional<double> {
    if (classes.empty()) return std::nullopt;
    long long t = 0;
    long long h = 0;
    for (int k : classes) {
      t += totals[static_cast<std::size_t>(k)];
      h += hits[static_cast<std::size_t>(k)];
    }
    if (t == 0) return std::nullopt;
    return 100.0 * static_cast<double>(h) / static_cast<double>(t);
  };
  report.acc_many = subset_acc(split.many);
  report.acc_medium = subset_acc(split.medium);
  report.acc_few = subset_acc(split.few);
  return report;
}

UniformDynamics run_uniform_dynamics(int num_classes, int dim, long long steps,
                                     double lr, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");

  const std::size_t K = static_cast<std::size_t>(num_classes);
  Rng rng(seed);
  std::vector<Vec> w(K, Vec(static_cast<std::size_t>(dim)));
  for (auto& row : w) {
    do {
      for (auto& v : row) v = rng.gaussian();
    } while (norm(row) == 0.0);
    normalize_in_place(row);
  }

  const double target = -1.0 / static_cast<double>(num_classes - 1);
  const auto measure = [&]() {
    double dev = 0.0;
    for (std::size_t j = 0; j < K; ++j)
      for (std::size_t k = j + 1; k < K; ++k)
        dev = std::max(dev, std::abs(dot(w[j], w[k]) - target));
    return dev;
  };
  const auto loss_value = [&]() {
    double total = 0.0;
    for (int k = 0; k < num_classes; ++k) total += bce_uniform_raw(w, k, false);
    return total / static_cast<double>(num_classes);
  };

  UniformDynamics result;
  result.deviation.push_back(measure());
  result.loss.push_back(loss_value());
  for (long long t = 0; t < steps; ++t) {
    const auto grads = grad_uniform_raw(w, ActivationKind::kSigmoidBce, false);
    for (std::size_t k = 0; k < K; ++k) {
      const Vec tangent = project_out_radial(grads[k], w[k]);
      axpy(-lr, tangent, w[k]);
      normalize_in_place(w[k]);
    }
    result.deviation.push_back(measure());
    result.loss.push_back(loss_value());
  }
  result.final_deviation = result.deviation.back();
  result.weights = std::move(w);
  return result;
}

}  // namespace bce3s
