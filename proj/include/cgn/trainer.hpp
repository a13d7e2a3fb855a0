// Mini-batch training of GcnModel: Adam on mean cross-entropy, deterministic
// per-epoch shuffling, reduce-on-plateau learning-rate decay and retention of
// the best-validation weights.
#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgn/adam.hpp"
#include "cgn/dataset_io.hpp"
#include "cgn/errors.hpp"
#include "cgn/gcn_model.hpp"
#include "cgn/metrics.hpp"

namespace cgn {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr = 1e-2;
  AdamConfig adam;
  std::size_t patience = 10;
  double decay_factor = 0.5;
  double min_lr = 1e-5;
  double min_improvement = 1e-4;
  std::uint64_t seed = 0;

  void check() const {
    if (epochs == 0 || batch_size == 0 || patience == 0)
      throw ConfigError("epochs, batch size and patience must be positive");
    if (!(lr > 0.0) || !(min_lr > 0.0) || !(adam.eps > 0.0))
      throw ConfigError("learning rates and epsilon must be positive");
    if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ConfigError("decay factor must lie in (0,1)");
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0))
      throw ConfigError("Adam betas must lie in (0,1)");
  }
};

/// A graph converted once into the tensors the model consumes.
struct PreparedGraph {
  GraphTensors tensors;
  std::size_t label = 0;
};

inline std::vector<PreparedGraph> prepare(std::span<const ConceptGraph> graphs) {
  std::vector<PreparedGraph> out;
  out.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (auto v = validate(graphs[i]); !v.empty())
      throw ValidationError("graph " + std::to_string(i) + ": " + describe(v));
    out.push_back({to_tensors(graphs[i]), static_cast<std::size_t>(graphs[i].label)});
  }
  return out;
}

/// Cross-entropy of one graph; adds d loss / d parameter into `grads` when given.
inline double graph_loss(const GcnModel& model, const PreparedGraph& g, std::vector<Tensor>* grads) {
  Tape tape;
  Var x = tape.borrow(g.tensors.node_features, false);
  Var e = tape.borrow(g.tensors.edge_features, false);
  if (!grads) return cross_entropy(model.forward(tape, g.tensors, x, e).logits, g.label).value().item();
  std::vector<Var> params;
  Var loss = cross_entropy(model.forward(tape, g.tensors, x, e, &params).logits, g.label);
  tape.backward(loss);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor gi = tape.gradient(params[i]);
    auto& acc = (*grads)[i].data;
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += gi.data[k];
  }
  return loss.value().item();
}

inline double mean_loss(const GcnModel& model, std::span<const PreparedGraph> data) {
  if (data.empty()) throw ContractError("mean_loss: empty dataset");
  double s = 0.0;
  for (const auto& g : data) s += graph_loss(model, g, nullptr);
  return s / static_cast<double>(data.size());
}

inline std::vector<Tensor> zero_like(const GcnModel& model) {
  std::vector<Tensor> out;
  for (const Tensor* p : model.parameters()) out.push_back(Tensor::zeros(p->shape));
  return out;
}

/// Batch-mean loss gradient and the batch-mean loss.
inline double batch_gradient(const GcnModel& model, std::span<const PreparedGraph* const> batch,
                             std::vector<Tensor>& grads) {
  grads = zero_like(model);
  double loss = 0.0;
  for (const PreparedGraph* g : batch) loss += graph_loss(model, *g, &grads);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& t : grads)
    for (double& v : t.data) v *= inv;
  return loss * inv;
}

struct TrainState {
  AdamState adam;
  std::size_t epoch = 0;  // epochs completed
  double lr = 0.0;
};

inline TrainState make_train_state(const TrainConfig& cfg) {
  TrainState s;
  s.lr = cfg.lr;
  return s;
}

/// Visiting order for epoch `epoch`, seeded by (seed xor epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// One pass over `data` in shuffled mini-batches (batch size clamped to the
/// dataset size), one Adam step per batch. Returns the mean batch loss.
inline double train_epoch(GcnModel& model, std::span<const PreparedGraph> data, const TrainConfig& cfg,
                          TrainState& state) {
  if (data.empty()) throw ContractError("train_epoch: empty dataset");
  const auto order = epoch_order(data.size(), cfg.seed, state.epoch);
  const std::size_t batch = std::min(cfg.batch_size, data.size());
  auto params = model.parameters();
  std::vector<Tensor> grads;
  std::vector<const PreparedGraph*> members;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += batch, ++batches) {
    members.clear();
    for (std::size_t i = start; i < std::min(start + batch, order.size()); ++i)
      members.push_back(&data[order[i]]);
    try {
      total += batch_gradient(model, members, grads);
      adam_step(params, grads, state.adam, state.lr, cfg.adam);
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(batches) + ": " + e.what());
    }
  }
  ++state.epoch;
  return total / static_cast<double>(batches);
}

/// Reduce-on-plateau: after `patience` consecutive epochs without an
/// improvement larger than `min_improvement`, lr <- max(lr * factor, min_lr).
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, const TrainConfig& cfg) : lr_(lr), cfg_(cfg) {}

  double step(double val_loss) {
    if (val_loss < best_ - cfg_.min_improvement) {
      best_ = val_loss;
      stale_ = 0;
    } else if (++stale_ >= cfg_.patience) {
      lr_ = std::max(lr_ * cfg_.decay_factor, cfg_.min_lr);
      stale_ = 0;
    }
    return lr_;
  }
  double lr() const noexcept { return lr_; }

 private:
  double lr_;
  TrainConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // after this epoch's scheduler step
};

struct FitResult {
  GcnModel model;  // best-validation weights
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

inline FitResult fit(GcnModel model, std::span<const PreparedGraph> train,
                     std::span<const PreparedGraph> validation, const TrainConfig& cfg) {
  cfg.check();
  if (validation.empty()) throw ConfigError("fit: validation set is empty");
  if (train.empty()) throw ConfigError("fit: training set is empty");
  FitResult result;
  result.model = model;
  TrainState state = make_train_state(cfg);
  PlateauScheduler scheduler(cfg.lr, cfg);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double train_loss = train_epoch(model, train, cfg, state);
    const double val_loss = mean_loss(model, validation);
    state.lr = scheduler.step(val_loss);
    result.history.push_back({epoch, train_loss, val_loss, state.lr});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.lr);
    out += buf;
  }
  return out;
}

struct Evaluation {
  Metrics metrics;
  std::vector<PredictionScores> predictions;
};

inline Evaluation evaluate_detailed(const GcnModel& model, std::span<const PreparedGraph> data) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  Evaluation ev;
  std::vector<std::size_t> truth;
  std::vector<std::vector<double>> probs;
  for (const auto& g : data) {
    ev.predictions.push_back(model.predict(g.tensors));
    truth.push_back(g.label);
    probs.push_back(ev.predictions.back().probabilities);
  }
  ev.metrics = compute_metrics(truth, probs, model.num_classes());
  return ev;
}

inline Metrics evaluate(const GcnModel& model, std::span<const PreparedGraph> data) {
  return evaluate_detailed(model, data).metrics;
}

}  // namespace cgn
