#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cgn/synthgen.hpp"
#include "cgn/trainer.hpp"

using namespace cgn;

namespace {

ModelConfig small_model(std::size_t dim = 16) {
  ModelConfig c;
  c.feature_dim = dim;
  c.hidden = 12;
  c.message_dim = 8;
  c.readout_hidden = 12;
  return c;
}

std::vector<ConceptGraph> synth(std::size_t per_class, double sigma, std::uint64_t seed) {
  SynthConfig s;
  s.class_counts.assign(4, per_class);
  s.sigma = sigma;
  s.seed = seed;
  return generate_dataset(s).graphs;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::vector({1.0, -2.0, 3.0});
  Tensor* params[] = {&p};
  const Tensor g = Tensor::zeros({3});
  AdamState s;
  for (int i = 0; i < 10; ++i) adam_step(params, std::span<const Tensor>(&g, 1), s, 0.1);
  EXPECT_EQ(p.data, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::vector({1.0, 1.0, 1.0});
  Tensor* params[] = {&p};
  const Tensor g = Tensor::vector({0.3, -5.0, 1e-3});
  AdamState s;
  adam_step(params, std::span<const Tensor>(&g, 1), s, 0.01);
  EXPECT_NEAR(p.data[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.data[1], 1.0 + 0.01, 1e-9);
  EXPECT_NEAR(p.data[2], 1.0 - 0.01, 1e-7);
}

TEST(Adam, MinimisesQuadratic) {
  Tensor p = Tensor::vector({5.0});
  Tensor* params[] = {&p};
  AdamState s;
  int steps = 0;
  for (; steps < 2000 && std::abs(p.data[0]) >= 1e-3; ++steps) {
    const Tensor g = Tensor::vector({2.0 * p.data[0]});
    adam_step(params, std::span<const Tensor>(&g, 1), s, 0.1);
  }
  EXPECT_LT(std::abs(p.data[0]), 1e-3) << "after " << steps << " steps";
}

TEST(Adam, NonFiniteGradientIsRejectedBeforeUpdate) {
  Tensor p = Tensor::vector({1.0, 2.0});
  Tensor* params[] = {&p};
  const Tensor g = Tensor::vector({0.1, std::nan("")});
  AdamState s;
  EXPECT_THROW(adam_step(params, std::span<const Tensor>(&g, 1), s, 0.1), NumericError);
  EXPECT_EQ(p.data, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(s.t, 0u);
  const Tensor wrong = Tensor::zeros({3});
  EXPECT_THROW(adam_step(params, std::span<const Tensor>(&wrong, 1), s, 0.1), DimensionError);
}

TEST(TrainConfig, RejectsBadValues) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.check(), ConfigError);
  c = TrainConfig{};
  c.lr = -1.0;
  EXPECT_THROW(c.check(), ConfigError);
  c = TrainConfig{};
  c.decay_factor = 1.5;
  EXPECT_THROW(c.check(), ConfigError);
}

TEST(TrainEpoch, SameSeedGivesIdenticalLossSequence) {
  const auto data = prepare(synth(6, 0.15, 1));
  TrainConfig cfg;
  cfg.batch_size = 5;
  cfg.seed = 3;
  std::vector<double> runs[2];
  for (auto& run : runs) {
    GcnModel m = init_model(small_model(), 4);
    TrainState st = make_train_state(cfg);
    for (st.epoch = 0; st.epoch < 5; ++st.epoch) run.push_back(train_epoch(m, data, cfg, st));
  }
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(TrainEpoch, EpochOrderIsSeededPermutation) {
  const auto a = epoch_order(50, 9, 2);
  EXPECT_EQ(a, epoch_order(50, 9, 2));
  EXPECT_NE(a, epoch_order(50, 9, 3));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(TrainEpoch, MemorisesSingleGraph) {
  const auto data = prepare(std::vector<ConceptGraph>{synth(2, 0.15, 2)[0]});
  GcnModel m = init_model(small_model(), 5);
  TrainConfig cfg;
  TrainState st = make_train_state(cfg);
  for (st.epoch = 0; st.epoch < 500; ++st.epoch) train_epoch(m, data, cfg, st);
  EXPECT_LT(mean_loss(m, data), 0.01);
}

TEST(TrainEpoch, OversizedBatchIsOneFullBatch) {
  const auto data = prepare(synth(3, 0.15, 3));
  TrainConfig big;
  big.batch_size = 1000;
  TrainConfig exact = big;
  exact.batch_size = data.size();
  GcnModel a = init_model(small_model(), 6), b = a;
  TrainState sa = make_train_state(big), sb = make_train_state(exact);
  const double la = train_epoch(a, data, big, sa), lb = train_epoch(b, data, exact, sb);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(sa.adam.t, 1u);
  EXPECT_TRUE(same_weights(a, b));
}

TEST(TrainEpoch, FixedBatchLossDecreases) {
  const auto data = prepare(synth(8, 0.05, 4));
  std::vector<const PreparedGraph*> batch;
  for (const auto& g : data) batch.push_back(&g);
  GcnModel m = init_model(ModelConfig{}, 7);
  auto params = m.parameters();
  AdamState adam;
  std::vector<Tensor> grads;
  std::vector<double> losses;
  for (int step = 0; step < 6; ++step) {
    losses.push_back(batch_gradient(m, batch, grads));
    adam_step(params, grads, adam, 1e-3);
  }
  int non_decreasing = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) non_decreasing += !(losses[i] < losses[i - 1]);
  EXPECT_LE(non_decreasing, 1) << losses[0] << " " << losses[5];
  EXPECT_LT(losses[5], losses[0]);
}

TEST(Plateau, FlatLossHalvesAtEpochEleven) {
  TrainConfig cfg;
  PlateauScheduler s(0.01, cfg);
  for (int epoch = 1; epoch <= 10; ++epoch) EXPECT_EQ(s.step(1.0), 0.01) << epoch;
  EXPECT_EQ(s.step(1.0), 0.005);
}

TEST(Plateau, ImprovementBelowThresholdCountsAsFlat) {
  TrainConfig cfg;
  PlateauScheduler s(0.01, cfg);
  double loss = 1.0;
  for (int epoch = 1; epoch <= 10; ++epoch) s.step(loss -= 5e-6);
  EXPECT_EQ(s.step(loss -= 5e-6), 0.005);
  PlateauScheduler t(0.01, cfg);
  loss = 1.0;
  for (int epoch = 1; epoch <= 30; ++epoch) EXPECT_EQ(t.step(loss -= 1e-3), 0.01);
}

TEST(Plateau, ClampsAtMinimumLearningRate) {
  TrainConfig cfg;
  PlateauScheduler s(0.01, cfg);
  double prev = s.lr();
  for (int epoch = 0; epoch < 1000; ++epoch) {
    const double lr = s.step(1.0);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, cfg.min_lr);
    prev = lr;
  }
  EXPECT_EQ(prev, cfg.min_lr);
}

TEST(Fit, EmptyValidationIsConfigError) {
  const auto data = prepare(synth(2, 0.15, 5));
  EXPECT_THROW(fit(init_model(small_model(), 1), data, {}, TrainConfig{}), ConfigError);
}

TEST(Fit, HistoryLengthAndNonIncreasingLr) {
  const auto graphs = synth(10, 0.3, 6);
  const auto parts = split(graphs, {0.7, 0.2, 0.1}, 1);
  const auto train = prepare(parts.train), val = prepare(parts.validation);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 8;
  cfg.patience = 2;
  const auto r = fit(init_model(small_model(), 2), train, val, cfg);
  ASSERT_EQ(r.history.size(), 40u);
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    EXPECT_EQ(r.history[i].epoch, i + 1);
    if (i) {
      EXPECT_LE(r.history[i].lr, r.history[i - 1].lr);
    }
  }
  EXPECT_EQ(r.best_val_loss, r.history[r.best_epoch - 1].val_loss);
  EXPECT_DOUBLE_EQ(mean_loss(r.model, val), r.best_val_loss);
  const std::string csv = history_csv(r.history);
  EXPECT_EQ(csv.rfind("epoch,train_loss,val_loss,lr\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);
}

TEST(Fit, SeparableDataReachesHighValidationAccuracy) {
  const auto graphs = synth(60, 0.05, 7);
  const auto parts = split(graphs, {0.7, 0.2, 0.1}, 7);
  const auto train = prepare(parts.train), val = prepare(parts.validation);
  TrainConfig cfg;
  cfg.seed = 7;
  const auto r = fit(init_model(ModelConfig{}, 7), train, val, cfg);
  EXPECT_GE(evaluate(r.model, val).accuracy, 0.95) << "best epoch " << r.best_epoch;
}

TEST(Evaluate, PureAndDoesNotMutateWeights) {
  const auto data = prepare(synth(5, 0.15, 8));
  const GcnModel m = init_model(small_model(), 3);
  const GcnModel copy = m;
  const auto a = evaluate(m, data), b = evaluate(m, data);
  EXPECT_TRUE(same_weights(m, copy));
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_EQ(a.f1, b.f1);
  EXPECT_THROW(evaluate(m, std::span<const PreparedGraph>{}), ContractError);
}

TEST(Evaluate, AllCorrectModelScoresOne) {
  const auto graphs = synth(3, 0.01, 9);
  const auto data = prepare(std::span(graphs).first(10));
  GcnModel m = init_model(small_model(), 9);
  TrainConfig cfg;
  TrainState st = make_train_state(cfg);
  for (st.epoch = 0; st.epoch < 300 && evaluate(m, data).accuracy < 1.0; ++st.epoch) train_epoch(m, data, cfg, st);
  EXPECT_EQ(evaluate(m, data).accuracy, 1.0);
}

TEST(Evaluate, RandomModelIsNearChance) {
  const auto data = prepare(synth(100, 0.15, 10));
  double sum = 0.0;
  const int models = 10;
  for (int s = 0; s < models; ++s) sum += evaluate(init_model(ModelConfig{}, 1000 + s), data).accuracy;
  EXPECT_NEAR(sum / models, 0.25, 0.1);
}
