#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>

#include "mtl/error.hpp"
#include "mtl/training.hpp"
#include "synthetic.hpp"

namespace mtl {
namespace {

Matrix logits(double a, double b) {
  Matrix m(1, 2);
  m(0, 0) = a;
  m(0, 1) = b;
  return m;
}

TaskExamples keyword_data(const EncoderConfig& enc, std::size_t n, std::uint64_t seed) {
  TaskExamples out;
  for (Task t : kAllTasks) out[t] = testing::keyword_examples(t, n, seed, enc);
  return out;
}

TrainConfig fast_config() {
  TrainConfig c;
  c.learning_rate = {1e-3, 1e-3};
  c.max_epochs = 4;
  c.patience = 4;
  c.step_size = 50;
  c.seed = 2;
  return c;
}

TEST(Loss, CrossEntropyValues) {
  EXPECT_NEAR(cross_entropy(logits(0, 0), 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(logits(0, 0), 1), 0.693147, 1e-6);
  EXPECT_LT(cross_entropy(logits(20, -20), 0), 1e-8);
  EXPECT_NEAR(cross_entropy(logits(1, 0), 1), -std::log(1.0 / (1.0 + std::exp(1.0))), 1e-15);
  EXPECT_NEAR(cross_entropy(logits(1, 0), 1), 1.313262, 1e-6);
  EXPECT_THROW(cross_entropy(logits(0, 0), 2), Error);
}

TEST(Loss, JointLossExamples) {
  EXPECT_DOUBLE_EQ(joint_loss(0.7, 0.3, 0.0).total, 0.7);
  for (double b : {0.0, 0.01, 0.3, 1.0}) EXPECT_DOUBLE_EQ(joint_loss(1.0, 1.0, b).total, 1.0);
  EXPECT_NEAR(joint_loss(0.5, 1.5, 0.1).total, 0.60, 1e-15);
  EXPECT_THROW(joint_loss(0.5, 0.5, 1.2), Error);
  EXPECT_THROW(joint_loss(0.5, 0.5, -0.1), Error);
  EXPECT_THROW(joint_loss(-0.5, 0.5, 0.1), Error);
}

TEST(Loss, JointLossIsAffineInBeta) {
  const double ld = 0.8123, ls = 0.2345;
  const double f0 = joint_loss(ld, ls, 0.0).total;
  const double f1 = joint_loss(ld, ls, 1.0).total;
  const double fh = joint_loss(ld, ls, 0.5).total;
  EXPECT_NEAR(fh, 0.5 * (f0 + f1), 1e-15);
  for (double b = 0.0; b <= 1.0; b += 0.05) EXPECT_NEAR(joint_loss(ld, ls, b).total, f0 + b * (f1 - f0), 1e-15);
}

TEST(Schedule, StepLrValues) {
  for (std::size_t e = 0; e < 5; ++e) EXPECT_DOUBLE_EQ(step_lr(1e-5, e), 1e-5);
  EXPECT_NEAR(step_lr(1e-5, 5), 1e-6, 1e-21);
  EXPECT_NEAR(step_lr(1e-4, 14), 1e-6, 1e-21);
  EXPECT_NEAR(step_lr(1e-4, 15), 1e-7, 1e-22);
}

TEST(EarlyStoppingTest, HaltsAtEighthNonImprovingEpoch) {
  EarlyStopping stop(8);
  const std::vector<double> seq = {1.0, 0.9, 0.95, 0.95, 0.97, 0.91, 0.99, 0.92, 0.93, 0.95, 0.5};
  std::size_t halted_at = seq.size();
  for (std::size_t e = 0; e < seq.size(); ++e) {
    if (stop.observe(seq[e])) {
      halted_at = e;
      break;
    }
  }
  EXPECT_EQ(halted_at, 9u);  // epochs 2..9 are the 8 non-improving ones
  EXPECT_EQ(stop.best_epoch(), 1u);
  EXPECT_DOUBLE_EQ(stop.best_value(), 0.9);
}

TEST(EarlyStoppingTest, EqualValueIsNotAnImprovement) {
  EarlyStopping stop(2);
  EXPECT_FALSE(stop.observe(1.0));
  EXPECT_FALSE(stop.observe(1.0));
  EXPECT_FALSE(stop.improved_last());
  EXPECT_TRUE(stop.observe(1.0));
  EXPECT_EQ(stop.best_epoch(), 0u);
}

TEST(AdamTest, FirstStepMovesByLearningRateTimesSign) {
  Parameter p("p", Matrix(1, 3));
  p.grad(0, 0) = 0.5;
  p.grad(0, 1) = -2.0;
  p.grad(0, 2) = 0.0;
  Adam adam("a", {&p});
  adam.step(0.01);
  EXPECT_NEAR(p.value(0, 0), -0.01, 1e-9);
  EXPECT_NEAR(p.value(0, 1), 0.01, 1e-9);
  EXPECT_EQ(p.value(0, 2), 0.0);
  EXPECT_EQ(adam.last_learning_rate(), 0.01);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Partition, SharedAndDepressionVersusStress) {
  ModelGraph model(testing::tiny_spec(ModelFamily::kDoubleEncoders));
  const auto part = optimizer_partition(model);
  EXPECT_EQ(part.size(), model.parameters().size());
  EXPECT_EQ(part.at("shared.token_embedding"), "depression");
  EXPECT_EQ(part.at("depression.head.weight"), "depression");
  EXPECT_EQ(part.at("stress.encoder.token_embedding"), "stress");
  EXPECT_EQ(part.at("stress.head.bias"), "stress");
}

TEST(Config, ValidationCatchesBadValues) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beta = 1.2;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.learning_rate.stress = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.patience = c.max_epochs + 1;
  EXPECT_THROW(c.validate(), Error);
  c.patience = c.max_epochs;
  EXPECT_NO_THROW(c.validate());
}

// Gradient of the joint loss on the shared encoder equals the beta-weighted sum
// of the per-task gradients.
TEST(JointStep, SharedGradientSuperposes) {
  const auto spec = testing::tiny_spec(ModelFamily::kAttentionFusion, 4);
  ModelGraph model(spec);
  const auto data = keyword_data(spec.encoder, 4, 3);
  const double beta = 0.3;
  auto grads_for = [&](double wd, double ws) {
    model.zero_grad();
    ad::Tape tape;
    std::vector<ad::Var> d, s;
    for (const auto& ex : data.depression)
      d.push_back(ad::cross_entropy(model.forward(tape, ex.tokens, Task::kDepression).logits, ex.label));
    for (const auto& ex : data.stress)
      s.push_back(ad::cross_entropy(model.forward(tape, ex.tokens, Task::kStress).logits, ex.label));
    tape.backward(ad::add(ad::scale(ad::mean(d), wd), ad::scale(ad::mean(s), ws)));
    std::vector<Matrix> out;
    for (Parameter* p : model.shared_parameters()) out.push_back(p->grad);
    return out;
  };
  const auto gd = grads_for(1.0, 0.0);
  const auto gs = grads_for(0.0, 1.0);
  const auto gj = grads_for(1.0 - beta, beta);
  double worst = 0.0;
  for (std::size_t k = 0; k < gj.size(); ++k) {
    for (std::size_t i = 0; i < gj[k].size(); ++i) {
      const double expect = (1.0 - beta) * gd[k][i] + beta * gs[k][i];
      worst = std::max(worst, std::abs(gj[k][i] - expect) / std::max({std::abs(expect), std::abs(gj[k][i]), 1e-12}));
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(JointStep, BetaZeroFreezesStressParameters) {
  for (auto fam : {ModelFamily::kDoubleEncoders, ModelFamily::kAttentionFusion}) {
    const auto spec = testing::tiny_spec(fam, 6);
    ModelGraph model(spec);
    std::vector<Matrix> before;
    for (Parameter* p : model.task_parameters(Task::kStress)) before.push_back(p->value);
    const Matrix shared_before = model.find("shared.token_embedding")->value;

    auto config = fast_config();
    config.beta = 0.0;
    MultitaskTrainer trainer(model, config);
    const auto data = keyword_data(spec.encoder, 16, 5);
    PairedStream<Example> stream(data.depression, data.stress, 4, 1);
    std::size_t steps = 0;
    for (std::size_t e = 0; steps < 10; ++e) {
      for (const auto& pair : stream.epoch(e)) {
        if (steps++ == 10) break;
        trainer.step(pair, e);
      }
    }
    const auto after = model.task_parameters(Task::kStress);
    for (std::size_t k = 0; k < after.size(); ++k) EXPECT_EQ(after[k]->value, before[k]) << after[k]->name;
    EXPECT_NE(model.find("shared.token_embedding")->value, shared_before);
    EXPECT_EQ(trainer.optimizer(Task::kStress).steps(), 10u);
  }
}

TEST(JointStep, BetaOneFreezesDepressionParameters) {
  const auto spec = testing::tiny_spec(ModelFamily::kAttentionFusion, 6);
  ModelGraph model(spec);
  std::vector<Matrix> before;
  for (Parameter* p : model.task_parameters(Task::kDepression)) before.push_back(p->value);
  const Matrix shared_before = model.find("shared.token_embedding")->value;
  auto config = fast_config();
  config.beta = 1.0;
  MultitaskTrainer trainer(model, config);
  const auto data = keyword_data(spec.encoder, 16, 5);
  PairedStream<Example> stream(data.depression, data.stress, 4, 1);
  for (const auto& pair : stream.epoch(0)) trainer.step(pair, 0);
  const auto after = model.task_parameters(Task::kDepression);
  for (std::size_t k = 0; k < after.size(); ++k) EXPECT_EQ(after[k]->value, before[k]) << after[k]->name;
  // shared parameters still learn from the stress term
  EXPECT_NE(model.find("shared.token_embedding")->value, shared_before);
}

TEST(Training, RecordedLearningRatesFollowTheSchedule) {
  const auto spec = testing::tiny_spec(ModelFamily::kDoubleEncoders, 2);
  ModelGraph model(spec);
  const auto train = keyword_data(spec.encoder, 8, 1);
  const auto val = keyword_data(spec.encoder, 4, 2);
  auto config = fast_config();
  config.learning_rate = {1e-5, 1e-5};
  config.step_size = 5;
  config.max_epochs = 15;
  config.patience = 15;
  const auto history = train_mtl(model, train, val, config);
  ASSERT_EQ(history.epochs.size(), 15u);
  for (const auto& e : history.epochs) {
    const double expected = 1e-5 * std::pow(0.1, static_cast<double>(e.epoch / 5));
    EXPECT_DOUBLE_EQ(e.learning_rates.at("depression"), expected);
    EXPECT_DOUBLE_EQ(e.learning_rates.at("stress"), expected);
  }
}

TEST(Training, HistoryObeysPatienceAndBestEpoch) {
  const auto spec = testing::tiny_spec(ModelFamily::kStl, 9);
  ModelGraph model(spec);
  const auto train = testing::keyword_examples(Task::kDepression, 16, 1, spec.encoder);
  const auto val = testing::keyword_examples(Task::kDepression, 6, 2, spec.encoder);
  auto config = fast_config();
  config.learning_rate = {3e-2, 3e-2};
  config.max_epochs = 40;
  config.patience = 3;
  std::size_t improvements = 0;
  TrainHooks hooks;
  hooks.on_improvement = [&](const ModelGraph&, const EpochRecord&) { ++improvements; };
  const auto history = train_stl(model, train, val, config, hooks);

  EarlyStopping replay(config.patience);
  std::size_t replay_improvements = 0;
  bool replay_stopped = false;
  for (const auto& e : history.epochs) {
    replay_stopped = replay.observe(e.monitored);
    replay_improvements += replay.improved_last();
  }
  EXPECT_EQ(history.best_epoch, replay.best_epoch());
  EXPECT_EQ(history.stopped_early, replay_stopped);
  EXPECT_EQ(improvements, replay_improvements);
  for (const auto& e : history.epochs) EXPECT_GE(e.monitored, history.best_monitored());
  // the model is left at its best epoch
  EXPECT_DOUBLE_EQ(mean_loss(model, val, Task::kDepression), history.best_monitored());
}

TEST(Training, SameSeedSameHistory) {
  const auto spec = testing::tiny_spec(ModelFamily::kAttentionFusion, 3);
  const auto train = keyword_data(spec.encoder, 12, 1);
  const auto val = keyword_data(spec.encoder, 4, 2);
  auto config = fast_config();
  config.beta = 0.1;
  ModelGraph a(spec), b(spec);
  const auto ha = train_mtl(a, train, val, config);
  const auto hb = train_mtl(b, train, val, config);
  ASSERT_EQ(ha.epochs.size(), hb.epochs.size());
  for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
    EXPECT_EQ(ha.epochs[i].monitored, hb.epochs[i].monitored);
    EXPECT_EQ(ha.epochs[i].train_loss.depression, hb.epochs[i].train_loss.depression);
    EXPECT_EQ(ha.epochs[i].train_loss.stress, hb.epochs[i].train_loss.stress);
  }
  EXPECT_EQ(ha.best_epoch, hb.best_epoch);
}

TEST(Training, SingleTaskOverfitsSeparableData) {
  const auto spec = testing::tiny_spec(ModelFamily::kStl, 7, Task::kStress);
  ModelGraph model(spec);
  const auto train = testing::keyword_examples(Task::kStress, 64, 1, spec.encoder);
  auto config = fast_config();
  config.max_epochs = 60;
  config.patience = 60;
  // validate on the training set so the restored epoch is the best fit
  train_stl(model, train, train, config);
  EXPECT_GE(accuracy(model, train, Task::kStress), 0.95);
}

TEST(Training, EmptyInputsAreRefused) {
  const auto spec = testing::tiny_spec(ModelFamily::kStl);
  ModelGraph model(spec);
  const auto some = testing::keyword_examples(Task::kDepression, 4, 1, spec.encoder);
  EXPECT_THROW(train_stl(model, {}, some, fast_config()), Error);
  EXPECT_THROW(train_stl(model, some, {}, fast_config()), Error);
  ModelGraph mtl(testing::tiny_spec(ModelFamily::kDoubleEncoders));
  TaskExamples partial;
  partial.depression = some;
  EXPECT_THROW(train_mtl(mtl, partial, partial, fast_config()), Error);
  EXPECT_THROW(MultitaskTrainer(model, fast_config()), Error);
}

TEST(Training, NonFiniteWeightsAbortLoudly) {
  const auto spec = testing::tiny_spec(ModelFamily::kStl);
  ModelGraph model(spec);
  model.find("head.weight")->value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto some = testing::keyword_examples(Task::kDepression, 4, 1, spec.encoder);
  EXPECT_THROW(train_stl(model, some, some, fast_config()), Error);
}

TEST(Training, SinglePrecisionModeTracksDoublePrecision) {
  const auto spec = testing::tiny_spec(ModelFamily::kDoubleEncoders, 3);
  const auto train = keyword_data(spec.encoder, 8, 1);
  auto config = fast_config();
  config.max_epochs = 2;
  config.patience = 2;
  ModelGraph wide(spec), narrow(spec);
  const auto h64 = train_mtl(wide, train, train, config);
  config.precision = ad::Precision::kSingle;
  const auto h32 = train_mtl(narrow, train, train, config);
  ASSERT_EQ(h32.epochs.size(), h64.epochs.size());
  for (std::size_t i = 0; i < h32.epochs.size(); ++i) {
    EXPECT_TRUE(std::isfinite(h32.epochs[i].monitored));
    EXPECT_NEAR(h32.epochs[i].monitored, h64.epochs[i].monitored, 1e-3);
  }
  EXPECT_NE(h32.epochs[0].monitored, h64.epochs[0].monitored);
}

TEST(Transfer, PhaseTwoStartsFromPhaseOneBestEncoders) {
  const auto spec = testing::tiny_spec(ModelFamily::kStl, 5);
  const auto train = keyword_data(spec.encoder, 12, 1);
  const auto val = keyword_data(spec.encoder, 4, 2);
  auto config = fast_config();
  config.max_epochs = 3;
  config.patience = 3;

  std::map<std::string, Matrix> best_source;
  std::map<std::string, Matrix> target_start;
  TransferSettings settings;
  settings.source_learning_rate = 1e-3;
  settings.target_learning_rate = 1e-3;
  settings.source_hooks.on_improvement = [&](const ModelGraph& m, const EpochRecord&) {
    for (const Parameter* p : m.parameters()) best_source[p->name] = p->value;
  };
  settings.on_target_start = [&](const ModelGraph& m) {
    for (const Parameter* p : m.parameters()) target_start[p->name] = p->value;
  };
  const auto result = transfer_train(spec, Task::kDepression, Task::kStress, train, val, config, settings);

  ASSERT_FALSE(target_start.empty());
  for (const auto& [name, value] : target_start) {
    if (name.rfind("encoder.", 0) == 0) EXPECT_EQ(value, best_source.at(name)) << name;
  }
  EXPECT_NE(target_start.at("head.weight"), best_source.at("head.weight"));
  ModelGraph reseeded(spec);
  reseeded.retarget(Task::kStress, "transfer-head");
  EXPECT_EQ(target_start.at("head.weight"), reseeded.find("head.weight")->value);
  EXPECT_EQ(result.model.spec().stl_task, Task::kStress);
  EXPECT_EQ(result.model.lineage, settings.source_checkpoint_id);
  EXPECT_THROW(transfer_train(spec, Task::kStress, Task::kStress, train, val, config), Error);
}

}  // namespace
}  // namespace mtl
