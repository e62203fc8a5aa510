#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mtl/autodiff.hpp"
#include "mtl/corpus.hpp"
#include "mtl/models.hpp"
#include "mtl/task.hpp"

namespace mtl {

// A tokenized, labeled post ready for the model.
struct Example {
  std::string id;
  TokenizedPost tokens;
  int label = 0;
};

std::vector<Example> tokenize_all(const std::vector<LabeledPost>& posts, const Tokenizer& tokenizer);

// Mean cross-entropy of plain logits; stable log-sum-exp form.
double cross_entropy(const Matrix& logits, int label);

struct LossBreakdown {
  double loss_depression = 0.0;
  double loss_stress = 0.0;
  double beta = 0.0;
  double total = 0.0;
};

// total = (1 - beta) * depression + beta * stress.
LossBreakdown joint_loss(double loss_depression, double loss_stress, double beta);
ad::Var joint_loss(ad::Var loss_depression, ad::Var loss_stress, double beta);

inline constexpr std::size_t kDefaultStepSize = 5;
inline constexpr double kDefaultGamma = 0.1;

// base * gamma^floor(epoch / step_size)
double step_lr(double base_lr, std::size_t epoch, std::size_t step_size = kDefaultStepSize,
               double gamma = kDefaultGamma);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam without weight decay over a fixed parameter partition.
class Adam {
 public:
  Adam(std::string name, std::vector<Parameter*> params, AdamSettings settings = {});

  void step(double learning_rate);

  const std::string& name() const { return name_; }
  const std::vector<Parameter*>& parameters() const { return params_; }
  std::size_t steps() const { return steps_; }
  // Rate passed to the most recent step(); 0 before the first step.
  double last_learning_rate() const { return last_lr_; }

 private:
  std::string name_;
  std::vector<Parameter*> params_;
  AdamSettings settings_;
  std::vector<Matrix> m_, v_;
  std::size_t steps_ = 0;
  double last_lr_ = 0.0;
};

// Stops once `patience` consecutive epochs fail to improve on the best value.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when training should halt after this epoch.
  bool observe(double monitored);

  bool improved_last() const { return improved_last_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  std::size_t epochs_without_improvement() const { return stale_; }

 private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0.0;
  bool improved_last_ = false;
};

struct TrainConfig {
  PerTask<double> learning_rate{1e-5, 1e-5};
  std::size_t step_size = kDefaultStepSize;
  double gamma = kDefaultGamma;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 15;
  std::size_t patience = 8;
  double beta = 0.0;
  std::uint64_t seed = 0;
  AdamSettings adam;
  ad::Precision precision = ad::Precision::kDouble;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  PerTask<std::optional<double>> train_loss;
  PerTask<std::optional<double>> validation_loss;
  double monitored = 0.0;  // joint validation loss (mtl) or task validation loss (stl)
  std::map<std::string, double> learning_rates;
  double wall_seconds = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  double best_monitored() const { return epochs.at(best_epoch).monitored; }
};

nlohmann::json to_json(const TrainingHistory& history);

struct TrainHooks {
  // Called after every epoch whose monitored loss is a new minimum.
  std::function<void(const ModelGraph&, const EpochRecord&)> on_improvement;
  std::function<void(const EpochRecord&)> on_epoch;
};

using TaskExamples = PerTask<std::vector<Example>>;

// Optimizer partition used for joint training: the depression optimizer owns
// shared + depression parameters, the stress optimizer owns stress parameters.
std::map<std::string, std::string> optimizer_partition(ModelGraph& model);

// One joint step engine. Exposed so tests can drive individual steps.
class MultitaskTrainer {
 public:
  MultitaskTrainer(ModelGraph& model, const TrainConfig& config);

  // Forward both batches, one backward pass on the joint loss, both optimizers step.
  LossBreakdown step(const TaskBatchPair<Example>& pair, std::size_t epoch);
  // Mean per-task validation losses plus the joint value at the configured beta.
  LossBreakdown evaluate(const TaskExamples& data) const;

  Adam& optimizer(Task task) { return optimizers_[task]; }

 private:
  ModelGraph* model_;
  TrainConfig config_;
  PerTask<Adam> optimizers_;
  std::size_t steps_ = 0;
};

// Mean cross-entropy of `task` over examples with a non-recording tape.
double mean_loss(ModelGraph& model, const std::vector<Example>& examples, Task task,
                 ad::Precision precision = ad::Precision::kDouble);
std::vector<int> predict_labels(ModelGraph& model, const std::vector<Example>& examples, Task task,
                                ad::Precision precision = ad::Precision::kDouble);
double accuracy(ModelGraph& model, const std::vector<Example>& examples, Task task,
                ad::Precision precision = ad::Precision::kDouble);

// Joint training of a double-encoders or attention-fusion graph. The model is
// left holding its best-epoch parameters.
TrainingHistory train_mtl(ModelGraph& model, const TaskExamples& train, const TaskExamples& validation,
                          const TrainConfig& config, const TrainHooks& hooks = {});

// Single-objective training of a stacked-encoder graph on its task.
TrainingHistory train_stl(ModelGraph& model, const std::vector<Example>& train,
                          const std::vector<Example>& validation, const TrainConfig& config,
                          const TrainHooks& hooks = {});

struct TransferSettings {
  double source_learning_rate = 1e-4;
  double target_learning_rate = 1e-5;
  std::string source_checkpoint_id = "source";
  // Called with the graph exactly as phase 2 begins.
  std::function<void(const ModelGraph&)> on_target_start;
  TrainHooks source_hooks;
  TrainHooks target_hooks;
};

struct TransferResult {
  ModelGraph model;
  TrainingHistory source_history;
  TrainingHistory target_history;
};

// Phase 1 trains on `source`; phase 2 keeps the encoders, reseeds the head and
// fine-tunes on `target`.
TransferResult transfer_train(const ModelSpec& spec, Task source, Task target, const TaskExamples& train,
                              const TaskExamples& validation, const TrainConfig& config,
                              const TransferSettings& settings = {});

}  // namespace mtl
