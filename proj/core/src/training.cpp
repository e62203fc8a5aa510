#include "mtl/training.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mtl/error.hpp"
#include "mtl/random.hpp"

namespace mtl {

namespace {

using Clock = std::chrono::steady_clock;

struct ParameterSnapshot {
  std::vector<Matrix> values;

  static ParameterSnapshot take(ModelGraph& model) {
    ParameterSnapshot s;
    for (const Parameter* p : model.parameters()) s.values.push_back(p->value);
    return s;
  }
  void restore(ModelGraph& model) const {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
  }
};

ad::Var batch_loss(ad::Tape& tape, ModelGraph& model, const std::vector<Example>& batch, Task task) {
  std::vector<ad::Var> losses;
  losses.reserve(batch.size());
  for (const Example& ex : batch) {
    losses.push_back(ad::cross_entropy(model.forward(tape, ex.tokens, task).logits, ex.label));
  }
  return ad::mean(losses);
}

void check_finite_loss(double value, std::size_t epoch, const char* what) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kDiverged,
                std::string("training diverged: non-finite ") + what + " loss at epoch " + std::to_string(epoch));
  }
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t step) { return mix_seed(derive_seed(seed, "dropout"), step); }

std::optional<double> to_opt(double v) { return v; }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::vector<Example> tokenize_all(const std::vector<LabeledPost>& posts, const Tokenizer& tokenizer) {
  std::vector<Example> out;
  out.reserve(posts.size());
  for (const LabeledPost& p : posts) out.push_back({p.id, tokenizer.tokenize(p.text), p.label});
  return out;
}

double cross_entropy(const Matrix& logits, int label) {
  ad::Tape tape(false);
  return ad::cross_entropy(tape.constant(logits), label).scalar();
}

LossBreakdown joint_loss(double loss_depression, double loss_stress, double beta) {
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::kInvalidArgument,
          "beta must lie in [0, 1], got " + std::to_string(beta));
  require(loss_depression >= 0.0 && loss_stress >= 0.0, ErrorCode::kInvalidArgument, "losses must be non-negative");
  return {loss_depression, loss_stress, beta, (1.0 - beta) * loss_depression + beta * loss_stress};
}

ad::Var joint_loss(ad::Var loss_depression, ad::Var loss_stress, double beta) {
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::kInvalidArgument,
          "beta must lie in [0, 1], got " + std::to_string(beta));
  return ad::add(ad::scale(loss_depression, 1.0 - beta), ad::scale(loss_stress, beta));
}

double step_lr(double base_lr, std::size_t epoch, std::size_t step_size, double gamma) {
  require(step_size > 0, ErrorCode::kInvalidArgument, "step size must be positive");
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

Adam::Adam(std::string name, std::vector<Parameter*> params, AdamSettings settings)
    : name_(std::move(name)), params_(std::move(params)), settings_(settings) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step(double learning_rate) {
  ++steps_;
  last_lr_ = learning_rate;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
    }
  }
}

bool EarlyStopping::observe(double monitored) {
  const std::size_t epoch = seen_++;
  if (epoch == 0 || monitored < best_) {
    best_ = monitored;
    best_epoch_ = epoch;
    stale_ = 0;
    improved_last_ = true;
  } else {
    ++stale_;
    improved_last_ = false;
  }
  return stale_ >= patience_;
}

void TrainConfig::validate() const {
  require(learning_rate.depression > 0.0 && learning_rate.stress > 0.0, ErrorCode::kConfig,
          "learning rates must be positive");
  require(batch_size >= 1, ErrorCode::kConfig, "batch size must be at least 1");
  require(max_epochs >= 1, ErrorCode::kConfig, "max_epochs must be at least 1");
  require(patience >= 1 && patience <= max_epochs, ErrorCode::kConfig,
          "patience must lie in [1, max_epochs], got " + std::to_string(patience));
  require(step_size >= 1, ErrorCode::kConfig, "scheduler step size must be at least 1");
  require(gamma > 0.0, ErrorCode::kConfig, "scheduler gamma must be positive");
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::kConfig, "beta must lie in [0, 1], got " + std::to_string(beta));
}

nlohmann::json to_json(const TrainingHistory& history) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", {{"depression", opt_json(e.train_loss.depression)},
                                      {"stress", opt_json(e.train_loss.stress)}}},
                      {"validation_loss", {{"depression", opt_json(e.validation_loss.depression)},
                                           {"stress", opt_json(e.validation_loss.stress)}}},
                      {"monitored_validation_loss", e.monitored},
                      {"learning_rates", e.learning_rates},
                      {"wall_seconds", e.wall_seconds}});
  }
  return {{"epochs", epochs}, {"best_epoch", history.best_epoch}, {"stopped_early", history.stopped_early}};
}

std::map<std::string, std::string> optimizer_partition(ModelGraph& model) {
  std::map<std::string, std::string> out;
  if (!model.is_multitask()) {
    for (const Parameter* p : model.parameters()) out[p->name] = "stl";
    return out;
  }
  for (const Parameter* p : model.shared_parameters()) out[p->name] = "depression";
  for (Task t : kAllTasks) {
    for (const Parameter* p : model.task_parameters(t)) out[p->name] = to_string(t);
  }
  return out;
}

MultitaskTrainer::MultitaskTrainer(ModelGraph& model, const TrainConfig& config)
    : model_(&model),
      config_(config),
      optimizers_{Adam("depression",
                       [&] {
                         auto params = model.shared_parameters();
                         auto own = model.task_parameters(Task::kDepression);
                         params.insert(params.end(), own.begin(), own.end());
                         return params;
                       }(),
                       config.adam),
                  Adam("stress", model.task_parameters(Task::kStress), config.adam)} {
  require(model.is_multitask(), ErrorCode::kInvalidArgument, "joint training needs a double or fusion graph");
  config_.validate();
}

LossBreakdown MultitaskTrainer::step(const TaskBatchPair<Example>& pair, std::size_t epoch) {
  require(!pair.depression.empty() && !pair.stress.empty(), ErrorCode::kInvalidArgument,
          "joint step needs both batches");
  ad::Tape tape(true, config_.precision);
  if (model_->spec().encoder.dropout > 0.0) tape.enable_dropout(step_seed(config_.seed, steps_));
  ad::Var ld = batch_loss(tape, *model_, pair.depression, Task::kDepression);
  ad::Var ls = batch_loss(tape, *model_, pair.stress, Task::kStress);
  ad::Var total = joint_loss(ld, ls, config_.beta);
  check_finite_loss(total.scalar(), epoch, "joint training");
  model_->zero_grad();
  tape.backward(total);
  for (Task t : kAllTasks) {
    optimizers_[t].step(step_lr(config_.learning_rate[t], epoch, config_.step_size, config_.gamma));
  }
  ++steps_;
  return {ld.scalar(), ls.scalar(), config_.beta, total.scalar()};
}

LossBreakdown MultitaskTrainer::evaluate(const TaskExamples& data) const {
  const double ld = mean_loss(*model_, data.depression, Task::kDepression, config_.precision);
  const double ls = mean_loss(*model_, data.stress, Task::kStress, config_.precision);
  return {ld, ls, config_.beta, (1.0 - config_.beta) * ld + config_.beta * ls};
}

double mean_loss(ModelGraph& model, const std::vector<Example>& examples, Task task, ad::Precision precision) {
  require(!examples.empty(), ErrorCode::kInvalidArgument, "mean_loss over no examples");
  double sum = 0.0;
  for (const Example& ex : examples) {
    ad::Tape tape(false, precision);
    sum += ad::cross_entropy(model.forward(tape, ex.tokens, task).logits, ex.label).scalar();
  }
  return sum / static_cast<double>(examples.size());
}

std::vector<int> predict_labels(ModelGraph& model, const std::vector<Example>& examples, Task task,
                                ad::Precision precision) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const Example& ex : examples) out.push_back(classify(predict_logits(model, ex.tokens, task, precision)).label);
  return out;
}

double accuracy(ModelGraph& model, const std::vector<Example>& examples, Task task, ad::Precision precision) {
  require(!examples.empty(), ErrorCode::kInvalidArgument, "accuracy over no examples");
  const auto predictions = predict_labels(model, examples, task, precision);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) correct += predictions[i] == examples[i].label;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainingHistory train_mtl(ModelGraph& model, const TaskExamples& train, const TaskExamples& validation,
                          const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  require(!validation.depression.empty() && !validation.stress.empty(), ErrorCode::kInvalidArgument,
          "joint training needs validation data for both tasks");
  MultitaskTrainer trainer(model, config);
  PairedStream<Example> stream(train.depression, train.stress, config.batch_size, derive_seed(config.seed, "stream"));
  EarlyStopping stopper(config.patience);
  TrainingHistory history;
  ParameterSnapshot best = ParameterSnapshot::take(model);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord record;
    record.epoch = epoch;
    double sum_d = 0.0, sum_s = 0.0;
    const auto pairs = stream.epoch(epoch);
    for (const auto& pair : pairs) {
      const LossBreakdown l = trainer.step(pair, epoch);
      sum_d += l.loss_depression;
      sum_s += l.loss_stress;
    }
    for (Task t : kAllTasks) record.learning_rates[to_string(t)] = trainer.optimizer(t).last_learning_rate();
    record.train_loss.depression = sum_d / static_cast<double>(pairs.size());
    record.train_loss.stress = sum_s / static_cast<double>(pairs.size());

    const LossBreakdown val = trainer.evaluate(validation);
    check_finite_loss(val.total, epoch, "validation");
    record.validation_loss.depression = to_opt(val.loss_depression);
    record.validation_loss.stress = to_opt(val.loss_stress);
    record.monitored = val.total;
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    history.epochs.push_back(record);

    const bool stop = stopper.observe(record.monitored);
    spdlog::debug("epoch {} train d={:.5f} s={:.5f} val joint={:.5f}{}", epoch, *record.train_loss.depression,
                  *record.train_loss.stress, record.monitored, stopper.improved_last() ? " *" : "");
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (stopper.improved_last()) {
      best = ParameterSnapshot::take(model);
      if (hooks.on_improvement) hooks.on_improvement(model, record);
    }
    if (stop) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  best.restore(model);
  return history;
}

TrainingHistory train_stl(ModelGraph& model, const std::vector<Example>& train,
                          const std::vector<Example>& validation, const TrainConfig& config,
                          const TrainHooks& hooks) {
  config.validate();
  require(model.family() == ModelFamily::kStl, ErrorCode::kInvalidArgument, "train_stl needs a single-task graph");
  require(!train.empty(), ErrorCode::kInvalidArgument, "train_stl: refusing an empty training stream");
  require(!validation.empty(), ErrorCode::kInvalidArgument, "train_stl: refusing an empty validation split");
  const Task task = model.spec().stl_task;
  Adam optimizer("stl", model.parameters(), config.adam);
  EarlyStopping stopper(config.patience);
  TrainingHistory history;
  ParameterSnapshot best = ParameterSnapshot::take(model);
  const std::uint64_t stream_seed = derive_seed(config.seed, "stream");
  std::size_t steps = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord record;
    record.epoch = epoch;
    const double lr = step_lr(config.learning_rate[task], epoch, config.step_size, config.gamma);
    double sum = 0.0;
    const auto batches = shuffled_batches(train, config.batch_size, stream_seed, epoch);
    for (const auto& batch : batches) {
      ad::Tape tape(true, config.precision);
      if (model.spec().encoder.dropout > 0.0) tape.enable_dropout(step_seed(config.seed, steps));
      ad::Var loss = batch_loss(tape, model, batch, task);
      check_finite_loss(loss.scalar(), epoch, "training");
      model.zero_grad();
      tape.backward(loss);
      optimizer.step(lr);
      sum += loss.scalar();
      ++steps;
    }
    record.learning_rates["stl"] = optimizer.last_learning_rate();
    record.train_loss[task] = sum / static_cast<double>(batches.size());
    const double val = mean_loss(model, validation, task, config.precision);
    check_finite_loss(val, epoch, "validation");
    record.validation_loss[task] = val;
    record.monitored = val;
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    history.epochs.push_back(record);

    const bool stop = stopper.observe(val);
    spdlog::debug("epoch {} train={:.5f} val={:.5f}{}", epoch, *record.train_loss[task], val,
                  stopper.improved_last() ? " *" : "");
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (stopper.improved_last()) {
      best = ParameterSnapshot::take(model);
      if (hooks.on_improvement) hooks.on_improvement(model, record);
    }
    if (stop) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  best.restore(model);
  return history;
}

TransferResult transfer_train(const ModelSpec& spec, Task source, Task target, const TaskExamples& train,
                              const TaskExamples& validation, const TrainConfig& config,
                              const TransferSettings& settings) {
  require(source != target, ErrorCode::kInvalidArgument, "transfer learning needs distinct source and target tasks");
  require(spec.family == ModelFamily::kStl, ErrorCode::kInvalidArgument, "transfer learning uses the stl family");
  ModelSpec source_spec = spec;
  source_spec.stl_task = source;
  ModelGraph model(source_spec);

  TrainConfig phase1 = config;
  phase1.learning_rate[source] = settings.source_learning_rate;
  TrainingHistory source_history = train_stl(model, train[source], validation[source], phase1, settings.source_hooks);

  model.retarget(target, "transfer-head");
  model.lineage = settings.source_checkpoint_id;
  if (settings.on_target_start) settings.on_target_start(model);

  TrainConfig phase2 = config;
  phase2.learning_rate[target] = settings.target_learning_rate;
  TrainingHistory target_history = train_stl(model, train[target], validation[target], phase2, settings.target_hooks);
  return {std::move(model), std::move(source_history), std::move(target_history)};
}

}  // namespace mtl
