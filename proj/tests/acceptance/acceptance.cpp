// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "mtl/checkpoint.hpp"
#include "mtl/csv.hpp"
#include "mtl/error.hpp"
#include "mtl/experiment.hpp"
#include "mtl/metrics.hpp"
#include "mtl/models.hpp"
#include "mtl/training.hpp"
#include "synthetic.hpp"

namespace {

using namespace mtl;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TaskExamples keyword_data(const EncoderConfig& enc, std::size_t n, std::uint64_t seed) {
  TaskExamples out;
  for (Task t : kAllTasks) out[t] = testing::keyword_examples(t, n, seed, enc);
  return out;
}

constexpr ModelFamily kFamilies[] = {ModelFamily::kStl, ModelFamily::kDoubleEncoders, ModelFamily::kAttentionFusion};

// 1 ---------------------------------------------------------------------------

Outcome gate_normalization() {
  Outcome out;
  FusionGate gate(8, "gate", 11);
  Rng rng(12);
  std::size_t bad_sum = 0, bad_range = 0, bad_hull = 0;
  double worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Matrix a(1, 8), b(1, 8);
    const double scale = i % 3 == 0 ? 0.1 : i % 3 == 1 ? 1.0 : 10.0;
    for (auto& v : a.values()) v = rng.uniform(-scale, scale);
    for (auto& v : b.values()) v = rng.uniform(-scale, scale);
    const auto [fused, w] = attention_fusion(a, b, gate);
    const double err = std::abs(w.alpha_task + w.alpha_shared - 1.0);
    worst_sum = std::max(worst_sum, err);
    bad_sum += err > 1e-6;
    bad_range += !(w.alpha_task > 0.0 && w.alpha_task < 1.0 && w.alpha_shared > 0.0 && w.alpha_shared < 1.0);
    for (std::size_t j = 0; j < 8; ++j) {
      const double lo = std::min(a(0, j), b(0, j)), hi = std::max(a(0, j), b(0, j));
      bad_hull += fused(0, j) < lo - 1e-12 * std::max(1.0, std::abs(lo)) ||
                  fused(0, j) > hi + 1e-12 * std::max(1.0, std::abs(hi));
    }
  }
  out.check(bad_sum == 0, std::to_string(bad_sum) + " inputs with |sum - 1| > 1e-6");
  out.check(bad_range == 0, std::to_string(bad_range) + " inputs with a weight outside (0,1)");
  out.check(bad_hull == 0, std::to_string(bad_hull) + " fused coordinates outside [min, max]");
  out.note("10000 inputs, max |sum - 1| = " + fmt("%.2e", worst_sum));
  return out;
}

// 2 ---------------------------------------------------------------------------

// Cross-entropy of the family's training objective on a small fixed batch.
double family_loss(ModelGraph& model, const TaskExamples& data, double beta, ad::Tape& tape, bool backward) {
  auto task_loss = [&](Task t) {
    std::vector<ad::Var> terms;
    for (const auto& ex : data[t]) terms.push_back(ad::cross_entropy(model.forward(tape, ex.tokens, t).logits, ex.label));
    return ad::mean(terms);
  };
  ad::Var loss = model.is_multitask() ? joint_loss(task_loss(Task::kDepression), task_loss(Task::kStress), beta)
                                      : task_loss(model.tasks().front());
  if (backward) tape.backward(loss);
  return loss.scalar();
}

Outcome gradient_check() {
  Outcome out;
  constexpr double kStep = 1e-4;
  constexpr double kFloor = 1e-6;
  for (ModelFamily fam : kFamilies) {
    const auto spec = testing::tiny_spec(fam, 19);
    ModelGraph model(spec);
    // two posts per evaluation in every family
    const auto data = keyword_data(spec.encoder, model.is_multitask() ? 1 : 2, 4);
    model.zero_grad();
    {
      ad::Tape tape;
      family_loss(model, data, 0.3, tape, true);
    }
    const auto result = testing::check_gradients(
        model.parameters(),
        [&] {
          ad::Tape tape(false);
          return family_loss(model, data, 0.3, tape, false);
        },
        kStep, kFloor);
    out.check(result.max_relative_error < 1e-3, std::string(display_name(fam)) + " max relative error " +
                                                    fmt("%.3e", result.max_relative_error) + " at " +
                                                    result.worst_parameter + "[" +
                                                    std::to_string(result.worst_index) + "]");
    out.note(std::string(display_name(fam)) + ": " + std::to_string(result.checked) + " parameters, max rel err " +
             fmt("%.2e", result.max_relative_error));
  }
  return out;
}

// 3 ---------------------------------------------------------------------------

Outcome joint_loss_properties() {
  Outcome out;
  const auto spec = testing::tiny_spec(ModelFamily::kAttentionFusion, 4);
  ModelGraph model(spec);
  const auto data = keyword_data(spec.encoder, 4, 3);

  // affine in beta, from the model's own task losses
  const double ld = mean_loss(model, data.depression, Task::kDepression);
  const double ls = mean_loss(model, data.stress, Task::kStress);
  auto total_at = [&](double beta) {
    ad::Tape tape(false);
    return joint_loss(tape.constant(Matrix(1, 1, ld)), tape.constant(Matrix(1, 1, ls)), beta).scalar();
  };
  const double f0 = total_at(0.0), fh = total_at(0.5), f1 = total_at(1.0);
  const double slope = f1 - f0;
  out.check(std::abs(fh - (f0 + 0.5 * slope)) <= 1e-15 * std::max(1.0, std::abs(fh)), "midpoint off the line");
  double worst_affine = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double b = k / 20.0;
    worst_affine = std::max(worst_affine, std::abs(total_at(b) - (f0 + b * slope)));
    worst_affine = std::max(worst_affine, std::abs(joint_loss(ld, ls, b).total - (f0 + b * slope)));
  }
  out.check(worst_affine <= 1e-14, "affine residual " + fmt("%.2e", worst_affine));
  out.check(f0 == ld && f1 == ls, "endpoints differ from the task losses");

  // shared-gradient superposition
  const double beta = 0.3;
  auto shared_grads = [&](double wd, double ws) {
    model.zero_grad();
    ad::Tape tape;
    std::vector<ad::Var> d, s;
    for (const auto& ex : data.depression)
      d.push_back(ad::cross_entropy(model.forward(tape, ex.tokens, Task::kDepression).logits, ex.label));
    for (const auto& ex : data.stress)
      s.push_back(ad::cross_entropy(model.forward(tape, ex.tokens, Task::kStress).logits, ex.label));
    tape.backward(ad::add(ad::scale(ad::mean(d), wd), ad::scale(ad::mean(s), ws)));
    std::vector<Matrix> g;
    for (Parameter* p : model.shared_parameters()) g.push_back(p->grad);
    return g;
  };
  const auto gd = shared_grads(1.0, 0.0), gs = shared_grads(0.0, 1.0), gj = shared_grads(1.0 - beta, beta);
  double worst = 0.0;
  for (std::size_t k = 0; k < gj.size(); ++k) {
    for (std::size_t i = 0; i < gj[k].size(); ++i) {
      const double expect = (1.0 - beta) * gd[k][i] + beta * gs[k][i];
      worst = std::max(worst, testing::relative_error(gj[k][i], expect, 1e-12));
    }
  }
  out.check(worst < 1e-6, "superposition relative error " + fmt("%.2e", worst));
  out.note("superposition rel err " + fmt("%.2e", worst));

  // beta = 0 freezes the stress partition
  for (ModelFamily fam : {ModelFamily::kDoubleEncoders, ModelFamily::kAttentionFusion}) {
    const auto s = testing::tiny_spec(fam, 6);
    ModelGraph m(s);
    std::vector<Matrix> before;
    for (Parameter* p : m.task_parameters(Task::kStress)) before.push_back(p->value);
    TrainConfig config;
    config.learning_rate = {1e-3, 1e-3};
    config.beta = 0.0;
    MultitaskTrainer trainer(m, config);
    const auto d = keyword_data(s.encoder, 16, 5);
    PairedStream<Example> stream(d.depression, d.stress, 4, 1);
    std::size_t steps = 0;
    for (std::size_t e = 0; steps < 10; ++e) {
      for (const auto& pair : stream.epoch(e)) {
        if (steps == 10) break;
        trainer.step(pair, e);
        ++steps;
      }
    }
    const auto after = m.task_parameters(Task::kStress);
    bool frozen = trainer.optimizer(Task::kStress).steps() == 10;
    for (std::size_t k = 0; k < after.size(); ++k) frozen = frozen && after[k]->value == before[k];
    out.check(frozen, std::string(display_name(fam)) + " stress parameters moved at beta=0");
  }
  return out;
}

// 4 ---------------------------------------------------------------------------

Outcome metrics_oracle() {
  Outcome out;
  Rng rng(77);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(2));
      y[i] = static_cast<int>(rng.below(2));
    }
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] == 1) (y[i] == 1 ? tp : fp)++;
      else (y[i] == 1 ? fn : tn)++;
    }
    const auto r = compute_metrics(confusion(p, y));
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    const double prec = ratio(tp, tp + fp), rec = ratio(tp, tp + fn);
    const double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
    const bool same = r.counts == ConfusionCounts{tp, fp, fn, tn} && r.precision == prec && r.recall == rec &&
                      r.f1 == f1 && r.accuracy == ratio(tp + tn, n) && r.specificity == ratio(tn, tn + fp) &&
                      r.degenerate.contains(Metric::kPrecision) == (tp + fp == 0) &&
                      r.degenerate.contains(Metric::kRecall) == (tp + fn == 0) &&
                      r.degenerate.contains(Metric::kSpecificity) == (tn + fp == 0);
    mismatches += !same;
  }
  out.check(mismatches == 0, std::to_string(mismatches) + " of 1000 vectors disagree with the counting oracle");
  const auto hand = compute_metrics({3, 1, 2, 4});
  const std::string row = format_percent(hand.precision) + "/" + format_percent(hand.recall) + "/" +
                          format_percent(hand.f1) + "/" + format_percent(hand.accuracy) + "/" +
                          format_percent(hand.specificity);
  out.check(row == "75.00/60.00/66.67/70.00/80.00", "hand case gave " + row);
  out.note("1000 vectors exact; hand case " + row);
  return out;
}

// 5 ---------------------------------------------------------------------------

// Replays the monitored sequence through a fresh patience-8 stopper and
// compares the bookkeeping with what training recorded.
void check_bookkeeping(Outcome& out, const std::string& what, const TrainingHistory& h, std::size_t patience,
                       double restored_loss) {
  EarlyStopping replay(patience);
  bool stopped = false;
  std::size_t halted = h.epochs.size();
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    if (replay.observe(h.epochs[e].monitored)) {
      stopped = true;
      halted = e;
      break;
    }
  }
  out.check(h.stopped_early == stopped, what + " stopped_early disagrees with the patience rule");
  out.check(!stopped || halted + 1 == h.epochs.size(), what + " trained past the halting epoch");
  out.check(!stopped || halted - replay.best_epoch() == patience, what + " halted without " +
                                                                       std::to_string(patience) +
                                                                       " non-improving epochs");
  out.check(h.best_epoch == replay.best_epoch(), what + " best epoch is not the minimum validation loss");
  for (const auto& e : h.epochs) {
    if (e.epoch < h.best_epoch) out.check(e.monitored > h.best_monitored(), what + " earlier epoch ties the best");
    else out.check(e.monitored >= h.best_monitored(), what + " later epoch beats the best");
  }
  out.check(restored_loss == h.best_monitored(), what + " model not restored to the best epoch");
}

Outcome overfit_smoke() {
  Outcome out;
  TrainConfig config;
  config.learning_rate = {1e-3, 1e-3};
  config.max_epochs = 200;
  config.patience = 8;
  config.step_size = 1000;
  config.seed = 2;
  config.beta = 0.5;

  for (ModelFamily fam : kFamilies) {
    const auto spec = testing::tiny_spec(fam, 7);
    const auto train = keyword_data(spec.encoder, 64, 1);
    const auto val = keyword_data(spec.encoder, 16, 2);
    if (fam == ModelFamily::kStl) {
      for (Task t : kAllTasks) {
        auto s = spec;
        s.stl_task = t;
        ModelGraph model(s);
        const auto h = train_stl(model, train[t], val[t], config);
        const double acc = accuracy(model, train[t], t);
        const std::string what = std::string("STL ") + to_string(t);
        out.check(acc >= 0.95, what + " training accuracy " + fmt("%.3f", acc));
        check_bookkeeping(out, what, h, config.patience, mean_loss(model, val[t], t));
        out.note(what + ": acc " + fmt("%.3f", acc) + " after " + std::to_string(h.epochs.size()) + " epochs, best " +
                 std::to_string(h.best_epoch));
      }
      continue;
    }
    ModelGraph model(spec);
    const auto h = train_mtl(model, train, val, config);
    const double restored =
        joint_loss(mean_loss(model, val.depression, Task::kDepression), mean_loss(model, val.stress, Task::kStress),
                   config.beta)
            .total;
    check_bookkeeping(out, display_name(fam), h, config.patience, restored);
    std::string accs;
    for (Task t : kAllTasks) {
      const double acc = accuracy(model, train[t], t);
      out.check(acc >= 0.95, std::string(display_name(fam)) + " " + to_string(t) + " training accuracy " +
                                 fmt("%.3f", acc));
      accs += std::string(" ") + to_string(t) + " " + fmt("%.3f", acc);
    }
    out.note(std::string(display_name(fam)) + ":" + accs + " after " + std::to_string(h.epochs.size()) +
             " epochs, best " + std::to_string(h.best_epoch));
  }
  return out;
}

// 6 ---------------------------------------------------------------------------

Outcome pipeline_parity() {
  Outcome out;
  const auto spec = testing::tiny_spec(ModelFamily::kStl, 5);
  const auto train = keyword_data(spec.encoder, 16, 1);
  const auto val = keyword_data(spec.encoder, 8, 2);
  TrainConfig config;
  config.max_epochs = 4;
  config.patience = 4;
  config.seed = 3;

  std::map<std::string, Matrix> best_source, target_start;
  TransferSettings settings;
  settings.source_learning_rate = 1e-3;
  settings.target_learning_rate = 1e-3;
  settings.source_hooks.on_improvement = [&](const ModelGraph& m, const EpochRecord&) {
    for (const Parameter* p : m.parameters()) best_source[p->name] = p->value;
  };
  settings.on_target_start = [&](const ModelGraph& m) {
    for (const Parameter* p : m.parameters()) target_start[p->name] = p->value;
  };
  auto result = transfer_train(spec, Task::kDepression, Task::kStress, train, val, config, settings);
  std::size_t encoder_tensors = 0, differing = 0;
  for (const auto& [name, value] : target_start) {
    if (name.rfind("encoder.", 0) != 0) continue;
    ++encoder_tensors;
    differing += !(value == best_source.at(name));
  }
  out.check(encoder_tensors > 0 && differing == 0,
            std::to_string(differing) + " of " + std::to_string(encoder_tensors) +
                " encoder tensors differ from the phase-1 best epoch");
  out.note("transfer: " + std::to_string(encoder_tensors) + " encoder tensors carried over exactly (source best epoch " +
           std::to_string(result.source_history.best_epoch) + ")");

  testing::TempDir dir("acceptance-ckpt");
  const auto test = keyword_data(spec.encoder, 20, 9);
  std::vector<std::pair<std::string, ModelGraph>> models;
  models.emplace_back("transfer", std::move(result.model));
  for (ModelFamily fam : {ModelFamily::kDoubleEncoders, ModelFamily::kAttentionFusion}) {
    const auto s = testing::tiny_spec(fam, 8);
    ModelGraph m(s);
    auto c = config;
    c.learning_rate = {1e-3, 1e-3};
    c.max_epochs = 2;
    c.patience = 2;
    train_mtl(m, train, val, c);
    models.emplace_back(display_name(fam), std::move(m));
  }
  for (auto& [name, model] : models) {
    CheckpointInfo info;
    info.run_id = name;
    save_checkpoint(dir.path() / name, model, info);
    auto loaded = load_checkpoint(dir.path() / name);
    for (Task t : model.tasks()) {
      const auto in_memory = evaluate_model(model, test[t], t);
      const auto reloaded = evaluate_model(loaded.model, test[t], t);
      bool logits_equal = true;
      for (const auto& ex : test[t]) {
        logits_equal = logits_equal && predict_logits(model, ex.tokens, t) == predict_logits(loaded.model, ex.tokens, t);
      }
      out.check(in_memory == reloaded && logits_equal, name + " " + to_string(t) + " metrics differ after reload");
    }
  }
  out.note("checkpoint round trip bitwise for stl, double encoders and fusion");
  return out;
}

// 7 ---------------------------------------------------------------------------

Outcome schedule_and_stopping() {
  Outcome out;
  const double base = 1e-5;
  TrainConfig config;
  config.learning_rate = {base, base};
  config.max_epochs = 15;
  config.patience = 15;
  config.seed = 1;
  std::size_t wrong = 0;
  auto expected = [&](std::size_t e) {
    double lr = base;
    for (std::size_t k = 0; k < e / 5; ++k) lr *= 0.1;
    return lr;
  };
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-15 * std::abs(b); };

  const auto mspec = testing::tiny_spec(ModelFamily::kDoubleEncoders, 2);
  ModelGraph mtl_model(mspec);
  const auto h = train_mtl(mtl_model, keyword_data(mspec.encoder, 8, 1), keyword_data(mspec.encoder, 4, 2), config);
  out.check(h.epochs.size() == 15, "multitask run recorded " + std::to_string(h.epochs.size()) + " epochs");
  for (const auto& e : h.epochs) {
    for (const char* k : {"depression", "stress"}) wrong += !close(e.learning_rates.at(k), expected(e.epoch));
  }
  const auto sspec = testing::tiny_spec(ModelFamily::kStl, 2);
  ModelGraph stl_model(sspec);
  const auto hs = train_stl(stl_model, testing::keyword_examples(Task::kDepression, 8, 1, sspec.encoder),
                            testing::keyword_examples(Task::kDepression, 4, 2, sspec.encoder), config);
  for (const auto& e : hs.epochs) wrong += !close(e.learning_rates.at("stl"), expected(e.epoch));
  out.check(wrong == 0, std::to_string(wrong) + " recorded learning rates off the step schedule");
  out.check(std::abs(step_lr(base, 14) - 1e-7) < 1e-22, "step_lr(1e-5, 14) != 1e-7");

  const std::vector<double> seq = {1.0, 0.9, 0.95, 0.95, 0.97, 0.91, 0.99, 0.92, 0.93, 0.95, 0.5, 0.4};
  EarlyStopping stop(8);
  std::size_t halted = seq.size();
  for (std::size_t e = 0; e < seq.size(); ++e) {
    if (stop.observe(seq[e])) {
      halted = e;
      break;
    }
  }
  out.check(halted == 9, "halted at epoch index " + std::to_string(halted) + " instead of 9");
  out.check(stop.best_epoch() == 1 && stop.best_value() == 0.9, "best epoch is not the 0.9 epoch");
  out.note("30 recorded rates on schedule; halted at index 9 (8th non-improving epoch), best index 1");
  return out;
}

// 8 ---------------------------------------------------------------------------

Outcome sweep_shape() {
  Outcome out;
  testing::TempDir dir("acceptance-sweep");
  const auto config = testing::write_experiment(dir.path(), ModelFamily::kDoubleEncoders, 0.01, 40, 2);
  const auto stdout_path = dir.path() / "sweep.json";
  const std::string cmd = "'" + std::string(MTL_CLI_PATH) + "' -q sweep --config '" + config.string() +
                          "' --betas 0.01,0.1,0.2,0.3 >'" + stdout_path.string() + "'";
  const int status = std::system(cmd.c_str());
  out.check(WIFEXITED(status) && WEXITSTATUS(status) == 0, "sweep command exited with status " + std::to_string(status));
  if (!out.pass) return out;

  const auto j = nlohmann::json::parse(slurp(stdout_path));
  const auto& runs = j.at("runs");
  out.check(runs.size() == 4, std::to_string(runs.size()) + " run results");
  std::vector<double> betas;
  for (const auto& r : runs) {
    betas.push_back(r.at("beta").get<double>());
    for (const char* t : {"depression", "stress"}) out.check(r.at("test_metrics").contains(t), std::string("missing ") + t);
  }
  out.check(betas == std::vector<double>{0.01, 0.1, 0.2, 0.3}, "unexpected beta values");

  const auto rows = parse_csv(slurp(j.at("curves_csv").get<std::string>()));
  std::map<std::string, int> acc_points, f1_points;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() < 4) continue;
    acc_points[f[1]] += !f[2].empty();
    f1_points[f[1]] += !f[3].empty();
  }
  for (const char* t : {"depression", "stress"}) {
    out.check(acc_points[t] == 4 && f1_points[t] == 4, std::string(t) + " curve lacks 4 accuracy/F1 points");
  }

  std::size_t split_mismatch = 0, seed_mismatch = 0;
  nlohmann::json first_model;
  std::map<std::string, std::string> first_splits;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::filesystem::path run_dir = runs[i].at("run_dir").get<std::string>();
    auto manifest = nlohmann::json::parse(slurp(run_dir / "checkpoint" / kManifestFile));
    for (const char* t : {"depression", "stress"}) {
      const auto text = slurp(run_dir / "splits" / (std::string(t) + ".csv"));
      if (i == 0) first_splits[t] = text;
      split_mismatch += text != first_splits[t] || text.empty();
    }
    if (i == 0) first_model = manifest.at("model");
    seed_mismatch += manifest.at("model") != first_model;
  }
  out.check(split_mismatch == 0, "split manifests differ across runs");
  out.check(seed_mismatch == 0, "model specs (initialization seeds) differ across runs");
  out.note("4 runs, 4 accuracy and 4 F1 points per task, identical splits and init seeds");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  // optional criterion ids to run, e.g. `mtl_acceptance 2 5`
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "fusion gate normalization", 10, gate_normalization},
      {2, "finite-difference gradient check", 300, gradient_check},
      {3, "joint loss: affine in beta, superposition, beta=0 freeze", 120, joint_loss_properties},
      {4, "metrics oracle", 5, metrics_oracle},
      {5, "overfit smoke and early-stopping bookkeeping", 600, overfit_smoke},
      {6, "transfer parity and checkpoint round trip", 120, pipeline_parity},
      {7, "learning-rate schedule and patience", 120, schedule_and_stopping},
      {8, "sweep shape", 300, sweep_shape},
  };
  int failures = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.notes.push_back(std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.check(seconds < c.budget_seconds, "runtime " + fmt("%.1f", seconds) + " s over the " +
                                                  fmt("%.0f", c.budget_seconds) + " s budget");
    failures += !outcome.pass;
    std::printf("%s [%d] %s (%.1f s)\n", outcome.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), seconds);
    for (const auto& n : outcome.notes) std::printf("       %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
