#include "mtl/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mtl/checkpoint.hpp"
#include "mtl/csv.hpp"
#include "mtl/error.hpp"
#include "mtl/serialization.hpp"

namespace mtl {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + p.string());
  out << text;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::vector<Task> needed_tasks(const ExperimentConfig& c, bool transfer_run) {
  if (transfer_run || c.model.family != ModelFamily::kStl) return {kAllTasks.begin(), kAllTasks.end()};
  return {c.model.stl_task};
}

nlohmann::json data_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (Task t : kAllTasks) {
    if (!c.data[t]) continue;
    j[to_string(t)] = {{"path", fs::absolute(c.data[t]->path).string()}, {"schema", to_json(c.data[t]->schema)}};
  }
  return j;
}

struct PreparedTask {
  std::vector<Example> train;
  std::vector<Example> validation;
};

// Only train and validation examples are tokenized here; the test split stays
// as raw posts until final evaluation.
struct Prepared {
  PerTask<std::optional<SplitCorpus>> splits;
  TaskExamples train;
  TaskExamples validation;
};

Prepared prepare(const ExperimentConfig& config, const fs::path& run_dir, const Tokenizer& tokenizer) {
  Prepared p;
  p.splits = ingest(config, run_dir / "splits");
  for (Task t : kAllTasks) {
    if (!p.splits[t]) continue;
    p.train[t] = tokenize_all(p.splits[t]->train, tokenizer);
    p.validation[t] = tokenize_all(p.splits[t]->validation, tokenizer);
  }
  return p;
}

nlohmann::json validation_losses_json(const EpochRecord& r) {
  nlohmann::json j = {{"monitored", r.monitored}};
  for (Task t : kAllTasks) {
    if (r.validation_loss[t]) j[to_string(t)] = *r.validation_loss[t];
  }
  return j;
}

TrainHooks checkpoint_hooks(const ExperimentConfig& config, const fs::path& dir, const nlohmann::json& extra,
                            std::string phase) {
  TrainHooks hooks;
  hooks.on_improvement = [&config, dir, extra, phase](const ModelGraph& model, const EpochRecord& record) {
    CheckpointInfo info;
    info.run_id = config.run_id;
    info.config_snapshot = config.source_text;
    info.epoch = record.epoch;
    info.validation_losses = validation_losses_json(record);
    info.extra = extra;
    info.extra["phase"] = phase;
    info.extra["adam"] = to_json(config.train)["adam"];
    save_checkpoint(dir, const_cast<ModelGraph&>(model), info);
  };
  hooks.on_epoch = [phase](const EpochRecord& r) {
    spdlog::info("[{}] epoch {:>3}  monitored validation loss {:.6f}  ({:.2f}s)", phase, r.epoch, r.monitored,
                 r.wall_seconds);
  };
  return hooks;
}

nlohmann::json checkpoint_extra(const ExperimentConfig& config, const fs::path& run_dir) {
  nlohmann::json splits = nlohmann::json::object();
  for (Task t : kAllTasks) {
    if (config.data[t]) splits[to_string(t)] = fs::absolute(run_dir / "splits" / (std::string(to_string(t)) + ".csv")).string();
  }
  return {{"data", data_json(config)},
          {"split_manifests", splits},
          {"split_seed", config.split_seed},
          {"precision", ad::to_string(config.train.precision)}};
}

fs::path start_run_dir(const ExperimentConfig& config) {
  const fs::path dir = config.run_dir();
  fs::create_directories(dir.parent_path().empty() ? fs::path(".") : dir.parent_path());
  require(fs::create_directory(dir), ErrorCode::kConfig,
          "run directory " + dir.string() + " already exists; run ids must be unique per output directory");
  write_text(dir / "config.json", config.source_text);
  return dir;
}

void finish_run(const fs::path& run_dir, const RunResult& result, const nlohmann::json& history) {
  write_text(run_dir / "history.json", history.dump(2));
  write_text(run_dir / "run_result.json", to_json(result).dump(2));
  nlohmann::json metrics = nlohmann::json::object();
  for (Task t : kAllTasks) {
    if (result.test_metrics[t]) metrics[to_string(t)] = to_json(*result.test_metrics[t]);
  }
  write_text(run_dir / "metrics.json", metrics.dump(2));
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out.push_back(c);
  }
  return out;
}

// Two panels (accuracy, F1) of metric-vs-beta lines, one line per task.
std::string render_curves_svg(const std::vector<RunResult>& runs, const std::string& title) {
  const double panel_w = 360, panel_h = 240, margin = 50;
  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * (panel_w + 2 * margin) << "\" height=\""
      << panel_h + 2 * margin + 20 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"10\" y=\"16\" font-size=\"13\">" << svg_escape(title) << "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728"};
  double bmin = runs.front().beta, bmax = runs.front().beta;
  for (const auto& r : runs) {
    bmin = std::min(bmin, r.beta);
    bmax = std::max(bmax, r.beta);
  }
  if (bmax == bmin) bmax = bmin + 1.0;
  const Metric metrics[] = {Metric::kAccuracy, Metric::kF1};
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = margin + panel * (panel_w + 2 * margin);
    const double y0 = margin + 10;
    double vmin = 100.0, vmax = 0.0;
    for (const auto& r : runs) {
      for (Task t : kAllTasks) {
        if (!r.test_metrics[t]) continue;
        vmin = std::min(vmin, r.test_metrics[t]->display(metrics[panel]));
        vmax = std::max(vmax, r.test_metrics[t]->display(metrics[panel]));
      }
    }
    vmin = std::max(0.0, vmin - 5.0);
    vmax = std::min(100.0, vmax + 5.0);
    if (vmax <= vmin) vmax = vmin + 1.0;
    auto px = [&](double b) { return x0 + (b - bmin) / (bmax - bmin) * panel_w; };
    auto py = [&](double v) { return y0 + panel_h - (v - vmin) / (vmax - vmin) * panel_h; };
    svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\">" << (panel == 0 ? "Accuracy (%)" : "F1-score (%)")
        << "</text>\n";
    svg << "<text x=\"" << x0 - 40 << "\" y=\"" << py(vmax) + 4 << "\">" << vmax << "</text>\n";
    svg << "<text x=\"" << x0 - 40 << "\" y=\"" << py(vmin) + 4 << "\">" << vmin << "</text>\n";
    for (const auto& r : runs) {
      svg << "<text x=\"" << px(r.beta) - 10 << "\" y=\"" << y0 + panel_h + 16 << "\">" << format_number(r.beta)
          << "</text>\n";
    }
    svg << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 + panel_h + 32 << "\">beta</text>\n";
    for (std::size_t ti = 0; ti < kAllTasks.size(); ++ti) {
      const Task t = kAllTasks[ti];
      std::ostringstream points;
      points << std::fixed << std::setprecision(2);
      bool any = false;
      for (const auto& r : runs) {
        if (!r.test_metrics[t]) continue;
        points << px(r.beta) << "," << py(r.test_metrics[t]->display(metrics[panel])) << " ";
        any = true;
      }
      if (!any) continue;
      svg << "<polyline fill=\"none\" stroke=\"" << colors[ti] << "\" stroke-width=\"2\" points=\"" << points.str()
          << "\"/>\n";
      svg << "<text x=\"" << x0 + panel_w - 80 << "\" y=\"" << y0 + 14 + 14 * ti << "\" fill=\"" << colors[ti] << "\">"
          << to_string(t) << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const fs::path& base_dir) {
  const auto j = nlohmann::json::parse(text, nullptr, false, true);
  require(!j.is_discarded() && j.is_object(), ErrorCode::kConfig, "experiment config is not a JSON object");
  ExperimentConfig c;
  c.source_text = text;
  try {
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
    c.split_seed = j.value("split_seed", c.split_seed);
    if (j.contains("data")) {
      for (Task t : kAllTasks) {
        if (!j.at("data").contains(to_string(t))) continue;
        const auto& d = j.at("data").at(to_string(t));
        DatasetConfig dc;
        dc.path = d.at("path").get<std::string>();
        if (dc.path.is_relative() && !base_dir.empty()) dc.path = base_dir / dc.path;
        dc.schema = dataset_schema_from_json(d);
        c.data[t] = std::move(dc);
      }
    }
    if (j.contains("model")) {
      nlohmann::json m = j.at("model");
      if (m.contains("encoder") && m["encoder"].contains("pretrained_id") && !base_dir.empty()) {
        fs::path pid = m["encoder"]["pretrained_id"].get<std::string>();
        if (pid.is_relative() && fs::exists(base_dir / pid)) m["encoder"]["pretrained_id"] = (base_dir / pid).string();
      }
      c.model = model_spec_from_json(m);
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("transfer")) {
      const auto& t = j.at("transfer");
      if (t.contains("source")) c.transfer.source = parse_task(t.at("source").get<std::string>());
      if (t.contains("target")) c.transfer.target = parse_task(t.at("target").get<std::string>());
      c.transfer.source_learning_rate = t.value("source_learning_rate", c.transfer.source_learning_rate);
      c.transfer.target_learning_rate = t.value("target_learning_rate", c.transfer.target_learning_rate);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  return parse(read_text(file), fs::absolute(file).parent_path());
}

std::vector<std::string> ExperimentConfig::problems(bool transfer_run) const {
  std::vector<std::string> out;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      out.emplace_back(e.what());
    }
  };
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
    out.push_back("run_id must be a non-empty plain name");
  } else if (fs::exists(run_dir())) {
    out.push_back("run directory " + run_dir().string() + " already exists");
  }
  for (Task t : needed_tasks(*this, transfer_run)) {
    if (!data[t]) {
      out.push_back(std::string("no dataset configured for task ") + to_string(t));
    } else if (!fs::exists(data[t]->path)) {
      out.push_back(std::string("dataset for ") + to_string(t) + " not found: " + data[t]->path.string());
    }
  }
  check([&] { model.validate(); });
  check([&] { train.validate(); });
  if (model.encoder.backend == EncoderBackend::kPretrained) {
    const fs::path dir = model.encoder.pretrained_id;
    for (const char* f : {"config.json", "vocab.txt", "model.safetensors"}) {
      if (!fs::exists(dir / f)) out.push_back("pretrained encoder directory lacks " + (dir / f).string());
    }
  }
  if (transfer_run) {
    if (transfer.source == transfer.target) out.push_back("transfer source and target tasks must differ");
    if (!(transfer.source_learning_rate > 0.0) || !(transfer.target_learning_rate > 0.0)) {
      out.push_back("transfer learning rates must be positive");
    }
  }
  return out;
}

void ExperimentConfig::validate(bool transfer_run) const {
  const auto list = problems(transfer_run);
  if (list.empty()) return;
  std::string msg = "invalid experiment config:";
  for (const auto& p : list) msg += "\n  - " + p;
  fail(ErrorCode::kConfig, msg);
}

void apply_environment_overrides(ExperimentConfig& config) {
  if (const char* dir = std::getenv("MTL_OUTPUT_DIR"); dir != nullptr && *dir != '\0') config.output_dir = dir;
  if (const char* p = std::getenv("MTL_PRECISION"); p != nullptr && *p != '\0') {
    config.train.precision = ad::parse_precision(p);
  }
}

ExperimentConfig with_seed(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig c = config;
  c.train.seed = seed;
  c.model.seed = seed;
  c.model.encoder.seed = seed;
  c.run_id = config.run_id + "-seed" + std::to_string(seed);
  return c;
}

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kTransferLearning: return "Transfer Learning";
    case Strategy::kSingleTask: return "Single-Task Learning";
    case Strategy::kMultiTask: return "Multi-Task Learning";
  }
  return "?";
}

nlohmann::json to_json(const RunResult& r) {
  nlohmann::json metrics = nlohmann::json::object();
  for (Task t : kAllTasks) {
    if (r.test_metrics[t]) metrics[to_string(t)] = to_json(*r.test_metrics[t]);
  }
  return {{"run_id", r.run_id},
          {"family", to_string(r.family)},
          {"strategy", to_string(r.strategy)},
          {"label", r.label},
          {"beta", r.beta},
          {"best_epoch", r.best_epoch},
          {"split", "test"},
          {"test_metrics", metrics},
          {"run_dir", r.run_dir.string()}};
}

RunResult run_result_from_json(const nlohmann::json& j) {
  RunResult r;
  r.run_id = j.at("run_id").get<std::string>();
  r.family = parse_family(j.at("family").get<std::string>());
  const auto strategy = j.at("strategy").get<std::string>();
  for (Strategy s : {Strategy::kTransferLearning, Strategy::kSingleTask, Strategy::kMultiTask}) {
    if (strategy == to_string(s)) r.strategy = s;
  }
  r.label = j.value("label", std::string{});
  r.beta = j.value("beta", 0.0);
  r.best_epoch = j.value("best_epoch", std::size_t{0});
  for (Task t : kAllTasks) {
    if (j.at("test_metrics").contains(to_string(t))) {
      r.test_metrics[t] = metrics_from_json(j.at("test_metrics").at(to_string(t)));
    }
  }
  r.run_dir = j.value("run_dir", std::string{});
  return r;
}

std::vector<RunResult> collect_results(const fs::path& output_dir) {
  std::vector<RunResult> out;
  if (!fs::exists(output_dir)) return out;
  for (const auto& entry : fs::directory_iterator(output_dir)) {
    const fs::path file = entry.path() / "run_result.json";
    if (!entry.is_directory() || !fs::exists(file)) continue;
    const auto j = nlohmann::json::parse(read_text(file), nullptr, false);
    require(!j.is_discarded(), ErrorCode::kParse, file.string() + " is not valid JSON");
    out.push_back(run_result_from_json(j));
  }
  std::sort(out.begin(), out.end(), [](const RunResult& a, const RunResult& b) { return a.run_id < b.run_id; });
  return out;
}

PerTask<std::optional<SplitCorpus>> ingest(const ExperimentConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  PerTask<std::optional<SplitCorpus>> out;
  nlohmann::json balance = nlohmann::json::object();
  for (Task t : kAllTasks) {
    if (!config.data[t]) continue;
    auto posts = load_dataset(config.data[t]->path, t, config.data[t]->schema);
    spdlog::info("{}: loaded {} posts from {}", to_string(t), posts.size(), config.data[t]->path.string());
    SplitCorpus split = split_corpus(std::move(posts), config.split_seed);
    write_split_manifest(dir / (std::string(to_string(t)) + ".csv"), split);
    nlohmann::json per_split;
    for (SplitName s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
      const ClassBalance b = class_balance(split.part(s));
      per_split[to_string(s)] = {{"size", split.part(s).size()}, {"negative", b.negatives}, {"positive", b.positives}};
      spdlog::info("{} {:<10} n={:<5} negative={:<5} positive={}", to_string(t), to_string(s), split.part(s).size(),
                   b.negatives, b.positives);
    }
    balance[to_string(t)] = per_split;
    out[t] = std::move(split);
  }
  write_text(dir / "class_balance.json", balance.dump(2));
  return out;
}

MetricsReport evaluate_model(ModelGraph& model, const std::vector<Example>& examples, Task task,
                             ad::Precision precision) {
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const Example& e : examples) labels.push_back(e.label);
  return compute_metrics(confusion(predict_labels(model, examples, task, precision), labels));
}

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path run_dir = start_run_dir(config);
  auto tokenizer = make_tokenizer(config.model.encoder);
  Prepared data = prepare(config, run_dir, *tokenizer);

  ModelGraph model(config.model);
  const TrainHooks hooks = checkpoint_hooks(config, run_dir / "checkpoint", checkpoint_extra(config, run_dir), "train");
  TrainingHistory history;
  if (model.is_multitask()) {
    history = train_mtl(model, data.train, data.validation, config.train, hooks);
  } else {
    const Task t = config.model.stl_task;
    history = train_stl(model, data.train[t], data.validation[t], config.train, hooks);
  }

  RunResult result;
  result.run_id = config.run_id;
  result.family = config.model.family;
  result.strategy = model.is_multitask() ? Strategy::kMultiTask : Strategy::kSingleTask;
  result.label = model.is_multitask() ? display_name(model.family()) + " (beta=" + format_number(config.train.beta) + ")"
                                      : display_name(model.family());
  result.beta = model.is_multitask() ? config.train.beta : 0.0;
  result.best_epoch = history.best_epoch;
  result.run_dir = run_dir;
  for (Task t : model.tasks()) {
    const auto test = tokenize_all(data.splits[t]->test, *tokenizer);
    result.test_metrics[t] = evaluate_model(model, test, t, config.train.precision);
  }
  finish_run(run_dir, result, to_json(history));
  return result;
}

RunResult run_transfer(const ExperimentConfig& config) {
  config.validate(true);
  require(config.model.family == ModelFamily::kStl, ErrorCode::kConfig,
          "transfer runs use the stl family (set model.family to stl)");
  const fs::path run_dir = start_run_dir(config);
  auto tokenizer = make_tokenizer(config.model.encoder);
  Prepared data = prepare(config, run_dir, *tokenizer);
  const nlohmann::json extra = checkpoint_extra(config, run_dir);

  TransferSettings settings;
  settings.source_learning_rate = config.transfer.source_learning_rate;
  settings.target_learning_rate = config.transfer.target_learning_rate;
  settings.source_checkpoint_id = config.run_id + "/source_checkpoint";
  settings.source_hooks = checkpoint_hooks(config, run_dir / "source_checkpoint", extra, "source");
  settings.target_hooks = checkpoint_hooks(config, run_dir / "checkpoint", extra, "target");
  TransferResult trained = transfer_train(config.model, config.transfer.source, config.transfer.target, data.train,
                                          data.validation, config.train, settings);

  RunResult result;
  result.run_id = config.run_id;
  result.family = ModelFamily::kStl;
  result.strategy = Strategy::kTransferLearning;
  result.label = std::string(to_string(config.transfer.source)) + " -> " + to_string(config.transfer.target);
  result.best_epoch = trained.target_history.best_epoch;
  result.run_dir = run_dir;
  const Task target = config.transfer.target;
  const auto test = tokenize_all(data.splits[target]->test, *tokenizer);
  result.test_metrics[target] = evaluate_model(trained.model, test, target, config.train.precision);
  finish_run(run_dir, result,
             {{"source", to_json(trained.source_history)}, {"target", to_json(trained.target_history)}});
  return result;
}

SweepResult sweep_beta(const ExperimentConfig& config, std::span<const double> betas) {
  require(!betas.empty(), ErrorCode::kConfig, "beta sweep needs at least one value");
  for (double b : betas) {
    require(b >= 0.0 && b <= 1.0, ErrorCode::kConfig, "beta " + format_number(b) + " lies outside [0, 1]");
  }
  require(config.model.family != ModelFamily::kStl, ErrorCode::kConfig, "beta sweeps need a multitask family");
  std::vector<ExperimentConfig> configs;
  for (double b : betas) {
    ExperimentConfig c = config;
    c.train.beta = b;
    c.run_id = config.run_id + "-beta" + format_number(b);
    configs.push_back(std::move(c));
  }
  const fs::path sweep_dir = config.output_dir / (config.run_id + "-sweep");
  require(!fs::exists(sweep_dir), ErrorCode::kConfig, "sweep directory " + sweep_dir.string() + " already exists");
  for (const auto& c : configs) c.validate();

  SweepResult out;
  for (const auto& c : configs) out.runs.push_back(run_experiment(c));

  fs::create_directories(sweep_dir);
  std::ostringstream csv;
  csv << "beta,task,accuracy,f1,run_id\n";
  for (Task t : kAllTasks) {
    for (const auto& r : out.runs) {
      if (!r.test_metrics[t]) continue;
      csv << format_number(r.beta) << ',' << to_string(t) << ',' << format_percent(r.test_metrics[t]->accuracy) << ','
          << format_percent(r.test_metrics[t]->f1) << ',' << r.run_id << '\n';
    }
  }
  out.curves_csv = sweep_dir / "curves.csv";
  write_text(out.curves_csv, csv.str());
  try {
    out.curves_svg = sweep_dir / "curves.svg";
    write_text(out.curves_svg, render_curves_svg(out.runs, "Effect of beta (" + display_name(config.model.family) + ")"));
  } catch (const std::exception& e) {
    spdlog::warn("could not render sweep plot: {}", e.what());
    out.curves_svg.clear();
  }
  return out;
}

ReportTable report_table(std::span<const RunResult> results, Task task) {
  const Metric columns[] = {Metric::kPrecision, Metric::kRecall, Metric::kF1, Metric::kAccuracy, Metric::kSpecificity};
  const char* headers[] = {"Precision", "Recall", "F1-score", "Accuracy", "Specificity"};
  std::ostringstream csv, text;
  csv << "strategy,model,run_id,beta,precision,recall,f1,accuracy,specificity\n";

  std::size_t label_width = 28;
  for (const auto& r : results) label_width = std::max(label_width, r.label.size() + 2);
  text << pad("Architecture", label_width);
  for (const char* h : headers) text << lpad(h, 13);
  text << "\n" << std::string(label_width + 13 * 5, '-') << "\n";

  for (Strategy s : {Strategy::kTransferLearning, Strategy::kSingleTask, Strategy::kMultiTask}) {
    bool header_written = false;
    for (const auto& r : results) {
      if (r.strategy != s || !r.test_metrics[task]) continue;
      if (!header_written) {
        text << to_string(s) << "\n";
        header_written = true;
      }
      const MetricsReport& m = *r.test_metrics[task];
      csv << csv_escape(to_string(s)) << ',' << csv_escape(r.label) << ',' << csv_escape(r.run_id) << ','
          << format_number(r.beta);
      text << pad("  " + r.label, label_width);
      for (Metric c : columns) {
        csv << ',' << format_percent(m.value(c));
        text << lpad(format_percent(m.value(c)), 13);
      }
      csv << '\n';
      text << '\n';
    }
  }
  text << "(" << to_string(task) << " task, test split; positive class = label 1)\n";
  return {csv.str(), text.str()};
}

PerTask<std::optional<MetricsReport>> evaluate_checkpoint(const fs::path& checkpoint_dir, SplitName split) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  const auto& m = ckpt.manifest;
  require(m.contains("data") && m.contains("split_manifests"), ErrorCode::kParse,
          "checkpoint manifest lacks data provenance");
  const ad::Precision precision = ad::parse_precision(m.value("precision", std::string("fp64")));
  auto tokenizer = make_tokenizer(ckpt.model.spec().encoder);
  PerTask<std::optional<MetricsReport>> out;
  for (Task t : ckpt.model.tasks()) {
    const std::string name = to_string(t);
    require(m.at("data").contains(name) && m.at("split_manifests").contains(name), ErrorCode::kParse,
            "checkpoint manifest lacks the " + name + " dataset");
    const auto& d = m.at("data").at(name);
    const auto posts =
        load_dataset(d.at("path").get<std::string>(), t, dataset_schema_from_json(d.at("schema")));
    const SplitCorpus corpus = read_split_manifest(m.at("split_manifests").at(name).get<std::string>(), posts);
    const auto examples = tokenize_all(corpus.part(split), *tokenizer);
    require(!examples.empty(), ErrorCode::kInvalidArgument, "split " + std::string(to_string(split)) + " is empty");
    out[t] = evaluate_model(ckpt.model, examples, t, precision);
  }
  return out;
}

std::vector<double> parse_betas(std::string_view text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == item.size(), ErrorCode::kConfig, "cannot parse beta value '" + item + "'");
    require(v >= 0.0 && v <= 1.0, ErrorCode::kConfig, "beta " + item + " lies outside [0, 1]");
    out.push_back(v);
  }
  require(!out.empty(), ErrorCode::kConfig, "no beta values given");
  return out;
}

}  // namespace mtl
