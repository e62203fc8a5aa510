#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtl/corpus.hpp"
#include "mtl/metrics.hpp"
#include "mtl/models.hpp"
#include "mtl/training.hpp"

namespace mtl {

struct DatasetConfig {
  std::filesystem::path path;
  DatasetSchema schema;
};

struct TransferConfig {
  Task source = Task::kDepression;
  Task target = Task::kStress;
  double source_learning_rate = 1e-4;
  double target_learning_rate = 1e-5;
};

// One run, read from a single JSON file. Relative paths resolve against the
// directory of that file.
struct ExperimentConfig {
  std::string run_id = "run";
  std::filesystem::path output_dir = "runs";
  PerTask<std::optional<DatasetConfig>> data;
  std::uint64_t split_seed = 0;
  ModelSpec model;
  TrainConfig train;
  TransferConfig transfer;
  std::string source_text;  // verbatim file contents, snapshotted into checkpoints

  static ExperimentConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& file);

  // Every problem found, so all of them can be reported before training starts.
  std::vector<std::string> problems(bool transfer_run = false) const;
  void validate(bool transfer_run = false) const;

  std::filesystem::path run_dir() const { return output_dir / run_id; }
};

// MTL_OUTPUT_DIR replaces output_dir; MTL_PRECISION (fp64|fp32) replaces the
// training precision.
void apply_environment_overrides(ExperimentConfig& config);

// Re-seeds training, heads and encoder initialization; the split seed is kept.
ExperimentConfig with_seed(const ExperimentConfig& config, std::uint64_t seed);

enum class Strategy { kTransferLearning, kSingleTask, kMultiTask };

const char* to_string(Strategy strategy);

struct RunResult {
  std::string run_id;
  ModelFamily family = ModelFamily::kStl;
  Strategy strategy = Strategy::kSingleTask;
  std::string label;
  double beta = 0.0;
  std::size_t best_epoch = 0;
  PerTask<std::optional<MetricsReport>> test_metrics;  // test split only
  std::filesystem::path run_dir;
};

nlohmann::json to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& j);
// Reads every <dir>/*/run_result.json below `output_dir`, sorted by run id.
std::vector<RunResult> collect_results(const std::filesystem::path& output_dir);

// Ingest, split and write split manifests plus class balance for each
// configured dataset into `dir`. Returns the splits.
PerTask<std::optional<SplitCorpus>> ingest(const ExperimentConfig& config, const std::filesystem::path& dir);

// ingest -> split -> train (family pipeline) -> evaluate best model on test.
RunResult run_experiment(const ExperimentConfig& config);
RunResult run_transfer(const ExperimentConfig& config);

struct SweepResult {
  std::vector<RunResult> runs;
  std::filesystem::path curves_csv;
  std::filesystem::path curves_svg;  // empty when rendering failed
};

// One run per beta, identical splits and initialization seeds.
SweepResult sweep_beta(const ExperimentConfig& config, std::span<const double> betas);

struct ReportTable {
  std::string csv;
  std::string text;
};

// Rows grouped Transfer Learning / Single-Task Learning / Multi-Task Learning,
// columns Precision, Recall, F1, Accuracy, Specificity at two decimals.
ReportTable report_table(std::span<const RunResult> results, Task task);

// Deterministic inference over one split of the run a checkpoint belongs to.
PerTask<std::optional<MetricsReport>> evaluate_checkpoint(const std::filesystem::path& checkpoint_dir,
                                                          SplitName split);

// Metrics of `model` on examples of `task`.
MetricsReport evaluate_model(ModelGraph& model, const std::vector<Example>& examples, Task task,
                             ad::Precision precision = ad::Precision::kDouble);

std::vector<double> parse_betas(std::string_view text);

}  // namespace mtl
