#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mtl/error.hpp"
#include "mtl/experiment.hpp"

namespace {

using nlohmann::json;

int report_error(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << std::endl;
  return exit_code;
}

mtl::ExperimentConfig load_config(const std::string& path) {
  auto config = mtl::ExperimentConfig::load(path);
  mtl::apply_environment_overrides(config);
  return config;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    if (!item.empty()) {
      std::size_t used = 0;
      try {
        seeds.push_back(std::stoull(item, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      mtl::require(used == item.size(), mtl::ErrorCode::kConfig, "cannot parse seed '" + item + "'");
    }
    start = end + 1;
  }
  mtl::require(!seeds.empty(), mtl::ErrorCode::kConfig, "no seeds given");
  return seeds;
}

json seed_summary(const std::vector<mtl::RunResult>& runs) {
  json out = json::object();
  for (mtl::Task t : mtl::kAllTasks) {
    json per_metric = json::object();
    for (mtl::Metric m : {mtl::Metric::kPrecision, mtl::Metric::kRecall, mtl::Metric::kF1, mtl::Metric::kAccuracy,
                          mtl::Metric::kSpecificity}) {
      std::vector<double> values;
      for (const auto& r : runs) {
        if (r.test_metrics[t]) values.push_back(100.0 * r.test_metrics[t]->value(m));
      }
      if (values.empty()) continue;
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
      per_metric[mtl::to_string(m)] = {{"mean", mean}, {"stddev", sd}, {"runs", values.size()}};
    }
    if (!per_metric.empty()) out[mtl::to_string(t)] = per_metric;
  }
  return out;
}

json metrics_json(const mtl::PerTask<std::optional<mtl::MetricsReport>>& metrics) {
  json out = json::object();
  for (mtl::Task t : mtl::kAllTasks) {
    if (metrics[t]) out[mtl::to_string(t)] = mtl::to_json(*metrics[t]);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask depression/stress classification experiments"};
  app.require_subcommand(1);
  bool quiet = false;
  bool verbose = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");
  app.add_flag("-v,--verbose", verbose, "Log debug detail");

  std::string config_path;

  auto* ingest = app.add_subcommand("ingest", "Load, validate and split the configured datasets");
  std::string ingest_out;
  ingest->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out, "Directory for split manifests (default <output_dir>/<run_id>-ingest)");

  auto* train = app.add_subcommand("train", "Train one model family and evaluate it on the test split");
  std::string family;
  std::optional<double> beta;
  std::string task;
  std::string seeds;
  std::string run_id;
  train->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  train->add_option("--family", family, "stl, double or fusion (overrides the config)")
      ->check(CLI::IsMember({"stl", "double", "fusion", "double_encoders", "attention_fusion"}));
  train->add_option("--beta", beta, "Auxiliary loss weight in [0, 1]");
  train->add_option("--task", task, "Task for the stl family")->check(CLI::IsMember({"depression", "stress"}));
  train->add_option("--seeds", seeds, "Comma-separated seeds; one run each, plus a mean/stddev summary");
  train->add_option("--run-id", run_id, "Run id (overrides the config)");

  auto* transfer = app.add_subcommand("transfer", "Train on a source task, then fine-tune on the target task");
  std::string source;
  std::string target;
  transfer->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  transfer->add_option("--source", source, "Source task")->check(CLI::IsMember({"depression", "stress"}));
  transfer->add_option("--target", target, "Target task")->check(CLI::IsMember({"depression", "stress"}));
  transfer->add_option("--run-id", run_id, "Run id (overrides the config)");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on one split of its run");
  std::string checkpoint;
  std::string split = "test";
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  evaluate->add_option("--split", split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "val", "test"}));

  auto* sweep = app.add_subcommand("sweep", "One multitask run per beta value, plus accuracy/F1 curves");
  std::string betas = "0.01,0.1,0.2,0.3";
  sweep->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--betas", betas, "Comma-separated beta values")->capture_default_str();
  sweep->add_option("--family", family, "double or fusion (overrides the config)")
      ->check(CLI::IsMember({"double", "fusion", "double_encoders", "attention_fusion"}));
  sweep->add_option("--run-id", run_id, "Run id prefix (overrides the config)");

  auto* report = app.add_subcommand("report", "Comparison table over completed runs");
  std::string report_task = "depression";
  std::string results_dir;
  std::string csv_out;
  report->add_option("--task", report_task, "Task to tabulate")
      ->check(CLI::IsMember({"depression", "stress"}))
      ->capture_default_str();
  report->add_option("--dir", results_dir, "Directory holding run directories (default $MTL_OUTPUT_DIR or runs)");
  report->add_option("--config", config_path, "Take the output directory from this config")
      ->check(CLI::ExistingFile);
  report->add_option("--csv", csv_out, "Also write the delimited table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  auto logger = spdlog::stderr_color_mt("mtl");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%H:%M:%S %^%l%$ %v");
  spdlog::set_level(quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (ingest->parsed()) {
      const auto config = load_config(config_path);
      const std::filesystem::path out =
          ingest_out.empty() ? config.output_dir / (config.run_id + "-ingest") : std::filesystem::path(ingest_out);
      const auto splits = mtl::ingest(config, out);
      json j = {{"directory", out.string()}};
      for (mtl::Task t : mtl::kAllTasks) {
        if (!splits[t]) continue;
        const auto s = splits[t]->sizes();
        j[mtl::to_string(t)] = {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
      }
      std::cout << j.dump(2) << std::endl;
    } else if (train->parsed()) {
      auto config = load_config(config_path);
      if (!family.empty()) config.model.family = mtl::parse_family(family);
      if (beta) config.train.beta = *beta;
      if (!task.empty()) config.model.stl_task = mtl::parse_task(task);
      if (!run_id.empty()) config.run_id = run_id;
      if (seeds.empty()) {
        std::cout << mtl::to_json(mtl::run_experiment(config)).dump(2) << std::endl;
      } else {
        const auto seed_list = parse_seeds(seeds);
        std::vector<mtl::ExperimentConfig> configs;
        for (auto s : seed_list) configs.push_back(mtl::with_seed(config, s));
        for (const auto& c : configs) c.validate();
        std::vector<mtl::RunResult> runs;
        json out = {{"runs", json::array()}};
        for (const auto& c : configs) {
          runs.push_back(mtl::run_experiment(c));
          out["runs"].push_back(mtl::to_json(runs.back()));
        }
        out["summary"] = seed_summary(runs);
        std::cout << out.dump(2) << std::endl;
      }
    } else if (transfer->parsed()) {
      auto config = load_config(config_path);
      config.model.family = mtl::ModelFamily::kStl;
      if (!source.empty()) config.transfer.source = mtl::parse_task(source);
      if (!target.empty()) config.transfer.target = mtl::parse_task(target);
      if (!run_id.empty()) config.run_id = run_id;
      std::cout << mtl::to_json(mtl::run_transfer(config)).dump(2) << std::endl;
    } else if (evaluate->parsed()) {
      const auto metrics = mtl::evaluate_checkpoint(checkpoint, mtl::parse_split(split));
      std::cout << json{{"checkpoint", checkpoint}, {"split", split}, {"metrics", metrics_json(metrics)}}.dump(2)
                << std::endl;
    } else if (sweep->parsed()) {
      auto config = load_config(config_path);
      if (!family.empty()) config.model.family = mtl::parse_family(family);
      if (!run_id.empty()) config.run_id = run_id;
      const auto values = mtl::parse_betas(betas);
      const auto result = mtl::sweep_beta(config, values);
      json out = {{"runs", json::array()},
                  {"curves_csv", result.curves_csv.string()},
                  {"curves_svg", result.curves_svg.string()}};
      for (const auto& r : result.runs) out["runs"].push_back(mtl::to_json(r));
      std::cout << out.dump(2) << std::endl;
    } else if (report->parsed()) {
      std::filesystem::path dir = results_dir;
      if (dir.empty() && !config_path.empty()) dir = load_config(config_path).output_dir;
      if (dir.empty()) {
        const char* env = std::getenv("MTL_OUTPUT_DIR");
        dir = env != nullptr && *env != '\0' ? env : "runs";
      }
      const auto results = mtl::collect_results(dir);
      mtl::require(!results.empty(), mtl::ErrorCode::kIo, "no completed runs under " + dir.string());
      const auto table = mtl::report_table(results, mtl::parse_task(report_task));
      if (!csv_out.empty()) {
        std::ofstream out(csv_out, std::ios::binary | std::ios::trunc);
        mtl::require(out.good(), mtl::ErrorCode::kIo, "cannot write " + csv_out);
        out << table.csv;
      }
      std::cout << table.text;
    }
  } catch (const mtl::Error& e) {
    return report_error(mtl::to_string(e.code()), e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
