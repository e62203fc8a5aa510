#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace mtl {

// Positive class is label 1 (stressful / depressive).
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

enum class Metric { kPrecision, kRecall, kF1, kAccuracy, kSpecificity };

const char* to_string(Metric metric);

// Fractions in [0,1]. A metric whose denominator is zero is reported as 0 and
// listed in `degenerate`.
struct MetricsReport {
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double specificity = 0.0;
  std::set<Metric> degenerate;

  double value(Metric metric) const;
  // Percentage rounded to two decimals, half-to-even.
  double display(Metric metric) const;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport compute_metrics(const ConfusionCounts& counts);

// 100 * fraction rounded to two decimals with ties to even.
double percent_2dp(double fraction);
std::string format_percent(double fraction);

// {"convention", "counts", "raw", "display", "degenerate"} record.
nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace mtl
