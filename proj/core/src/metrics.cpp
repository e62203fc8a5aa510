#include "mtl/metrics.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "mtl/error.hpp"

namespace mtl {

namespace {

constexpr Metric kMetrics[] = {Metric::kPrecision, Metric::kRecall, Metric::kF1, Metric::kAccuracy,
                               Metric::kSpecificity};

Metric parse_metric(std::string_view s) {
  for (Metric m : kMetrics) {
    if (s == to_string(m)) return m;
  }
  fail(ErrorCode::kParse, "unknown metric " + std::string(s));
}

}  // namespace

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  require(predictions.size() == labels.size(), ErrorCode::kInvalidArgument,
          "confusion: " + std::to_string(predictions.size()) + " predictions vs " + std::to_string(labels.size()) +
              " labels");
  require(!labels.empty(), ErrorCode::kInvalidArgument, "confusion: no examples");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i];
    const int y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      fail(ErrorCode::kInvalidArgument, "confusion: values must be 0 or 1 (index " + std::to_string(i) + ")");
    }
    if (p == 1 && y == 1) ++c.tp;
    else if (p == 1 && y == 0) ++c.fp;
    else if (p == 0 && y == 1) ++c.fn;
    else ++c.tn;
  }
  return c;
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::kPrecision: return "precision";
    case Metric::kRecall: return "recall";
    case Metric::kF1: return "f1";
    case Metric::kAccuracy: return "accuracy";
    case Metric::kSpecificity: return "specificity";
  }
  return "?";
}

double MetricsReport::value(Metric metric) const {
  switch (metric) {
    case Metric::kPrecision: return precision;
    case Metric::kRecall: return recall;
    case Metric::kF1: return f1;
    case Metric::kAccuracy: return accuracy;
    case Metric::kSpecificity: return specificity;
  }
  return 0.0;
}

double MetricsReport::display(Metric metric) const { return percent_2dp(value(metric)); }

MetricsReport compute_metrics(const ConfusionCounts& c) {
  require(c.total() > 0, ErrorCode::kInvalidArgument, "compute_metrics: no examples");
  MetricsReport r;
  r.counts = c;
  auto ratio = [&](std::size_t num, std::size_t den, Metric m) {
    if (den == 0) {
      r.degenerate.insert(m);
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(c.tp, c.tp + c.fp, Metric::kPrecision);
  r.recall = ratio(c.tp, c.tp + c.fn, Metric::kRecall);
  r.accuracy = ratio(c.tp + c.tn, c.total(), Metric::kAccuracy);
  r.specificity = ratio(c.tn, c.tn + c.fp, Metric::kSpecificity);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1 = 0.0;
    r.degenerate.insert(Metric::kF1);
  }
  return r;
}

double percent_2dp(double fraction) {
  // Values within 1e-9 of a half step are treated as exact ties; the products
  // of ratios with 1e4 carry representation error of that order.
  const double x = fraction * 10000.0;
  const double lower = std::floor(x);
  double units = 0.0;
  if (std::fabs(x - (lower + 0.5)) < 1e-9) {
    units = std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
  } else {
    units = std::round(x);
  }
  return units / 100.0;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", percent_2dp(fraction));
  return buf;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json raw, display, degenerate = nlohmann::json::array();
  for (Metric m : kMetrics) {
    raw[to_string(m)] = report.value(m);
    display[to_string(m)] = report.display(m);
  }
  for (Metric m : report.degenerate) degenerate.push_back(to_string(m));
  return {{"convention", "positive class = label 1"},
          {"counts", {{"tp", report.counts.tp}, {"fp", report.counts.fp}, {"fn", report.counts.fn}, {"tn", report.counts.tn}}},
          {"raw", raw},
          {"display", display},
          {"degenerate", degenerate}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  const auto& c = j.at("counts");
  r.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
              c.at("tn").get<std::size_t>()};
  const auto& raw = j.at("raw");
  r.precision = raw.at("precision").get<double>();
  r.recall = raw.at("recall").get<double>();
  r.f1 = raw.at("f1").get<double>();
  r.accuracy = raw.at("accuracy").get<double>();
  r.specificity = raw.at("specificity").get<double>();
  for (const auto& d : j.at("degenerate")) r.degenerate.insert(parse_metric(d.get<std::string>()));
  return r;
}

}  // namespace mtl
