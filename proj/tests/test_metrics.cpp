#include <gtest/gtest.h>

#include <vector>

#include <nlohmann/json.hpp>

#include "mtl/error.hpp"
#include "mtl/metrics.hpp"
#include "mtl/random.hpp"

namespace mtl {
namespace {

void expect_display(const MetricsReport& r, double p, double rc, double f1, double acc, double spec) {
  EXPECT_EQ(r.display(Metric::kPrecision), p);
  EXPECT_EQ(r.display(Metric::kRecall), rc);
  EXPECT_EQ(r.display(Metric::kF1), f1);
  EXPECT_EQ(r.display(Metric::kAccuracy), acc);
  EXPECT_EQ(r.display(Metric::kSpecificity), spec);
}

TEST(Confusion, PerfectAndAllNegative) {
  const std::vector<int> y{1, 1, 0};
  EXPECT_EQ(confusion(y, y), (ConfusionCounts{2, 0, 0, 1}));
  const std::vector<int> zeros(5, 0), ones(5, 1);
  EXPECT_EQ(confusion(zeros, ones), (ConfusionCounts{0, 0, 5, 0}));
}

TEST(Confusion, EnumeratedExample) {
  const std::vector<int> p{1, 1, 1, 1, 0, 0, 0, 0, 0, 1};
  const std::vector<int> y{1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
  EXPECT_EQ(confusion(p, y), (ConfusionCounts{3, 2, 2, 3}));
}

TEST(Confusion, RejectsBadInput) {
  const std::vector<int> a{1, 0}, b{1}, c{2, 0}, empty;
  EXPECT_THROW(confusion(a, b), Error);
  EXPECT_THROW(confusion(empty, empty), Error);
  EXPECT_THROW(confusion(c, a), Error);
}

TEST(ComputeMetrics, HandCase) {
  const auto r = compute_metrics({3, 1, 2, 4});
  expect_display(r, 75.00, 60.00, 66.67, 70.00, 80.00);
  EXPECT_TRUE(r.degenerate.empty());
  EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
}

TEST(ComputeMetrics, PerfectPredictions) {
  const auto r = compute_metrics({5, 0, 0, 5});
  expect_display(r, 100.0, 100.0, 100.0, 100.0, 100.0);
  EXPECT_TRUE(r.degenerate.empty());
}

TEST(ComputeMetrics, ZeroDenominatorsAreFlagged) {
  const auto r = compute_metrics({0, 0, 3, 7});
  EXPECT_TRUE(r.degenerate.contains(Metric::kPrecision));
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.display(Metric::kRecall), 0.0);
  EXPECT_FALSE(r.degenerate.contains(Metric::kRecall));
  EXPECT_EQ(r.display(Metric::kSpecificity), 100.0);
  EXPECT_EQ(r.display(Metric::kAccuracy), 70.0);
  EXPECT_THROW(compute_metrics({}), Error);
}

// Counts pairs one at a time, independent of confusion().
MetricsReport brute_force(const std::vector<int>& p, const std::vector<int>& y) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    tp += p[i] == 1 && y[i] == 1;
    fp += p[i] == 1 && y[i] == 0;
    fn += p[i] == 0 && y[i] == 1;
    tn += p[i] == 0 && y[i] == 0;
  }
  MetricsReport r;
  r.counts = {tp, fp, fn, tn};
  auto div = [&](std::size_t a, std::size_t b, Metric m) {
    if (b == 0) r.degenerate.insert(m);
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  r.precision = div(tp, tp + fp, Metric::kPrecision);
  r.recall = div(tp, tp + fn, Metric::kRecall);
  r.accuracy = div(tp + tn, p.size(), Metric::kAccuracy);
  r.specificity = div(tn, tn + fp, Metric::kSpecificity);
  if (r.precision + r.recall == 0.0) r.degenerate.insert(Metric::kF1);
  else r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

TEST(ComputeMetrics, MatchesBruteForceOnRandomVectors) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(2));
      y[i] = static_cast<int>(rng.below(2));
    }
    const auto got = compute_metrics(confusion(p, y));
    EXPECT_EQ(got, brute_force(p, y)) << "trial " << trial;

    for (Metric m : {Metric::kPrecision, Metric::kRecall, Metric::kF1, Metric::kAccuracy, Metric::kSpecificity}) {
      EXPECT_GE(got.display(m), 0.0);
      EXPECT_LE(got.display(m), 100.0);
    }
    if (got.precision + got.recall > 0) {
      EXPECT_NEAR(got.f1, 2 * got.precision * got.recall / (got.precision + got.recall), 1e-9);
    }

    std::vector<int> pf(n), yf(n);
    for (std::size_t i = 0; i < n; ++i) {
      pf[i] = 1 - p[i];
      yf[i] = 1 - y[i];
    }
    const auto flipped = compute_metrics(confusion(pf, yf));
    EXPECT_EQ(flipped.accuracy, got.accuracy);
    EXPECT_EQ(flipped.recall, got.specificity);
    EXPECT_EQ(flipped.specificity, got.recall);
  }
}

TEST(Rounding, HalfToEven) {
  EXPECT_EQ(percent_2dp(0.123450), 12.34);
  EXPECT_EQ(percent_2dp(0.123350), 12.34);
  EXPECT_EQ(percent_2dp(0.123351), 12.34);
  EXPECT_EQ(percent_2dp(0.123449), 12.34);
  EXPECT_EQ(percent_2dp(0.123451), 12.35);
  EXPECT_EQ(percent_2dp(2.0 / 3.0), 66.67);
  EXPECT_EQ(percent_2dp(0.0), 0.0);
  EXPECT_EQ(percent_2dp(1.0), 100.0);
  EXPECT_EQ(format_percent(0.5), "50.00");
  EXPECT_EQ(format_percent(0.00005), "0.00");
  EXPECT_EQ(format_percent(0.00015), "0.02");
}

TEST(Rounding, PublishedRowsAreSelfConsistent) {
  auto f1 = [](double p, double r) { return 2 * p * r / (p + r); };
  EXPECT_EQ(percent_2dp(f1(0.9401, 0.9194)), 92.96);
  EXPECT_EQ(percent_2dp(f1(0.8224, 0.8503)), 83.61);
}

TEST(MetricsJson, RoundTripsAndCarriesBothViews) {
  const auto r = compute_metrics({0, 0, 3, 7});
  const auto j = to_json(r);
  EXPECT_EQ(j.at("display").at("accuracy").get<double>(), 70.0);
  EXPECT_EQ(j.at("raw").at("accuracy").get<double>(), 0.7);
  EXPECT_EQ(j.at("degenerate"), nlohmann::json::array({"precision", "f1"}));
  EXPECT_EQ(j.at("convention").get<std::string>(), "positive class = label 1");
  EXPECT_EQ(metrics_from_json(nlohmann::json::parse(j.dump())), r);
}

}  // namespace
}  // namespace mtl
