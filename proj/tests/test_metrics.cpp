#include "arcflux/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace arcflux;
using namespace arcflux::metrics;

TEST(Confusion, AllCorrectAndComplement) {
  const std::vector<int> labels{0, 1, 1, 0, 1};
  const auto cm = confusion(labels, labels);
  EXPECT_EQ(cm.fp, 0u);
  EXPECT_EQ(cm.fn, 0u);
  EXPECT_EQ(report(cm).accuracy, 1.0);
  std::vector<int> flipped;
  for (int l : labels) flipped.push_back(1 - l);
  const auto bad = confusion(flipped, labels);
  EXPECT_EQ(bad.tp, 0u);
  EXPECT_EQ(bad.tn, 0u);
}

TEST(Confusion, HandTally) {
  const std::vector<int> pred{1, 0, 1, 1, 0, 0};
  const std::vector<int> label{1, 0, 0, 1, 1, 0};
  EXPECT_EQ(confusion(pred, label), (ConfusionMatrix{2, 1, 1, 2}));
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion(std::vector<int>{1, 0}, std::vector<int>{1}), ShapeError);
  EXPECT_THROW(confusion(std::vector<int>{2}, std::vector<int>{1}), std::invalid_argument);
  EXPECT_THROW(report(ConfusionMatrix{}), std::invalid_argument);
}

TEST(Report, PerfectClassifier) {
  const auto r = report({10, 0, 0, 7});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Report, ReferenceConfusionCounts) {
  const ConfusionMatrix cm{2540, 102, 83, 2555};
  const auto r = report(cm);
  EXPECT_EQ(cm.total(), 5280u);
  EXPECT_EQ(r.accuracy, 5095.0 / 5280.0);
  const double p_arc = 2555.0 / 2657.0, p_norm = 2540.0 / 2623.0;
  const double r_arc = 2555.0 / 2638.0, r_norm = 2540.0 / 2642.0;
  EXPECT_DOUBLE_EQ(r.precision, (p_arc + p_norm) / 2);
  EXPECT_DOUBLE_EQ(r.recall, (r_arc + r_norm) / 2);
  EXPECT_DOUBLE_EQ(r.f1, 2 * r.precision * r.recall / (r.precision + r.recall));
  EXPECT_NEAR(r.accuracy, 0.96496, 1e-5);
}

TEST(Report, NoPositivePredictionsFlagged) {
  const auto r = report({5, 0, 5, 0});
  EXPECT_EQ(r.arc.precision, 0.0);
  EXPECT_TRUE(r.arc.precision_undefined);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_EQ(r.accuracy, 0.5);
}

TEST(Report, MatchesRecountOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<std::size_t> len(1, 200);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> pred(len(rng)), label(pred.size());
    // Every fifth trial is heavily skewed to exercise the 0/0 conventions.
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = trial % 5 == 0 ? 1 : bit(rng);
      label[i] = bit(rng);
    }
    const auto r = report(confusion(pred, label));
    const auto o = oracle::recount(pred, label);
    ASSERT_EQ(r.cm, (ConfusionMatrix{o.tn, o.fp, o.fn, o.tp}));
    EXPECT_EQ(r.accuracy, o.accuracy);
    EXPECT_NEAR(r.precision, o.precision, 1e-15);
    EXPECT_NEAR(r.recall, o.recall, 1e-15);
    EXPECT_NEAR(r.f1, o.f1, 1e-15);
  }
}

TEST(Report, PermutationInvariant) {
  std::mt19937_64 rng(2);
  std::vector<int> pred(100), label(100);
  for (int i = 0; i < 100; ++i) {
    pred[i] = static_cast<int>(rng() % 2);
    label[i] = static_cast<int>(rng() % 2);
  }
  const auto ref = report(confusion(pred, label));
  std::vector<std::size_t> idx(100);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<int> p2, l2;
  for (auto i : idx) {
    p2.push_back(pred[i]);
    l2.push_back(label[i]);
  }
  const auto r = report(confusion(p2, l2));
  EXPECT_EQ(r.accuracy, ref.accuracy);
  EXPECT_EQ(r.f1, ref.f1);
}

TEST(Serialize, JsonKeyOrderAndTable) {
  const auto r = report({2540, 102, 83, 2555});
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"confusion", "accuracy", "precision", "recall", "f1", "per_class", "warnings"}));
  EXPECT_EQ(j["confusion"]["tp"], 2555);
  const auto table = confusion_table(r.cm);
  EXPECT_NE(table.find("true Normal             2540             102"), std::string::npos) << table;
  EXPECT_NE(table.find("true Arc Fault            83            2555"), std::string::npos) << table;
  const auto row = tsv_row(r);
  EXPECT_EQ(std::count(row.begin(), row.end(), '\t'), std::count(kTsvHeader, kTsvHeader + std::strlen(kTsvHeader), '\t'));
}
