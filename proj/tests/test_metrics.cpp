#include <gtest/gtest.h>

#include <random>
#include <set>

#include "scfcrc/error.hpp"
#include "scfcrc/metrics.hpp"

using namespace scfcrc;

namespace {

double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double credit = 0, pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      credit += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return credit / pairs;
}

// Sweep every distinct score as a threshold, highest first.
double ap_thresholds(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> cuts(s.begin(), s.end());
  double positives = 0;
  for (int v : y) positives += v;
  double ap = 0, prev_recall = 0;
  for (double t : cuts) {
    double tp = 0, kept = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        kept += 1;
        tp += y[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / kept);
    prev_recall = recall;
  }
  return ap;
}

double f1_confusion(const std::vector<int>& pred, const std::vector<int>& y) {
  double total = 0;
  for (int c = 0; c < 2; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < y.size(); ++i) {
      tp += pred[i] == c && y[i] == c;
      fp += pred[i] == c && y[i] != c;
      fn += pred[i] != c && y[i] == c;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0, r = tp + fn > 0 ? tp / (tp + fn) : 0;
    total += p + r > 0 ? 2 * p * r / (p + r) : 0;
  }
  return total / 2;
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

Instance random_instance(std::mt19937_64& rng, bool ties) {
  std::uniform_int_distribution<int> size(2, 200), level(0, 9);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution fraud(0.25);
  Instance in;
  const int n = size(rng);
  for (int i = 0; i < n; ++i) {
    in.scores.push_back(ties ? level(rng) / 10.0 : u(rng));
    in.labels.push_back(fraud(rng) ? 1 : 0);
  }
  in.labels[0] = 1;
  in.labels[1] = 0;
  return in;
}

}  // namespace

TEST(Metrics, Examples) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.8, 0.4, 0.1}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_NEAR(average_precision(std::vector<double>{0.9, 0.5, 0.1}, std::vector<int>{1, 0, 1}), 5.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}), 0.25);
  std::vector<int> y(100, 0), pred(100, 0);
  for (int i = 90; i < 100; ++i) y[i] = 1;
  EXPECT_NEAR(f1_macro(pred, y), (2 * 0.9 / 1.9) / 2, 1e-15);
  EXPECT_NEAR(f1_macro(pred, y), 0.4737, 1e-4);
  EXPECT_DOUBLE_EQ(f1_macro(y, y), 1.0);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ShapeError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ShapeError);
  EXPECT_THROW(average_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), ShapeError);
}

TEST(Metrics, MatchOraclesOnRandomInstances) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(rng, trial % 2 == 1);
    EXPECT_NEAR(auc(in.scores, in.labels), auc_pairs(in.scores, in.labels), 1e-12);
    EXPECT_NEAR(average_precision(in.scores, in.labels), ap_thresholds(in.scores, in.labels), 1e-12);
    std::vector<int> pred;
    for (double s : in.scores) pred.push_back(s >= 0.5 ? 1 : 0);
    EXPECT_NEAR(f1_macro(pred, in.labels), f1_confusion(pred, in.labels), 1e-12);
    const auto m = score_metrics(in.scores, in.labels);
    EXPECT_EQ(m.f1_macro, f1_macro(pred, in.labels));
  }
}

TEST(Metrics, Invariants) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = random_instance(rng, false);
    const double a = auc(in.scores, in.labels);
    std::vector<double> neg, mono;
    for (double s : in.scores) {
      neg.push_back(-s);
      mono.push_back(std::exp(3 * s) - 7);
    }
    EXPECT_NEAR(a + auc(neg, in.labels), 1.0, 1e-12);
    EXPECT_NEAR(auc(mono, in.labels), a, 1e-12);
    std::vector<int> pred, flipped_pred, flipped_y;
    for (size_t i = 0; i < in.scores.size(); ++i) {
      pred.push_back(in.scores[i] >= 0.5);
      flipped_pred.push_back(1 - pred.back());
      flipped_y.push_back(1 - in.labels[i]);
    }
    EXPECT_NEAR(f1_macro(flipped_pred, flipped_y), f1_macro(pred, in.labels), 1e-15);
  }
}
