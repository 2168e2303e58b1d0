#include "scfcrc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scfcrc/error.hpp"

namespace scfcrc {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ShapeError("non-finite score at index " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw ShapeError("labels must be 0 or 1");
  }
}

// Indices sorted by descending score.
std::vector<size_t> descending(std::span<const double> scores) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const double n_pos = std::count(labels.begin(), labels.end(), 1);
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ShapeError("AUC needs both classes present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie blocks.
  double pos_rank_sum = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) pos_rank_sum += midrank;
    }
    i = j;
  }
  return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const double n_pos = std::count(labels.begin(), labels.end(), 1);
  if (n_pos == 0) throw ShapeError("average precision needs at least one positive");
  const auto order = descending(scores);
  double tp = 0, fp = 0, ap = 0, prev_recall = 0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / n_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double f1_macro(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  double f1_sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      const bool pred = predictions[i] == c, truth = labels[i] == c;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    const double denom = 2 * tp + fp + fn;
    f1_sum += denom > 0 ? 2 * tp / denom : 0.0;
  }
  return f1_sum / 2.0;
}

Metrics score_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  Metrics m;
  m.auc = auc(scores, labels);
  m.ap = average_precision(scores, labels);
  std::vector<int> pred(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? 1 : 0;
  m.f1_macro = f1_macro(pred, labels);
  return m;
}

}  // namespace scfcrc
