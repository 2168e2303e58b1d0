#pragma once

#include <span>
#include <vector>

namespace scfcrc {

// Mann-Whitney AUC with half credit for ties. Throws when a class is missing.
double auc(std::span<const double> scores, std::span<const int> labels);
// Step-interpolated average precision; tied scores share one threshold.
double average_precision(std::span<const double> scores, std::span<const int> labels);
// Mean of the two per-class F1 scores; F1 is 0 when precision + recall is 0.
double f1_macro(std::span<const int> predictions, std::span<const int> labels);

struct Metrics {
  double auc = 0, ap = 0, f1_macro = 0;
};

// All three metrics; F1 thresholds the fraud score at `threshold`.
Metrics score_metrics(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

}  // namespace scfcrc
