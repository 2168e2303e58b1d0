#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "scfcrc/graph.hpp"

namespace scfcrc {

struct LabelPropConfig {
  double alpha = 0.9;
  int max_iters = 200;
  double tol = 1e-6;
};

// Structure-only pseudo-labels.
struct PseudoLabels {
  Matrix dist;               // N x 2, rows sum to one
  std::vector<int> hard;     // argmax of dist, ties -> 0
  std::vector<char> reached; // received any propagated mass
  Matrix raw;                // unclamped propagation scores at the final iterate
  int iterations = 0;
};

// Label spreading F <- alpha * S F + (1 - alpha) * Y0 on the union of all
// relations, S = D^-1/2 A D^-1/2. Training rows are clamped to their one-hot
// label afterwards; nodes with no mass fall back to the train class frequencies.
PseudoLabels propagate_labels(const MultiRelationGraph& graph, std::span<const int> train,
                              const LabelPropConfig& config = {});

// Max-norm residual of the fixed-point equation over rows in `rows`.
double propagation_residual(const MultiRelationGraph& graph, std::span<const int> train,
                            const Matrix& scores, double alpha, std::span<const int> rows);

// pseudo.csv: id,p0,p1,hard,reached
void write_pseudo_csv(const PseudoLabels& pseudo, const std::filesystem::path& path);
PseudoLabels read_pseudo_csv(const std::filesystem::path& path);

}  // namespace scfcrc
