#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace scfcrc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kUnknownLabel = -1;
inline constexpr int kNumClasses = 2;

using Edge = std::pair<int, int>;
using EdgeList = std::vector<Edge>;

// Compressed neighbor lists for one undirected relation. Neighbors of each
// node are sorted ascending and unique.
class Csr {
 public:
  Csr() = default;
  Csr(int num_nodes, const EdgeList& edges);

  std::span<const int> neighbors(int v) const {
    return {targets_.data() + offsets_[v],
            static_cast<size_t>(offsets_[v + 1] - offsets_[v])};
  }
  int degree(int v) const { return offsets_[v + 1] - offsets_[v]; }
  int num_nodes() const { return static_cast<int>(offsets_.size()) - 1; }
  // Number of undirected edges.
  int64_t num_edges() const { return static_cast<int64_t>(targets_.size()) / 2; }

 private:
  std::vector<int64_t> offsets_{0};
  std::vector<int> targets_;
};

// Immutable multi-relation graph. Construction symmetrizes, deduplicates and
// strips self-loops from every relation, and validates the feature matrix.
class MultiRelationGraph {
 public:
  MultiRelationGraph(Matrix features, std::vector<int> labels,
                     const std::vector<EdgeList>& relations,
                     std::vector<std::string> relation_names = {});

  int num_nodes() const { return static_cast<int>(labels_.size()); }
  int num_relations() const { return static_cast<int>(relations_.size()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }

  const Csr& relation(int r) const { return relations_.at(r); }
  std::span<const int> neighbors(int r, int v) const { return relations_[r].neighbors(v); }
  // Union of all relations, deduplicated.
  const Csr& union_relation() const { return union_; }

  // Sorted (u < v) edge list of relation r.
  EdgeList edges(int r) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<Csr> relations_;
  Csr union_;
  std::vector<std::string> relation_names_;
};

struct SplitMasks {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

struct SplitRatios {
  double train = 0.4;
  double val = 0.1;
  double test = 0.5;
};

// Stratified split of the labeled nodes. Deterministic given the seed.
SplitMasks split_nodes(const MultiRelationGraph& graph, SplitRatios ratios, uint64_t seed);

// Label vector where only nodes in `visible` keep their observed label.
std::vector<int> visible_labels(const MultiRelationGraph& graph, std::span<const int> visible);

MultiRelationGraph load_dataset(const std::filesystem::path& dir);
void write_dataset(const MultiRelationGraph& graph, const std::filesystem::path& dir);

struct SyntheticConfig {
  int n_nodes = 2000;
  int n_relations = 3;
  double fraud_ratio = 1.0 / 7.0;
  std::vector<double> homophily{0.9, 0.3, 0.6};
  double camouflage_strength = 0.8;
  double mean_degree = 10.0;
  uint64_t seed = 0;
  int feature_dim = 16;
  // Per-dimension offset of the uncamouflaged fraud mean from the benign mean.
  double class_separation = 1.0;

  void validate() const;
};

// Degree-corrected planted-partition graph with Gaussian class features.
// Every node is labeled.
MultiRelationGraph generate_synthetic(const SyntheticConfig& config);

// Class means used by generate_synthetic: benign mean is zero, the
// uncamouflaged fraud mean is returned here.
Vector synthetic_fraud_mean(const SyntheticConfig& config);

// Fraction of same-class edges in relation r (labeled endpoints only).
double measured_homophily(const MultiRelationGraph& graph, int r);

}  // namespace scfcrc
