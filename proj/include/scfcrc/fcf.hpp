#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "scfcrc/graph.hpp"
#include "scfcrc/label_prop.hpp"
#include "scfcrc/nn.hpp"

namespace scfcrc {

struct FcfConfig {
  double tau = 0.5;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  int gnn_layers = 2;
  // Filter MLP hidden widths; 0 stands for the feature dimension d. Empty
  // means a single d -> d linear layer.
  std::vector<int> hidden{0};
  nn::Activation activation = nn::Activation::kRelu;
  int epochs = 50;
  int batch_size = 256;
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  // Drop the k == i term from the instance-contrastive denominator.
  bool exclude_self = false;

  void validate() const;
};

// Filter MLP (d -> d), mean-aggregating GNN (no bias), and a 2-way head.
class FilterModel {
 public:
  FilterModel(int feature_dim, const FcfConfig& config, uint64_t seed);

  int feature_dim() const { return feature_dim_; }
  nn::ParamList parameters();

  nn::Var filter(nn::Tape& tape, const nn::Var& x);
  // h <- ReLU(W (h + mean_{u in N(v)} h_u)), repeated per layer.
  nn::Var gnn(nn::Tape& tape, std::shared_ptr<const ag::SpMat> mean_agg, const nn::Var& x_filtered);
  nn::Var head(nn::Tape& tape, const nn::Var& z);

  nn::Mlp& mlp() { return mlp_; }
  std::vector<nn::Linear>& gnn_layers() { return gnn_; }
  nn::Linear& head_layer() { return head_; }

 private:
  int feature_dim_;
  nn::Mlp mlp_;
  std::vector<nn::Linear> gnn_;
  nn::Linear head_;
};

// Row-normalized union adjacency; rows of isolated nodes are empty.
std::shared_ptr<const ag::SpMat> mean_aggregator(const Csr& adj);

Matrix filter_features(FilterModel& model, const Matrix& x);
Matrix gnn_forward(const MultiRelationGraph& graph, const Matrix& x_filtered, FilterModel& model);

// Mean 2-way softmax cross-entropy of logits rows against labels.
nn::Var loss_cross_entropy(const nn::Var& logits, std::span<const int> labels);
// Mean cross-entropy of head(z_v) against the hard pseudo-label, v in nodes.
nn::Var loss_gnn(nn::Tape& tape, FilterModel& model, const nn::Var& z, std::span<const int> hard,
                 std::span<const int> nodes);
// Instance-wise supervised contrastive loss on cosine similarities.
nn::Var loss_instance_contrastive(const nn::Var& x_batch, std::span<const int> labels, double tau,
                                  bool exclude_self = false);
// Prototype-wise contrastive loss against per-class means of the original
// batch features. Returns a zero constant and bumps *skipped when a class is
// missing from the batch.
nn::Var loss_prototype_contrastive(const nn::Var& x_filtered_batch, const Matrix& x_batch,
                                   std::span<const int> labels, double tau, int* skipped = nullptr);

struct FcfEpoch {
  double l_gnn = 0, l_ic = 0, l_pc = 0, l1 = 0;
};

struct FcfStep {
  double l_gnn = 0, l_ic = 0, l_pc = 0, objective = 0;
};

struct FcfResult {
  std::unique_ptr<FilterModel> model;
  Matrix filtered;
  std::vector<FcfEpoch> epochs;
  std::vector<FcfStep> steps;
  int pc_skipped = 0;
};

// Mini-batch minimization of L_GNN + lambda1 L_IC + lambda2 L_PC.
FcfResult train_fcf(const MultiRelationGraph& graph, const PseudoLabels& pseudo, const FcfConfig& config,
                    uint64_t seed);

// Mean inter-class over mean intra-class cosine distance of the rows of x.
double separability_ratio(const Matrix& x, std::span<const int> labels);

}  // namespace scfcrc
