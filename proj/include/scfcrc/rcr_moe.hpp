#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "scfcrc/graph.hpp"
#include "scfcrc/lga.hpp"
#include "scfcrc/nn.hpp"

namespace scfcrc {

struct RcrConfig {
  int d_hidden = 32;
  int heads = 4;
  int ffn_mult = 2;
  int public_depth = 2;
  int expert_depth = 1;
  int manager_depth = 1;
  double dropout = 0.1;
  double beta = 0.5;
  // Relation experts encode only their relation's slice of H.
  bool expert_slicing = false;

  void validate() const;
};

struct HeadShape {
  int num_relations = 1;
  int hops = 2;
  int feature_dim = 1;
};

// A batch of cached sequences stacked as (B*S) x d with per-row table ids.
struct TokenBatch {
  Matrix tokens;
  std::vector<int> relation, hop, group;
  int batch = 0;
  int seq_len = 0;
};

TokenBatch make_batch(const SequenceCache& cache, std::span<const int> nodes);
TokenBatch make_batch(std::span<const TokenSequence> seqs);

// Learnable input map: input_proj(token) + relation/hop/group table rows.
class Encodings {
 public:
  Encodings() = default;
  Encodings(const HeadShape& shape, int d_hidden, std::mt19937_64& rng);

  nn::Var forward(nn::Tape& tape, const TokenBatch& batch);
  void collect(nn::ParamList& out);

  nn::Linear input_proj;
  nn::Parameter relation_table, hop_table, group_table;
};

struct HeadOutput {
  std::vector<nn::Var> expert_logits;  // n_e entries, B x 2
  std::vector<nn::Var> expert_probs;   // softmax of the above
  nn::Var manager_logits;              // B x n_e; invalid with a single expert
  nn::Var a_m;                         // B x n_e
};

class MoeHead {
 public:
  // single_expert builds one global expert and no manager.
  MoeHead(const HeadShape& shape, const RcrConfig& config, bool single_expert, uint64_t seed);

  int num_experts() const { return static_cast<int>(experts_.size()); }
  const HeadShape& shape() const { return shape_; }
  const RcrConfig& config() const { return config_; }
  // Relation ids each expert covers; the last expert is global.
  const std::vector<std::vector<int>>& relation_sets() const { return relation_sets_; }
  nn::ParamList parameters();

  nn::Var encode_input(nn::Tape& tape, const TokenBatch& batch);
  nn::Var public_encode(nn::Tape& tape, const nn::Var& x_in, int seq_len, bool training, std::mt19937_64& rng);
  // 2*d_H aggregated representation h_i, B rows.
  nn::Var expert_repr(nn::Tape& tape, int i, const nn::Var& h, int batch, bool training, std::mt19937_64& rng);
  nn::Var expert_logits(nn::Tape& tape, int i, const nn::Var& h, int batch, bool training, std::mt19937_64& rng);
  nn::Var manager_logits(nn::Tape& tape, const nn::Var& h, int batch, bool training, std::mt19937_64& rng);

  HeadOutput forward(nn::Tape& tape, const TokenBatch& batch, bool training, std::mt19937_64& rng);

  Encodings& encodings() { return enc_; }
  nn::Mlp& expert_classifier(int i) { return experts_.at(i).classifier; }
  nn::Mlp& manager_classifier() { return manager_.classifier; }

 private:
  struct Block {
    nn::EncoderStack encoder;
    nn::Mlp classifier;
  };
  // Rows of (B*S) x d_H picked by AGG for expert i: [target raw | target filtered].
  nn::Var aggregate(const nn::Var& encoded, int relation, int batch, int seq_len);
  std::shared_ptr<const ag::SpMat> mean_selector(int batch, int seq_len, int offset);

  HeadShape shape_;
  RcrConfig config_;
  Encodings enc_;
  nn::EncoderStack public_;
  std::vector<Block> experts_;
  Block manager_;
  bool has_manager_ = false;
  std::vector<std::vector<int>> relation_sets_;
  std::map<std::tuple<int, int, int>, std::shared_ptr<const ag::SpMat>> selector_cache_;
};

// Structure-perceptron scores for node v: beta * mean raw cosine + (1 - beta) *
// mean filtered cosine over the union of v's neighbors in each relation set.
Vector structure_scores(const MultiRelationGraph& graph, int v, const Matrix& x, const Matrix& x_filtered,
                        const std::vector<std::vector<int>>& relation_sets, double beta);
// a_G = softmax(structure_scores) for every node (N x n_e).
Matrix structure_prior(const MultiRelationGraph& graph, const Matrix& x, const Matrix& x_filtered,
                       const std::vector<std::vector<int>>& relation_sets, double beta);

struct MaskDraw {
  std::vector<int> masked;
  Vector a_masked;
};

// Zeroes the listed experts and spreads their mass evenly over the rest.
Vector redistribute(const Vector& a_m, std::span<const int> masked);
// Independent Bernoulli(ratio) per expert; all-masked draws are redrawn. A
// single expert is never masked.
MaskDraw apply_mask(const Vector& a_m, double ratio, std::mt19937_64& rng);

inline constexpr double kLogClamp = 1e-12;

// Per-node reference forms of the head losses.
double loss_guidance(const Vector& a_g, const Vector& a_m);
double loss_regularized_mask(const Vector& a_m, const MaskDraw& mask, const Matrix& expert_probs);
double loss_detection(const Vector& a_m, const Matrix& expert_probs, int y);
// sum_i a_M[i] p_i
Vector predict(const Vector& a_m, const Matrix& expert_probs);

// Batched, differentiable forms (means over the B rows).
nn::Var loss_guidance(const Matrix& a_g, const nn::Var& manager_logits);
nn::Var loss_regularized_mask(const nn::Var& a_m, const Matrix& masked, const std::vector<nn::Var>& expert_probs);
nn::Var loss_detection(const nn::Var& a_m, const std::vector<nn::Var>& expert_logits, std::span<const int> labels);

}  // namespace scfcrc
