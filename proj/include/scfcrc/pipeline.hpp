#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scfcrc/fcf.hpp"
#include "scfcrc/graph.hpp"
#include "scfcrc/label_prop.hpp"
#include "scfcrc/lga.hpp"
#include "scfcrc/metrics.hpp"
#include "scfcrc/rcr_moe.hpp"

namespace scfcrc {

struct Ablation {
  bool no_fcf = false;  // X' = 0, stage 1 skipped
  bool no_rcr = false;  // one global expert, a_M = 1, cross-entropy only
  bool no_ic = false;
  bool no_pc = false;
  bool no_lg = false;
  bool no_lrm = false;
  // Replaces the structure prior a_G with this constant vector.
  std::optional<std::vector<double>> fixed_ag;
};

// Names accepted: full, no_fcf, no_rcr, no_ic, no_pc, no_lg, no_lrm, fixed_ag.
Ablation parse_ablation(const std::string& name, int num_relations);
// Global expert 0.4, relation experts share 0.6.
std::vector<double> default_fixed_prior(int num_relations);

struct TrainConfig {
  std::string profile = "synthetic";
  // Dataset directory; empty when supplied on the command line.
  std::string data_path;
  SplitRatios split;
  LabelPropConfig label_prop;
  int hops = 2;
  HopMode hop_mode = HopMode::kWalks;
  // Only train labels are visible to group aggregation.
  bool label_hygiene = true;

  FcfConfig fcf;
  RcrConfig rcr;

  double lambda3 = 0.1;
  double lambda4 = 0.3;
  double delta = 0.4;
  double masking_ratio = 0.15;
  int epochs = 40;
  int batch_size = 128;
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  int eval_batch_size = 512;
  uint64_t seed = 0;
  Ablation ablation;

  void validate() const;
};

struct EpochRecord {
  double l_d = 0, l_g = 0, l_rm = 0, l2 = 0;
  bool rm_active = false;
  Metrics val;
};

struct RunReport {
  std::vector<FcfEpoch> stage1;
  int pc_skipped = 0;
  int lp_iterations = 0;
  std::vector<EpochRecord> stage2;
  int best_epoch = -1;
  Metrics test;
  std::vector<Metrics> experts;
  uint64_t seed = 0;
  std::string config_json;
  double wall_clock = 0;

  // Per-epoch losses only; identical across runs with the same config and seed.
  std::string loss_trace() const;
  std::string to_json() const;
};

struct Stage1Result {
  SplitMasks split;
  PseudoLabels pseudo;
  std::shared_ptr<FilterModel> filter;  // null under no_fcf
  Matrix filtered;
  std::vector<FcfEpoch> epochs;
  int pc_skipped = 0;
  std::string signature;
};

Stage1Result run_stage1(const MultiRelationGraph& graph, const TrainConfig& config);
// Stage 1 from a saved filter: same split and pseudo-labels, X' recomputed.
Stage1Result restore_stage1(const MultiRelationGraph& graph, const TrainConfig& config,
                            std::shared_ptr<FilterModel> filter);

struct TrainedModels {
  TrainConfig config;
  SplitMasks split;
  PseudoLabels pseudo;
  std::shared_ptr<FilterModel> filter;
  Matrix filtered;
  std::unique_ptr<MoeHead> head;
  SequenceCache sequences;
  Matrix prior;  // a_G per node
};

struct TrainResult {
  TrainedModels models;
  RunReport report;
};

// Called whenever the validation AUC improves.
using CheckpointHook = std::function<void(TrainedModels&)>;

// Two-stage training. A precomputed stage 1 may be passed when several runs
// share it; its signature must match the config.
TrainResult train(const MultiRelationGraph& graph, const TrainConfig& config, const Stage1Result* stage1 = nullptr,
                  const CheckpointHook& on_best = {});

// Rebuilds sequences and the structure prior for an existing stage 1 and head.
TrainedModels assemble_models(const MultiRelationGraph& graph, const TrainConfig& config, Stage1Result stage1,
                              std::unique_ptr<MoeHead> head);

struct Evaluation {
  Metrics overall;
  std::vector<Metrics> experts;
  std::vector<double> scores;
  std::vector<Matrix> expert_probs;  // per expert, |nodes| x 2
};

Evaluation evaluate(TrainedModels& models, const MultiRelationGraph& graph, std::span<const int> nodes);

// splitmix64 of (seed, stream): independent RNG streams per purpose.
uint64_t derive_seed(uint64_t seed, uint64_t stream);
int worker_count_from_env();

}  // namespace scfcrc
