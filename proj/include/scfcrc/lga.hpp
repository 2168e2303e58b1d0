#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "scfcrc/graph.hpp"

namespace scfcrc {

enum class GroupId : uint8_t {
  kTargetRaw = 0,
  kTargetFiltered = 1,
  kNeg = 2,
  kPos = 3,
  kPseudoNeg = 4,
  kPseudoPos = 5,
  kMasked = 6,
};
inline constexpr int kNumGroups = 7;
// Group vectors per hop: h-, h+, h'-, h'+, h*.
inline constexpr int kGroupsPerHop = 2 * kNumClasses + 1;

// Walk multisets count a node once per k-step walk reaching it; shells keep
// each node at exact BFS distance k once.
enum class HopMode { kWalks, kShells };

struct TokenMeta {
  uint8_t relation = 0;
  uint8_t hop = 0;
  uint8_t group = 0;
  friend bool operator==(const TokenMeta&, const TokenMeta&) = default;
};

struct TokenSequence {
  Eigen::MatrixXf tokens;  // S x d
  std::vector<TokenMeta> meta;
};

constexpr int sequence_length(int num_relations, int hops) {
  return num_relations * (kGroupsPerHop * hops + 2);
}

// Offset of relation r's target-raw token inside a sequence.
constexpr int relation_offset(int r, int hops) { return r * (kGroupsPerHop * hops + 2); }

// Everything group aggregation reads. `visible` holds observed labels that may
// be used for grouping (-1 elsewhere); `pseudo_hard` covers every node.
struct LgaContext {
  const MultiRelationGraph& graph;
  const Matrix& x;
  const Matrix& x_filtered;
  std::span<const int> visible;
  std::span<const int> pseudo_hard;
  int hops = 2;
  HopMode mode = HopMode::kWalks;
};

struct GroupVectors {
  Vector neg, pos, pseudo_neg, pseudo_pos, masked;
};

// (node, multiplicity) pairs of the hop-k neighborhood of v under relation r,
// sorted by node id; v itself is excluded.
std::vector<std::pair<int, double>> hop_members(const MultiRelationGraph& graph, int v, int r, int k, HopMode mode);

GroupVectors group_aggregate_hop(const LgaContext& ctx, int v, int r, int k);
TokenSequence build_sequence(const LgaContext& ctx, int v);

class SequenceCache {
 public:
  SequenceCache() = default;
  SequenceCache(std::vector<int> nodes, int seq_len, int dim, int hops, uint32_t flags = 0);

  int size() const { return static_cast<int>(nodes_.size()); }
  int seq_len() const { return seq_len_; }
  int dim() const { return dim_; }
  int hops() const { return hops_; }
  uint32_t flags() const { return flags_; }
  const std::vector<int>& nodes() const { return nodes_; }
  bool contains(int v) const { return index_.count(v) != 0; }
  int row_of(int v) const;

  TokenSequence get(int v) const;
  void set_row(int row, const TokenSequence& seq);
  // Row-major S x d floats of a cached row.
  const float* row_tokens(int row) const { return values_.data() + static_cast<size_t>(row) * seq_len_ * dim_; }
  const TokenMeta* row_meta(int row) const { return meta_.data() + static_cast<size_t>(row) * seq_len_; }

  friend bool operator==(const SequenceCache&, const SequenceCache&);

 private:
  std::vector<int> nodes_;
  std::unordered_map<int, int> index_;
  int seq_len_ = 0, dim_ = 0, hops_ = 0;
  uint32_t flags_ = 0;
  std::vector<float> values_;
  std::vector<TokenMeta> meta_;
};

inline constexpr uint32_t kCacheHasIds = 1u << 0;
inline constexpr uint32_t kCacheShells = 1u << 1;

// Builds sequences for node_set with `workers` threads; output does not depend
// on the worker count.
SequenceCache precompute_sequences(const LgaContext& ctx, std::span<const int> node_set, int workers = 1);

// Binary layout: "SCFCRCSQ" | u32 version | u32 N | u32 S | u32 d | u32 flags |
// u32 hops, then N*S*d float32 LE, then N*S*3 uint8 token meta, then (when
// flags has kCacheHasIds) N u32 node ids.
void write_sequence_cache(const SequenceCache& cache, const std::filesystem::path& path);
SequenceCache read_sequence_cache(const std::filesystem::path& path);

// N x d matrix stored in the same container with S = 1.
void write_matrix_cache(const Matrix& m, const std::filesystem::path& path);
Matrix read_matrix_cache(const std::filesystem::path& path);

}  // namespace scfcrc
