#include "scfcrc/lga.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

#include "io_util.hpp"
#include "scfcrc/error.hpp"

namespace scfcrc {

namespace {

constexpr char kSeqMagic[8] = {'S', 'C', 'F', 'C', 'R', 'C', 'S', 'Q'};
constexpr uint32_t kSeqVersion = 1;

using Frontier = std::vector<std::pair<int, double>>;

// One walk step: counts of endpoints reachable from the weighted frontier.
Frontier expand(const Csr& adj, const Frontier& from) {
  std::vector<std::pair<int, double>> raw;
  for (const auto& [u, c] : from) {
    for (int w : adj.neighbors(u)) raw.emplace_back(w, c);
  }
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Frontier out;
  for (const auto& [w, c] : raw) {
    if (!out.empty() && out.back().first == w) {
      out.back().second += c;
    } else {
      out.emplace_back(w, c);
    }
  }
  return out;
}

// BFS layers 1..k of v, each sorted.
std::vector<std::vector<int>> shells(const Csr& adj, int v, int k) {
  std::vector<std::vector<int>> layers;
  std::vector<int> seen{v};
  std::vector<int> current{v};
  for (int step = 0; step < k; ++step) {
    std::vector<int> next;
    for (int u : current) {
      for (int w : adj.neighbors(u)) next.push_back(w);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    std::vector<int> fresh;
    std::set_difference(next.begin(), next.end(), seen.begin(), seen.end(), std::back_inserter(fresh));
    std::vector<int> merged;
    std::merge(seen.begin(), seen.end(), fresh.begin(), fresh.end(), std::back_inserter(merged));
    seen.swap(merged);
    layers.push_back(fresh);
    current = std::move(fresh);
  }
  return layers;
}

// Hop members for k = 1..K in one pass.
std::vector<Frontier> all_hops(const Csr& adj, int v, int hops, HopMode mode) {
  std::vector<Frontier> out;
  if (mode == HopMode::kShells) {
    for (auto& layer : shells(adj, v, hops)) {
      Frontier f;
      for (int u : layer) f.emplace_back(u, 1.0);
      out.push_back(std::move(f));
    }
    return out;
  }
  Frontier walk{{v, 1.0}};
  for (int k = 1; k <= hops; ++k) {
    walk = expand(adj, walk);
    Frontier members;
    for (const auto& e : walk) {
      if (e.first != v) members.push_back(e);
    }
    out.push_back(std::move(members));
  }
  return out;
}

GroupVectors aggregate(const LgaContext& ctx, const Frontier& members) {
  const int d = static_cast<int>(ctx.x.cols());
  GroupVectors g{Vector::Zero(d), Vector::Zero(d), Vector::Zero(d), Vector::Zero(d), Vector::Zero(d)};
  double n_neg = 0, n_pos = 0, n_pneg = 0, n_ppos = 0, n_masked = 0;
  for (const auto& [u, c] : members) {
    const int y = ctx.visible[u];
    if (y == 0) {
      g.neg += c * ctx.x.row(u).transpose();
      n_neg += c;
    } else if (y == 1) {
      g.pos += c * ctx.x.row(u).transpose();
      n_pos += c;
    } else {
      g.masked += c * ctx.x.row(u).transpose();
      n_masked += c;
    }
    if (ctx.pseudo_hard[u] == 1) {
      g.pseudo_pos += c * ctx.x_filtered.row(u).transpose();
      n_ppos += c;
    } else {
      g.pseudo_neg += c * ctx.x_filtered.row(u).transpose();
      n_pneg += c;
    }
  }
  if (n_neg > 0) g.neg /= n_neg;
  if (n_pos > 0) g.pos /= n_pos;
  if (n_pneg > 0) g.pseudo_neg /= n_pneg;
  if (n_ppos > 0) g.pseudo_pos /= n_ppos;
  if (n_masked > 0) g.masked /= n_masked;
  return g;
}

void check_context(const LgaContext& ctx) {
  const int n = ctx.graph.num_nodes();
  if (ctx.hops < 1 || ctx.hops > 4) throw ConfigError("hop count must lie in [1,4]");
  if (ctx.x.rows() != n || ctx.x_filtered.rows() != n || ctx.x.cols() != ctx.x_filtered.cols()) {
    throw ShapeError("raw and filtered feature matrices must both be N x d");
  }
  if (static_cast<int>(ctx.visible.size()) != n || static_cast<int>(ctx.pseudo_hard.size()) != n) {
    throw ShapeError("label vectors must cover every node");
  }
  if (ctx.graph.num_relations() > 255) throw ConfigError("at most 255 relations fit the token meta");
}

}  // namespace

std::vector<std::pair<int, double>> hop_members(const MultiRelationGraph& graph, int v, int r, int k, HopMode mode) {
  if (k < 1) throw ConfigError("hop index must be >= 1");
  return all_hops(graph.relation(r), v, k, mode).back();
}

GroupVectors group_aggregate_hop(const LgaContext& ctx, int v, int r, int k) {
  check_context(ctx);
  if (k < 1 || k > ctx.hops) throw ConfigError("hop index out of range");
  return aggregate(ctx, hop_members(ctx.graph, v, r, k, ctx.mode));
}

TokenSequence build_sequence(const LgaContext& ctx, int v) {
  check_context(ctx);
  const int R = ctx.graph.num_relations();
  const int d = static_cast<int>(ctx.x.cols());
  TokenSequence seq;
  seq.tokens.resize(sequence_length(R, ctx.hops), d);
  seq.meta.reserve(seq.tokens.rows());
  int t = 0;
  auto put = [&](const auto& row, int r, int hop, GroupId g) {
    seq.tokens.row(t++) = row.template cast<float>();
    seq.meta.push_back({static_cast<uint8_t>(r), static_cast<uint8_t>(hop), static_cast<uint8_t>(g)});
  };
  for (int r = 0; r < R; ++r) {
    put(ctx.x.row(v), r, 0, GroupId::kTargetRaw);
    put(ctx.x_filtered.row(v), r, 0, GroupId::kTargetFiltered);
    const auto hops = all_hops(ctx.graph.relation(r), v, ctx.hops, ctx.mode);
    for (int k = 1; k <= ctx.hops; ++k) {
      const GroupVectors g = aggregate(ctx, hops[k - 1]);
      put(g.neg.transpose(), r, k, GroupId::kNeg);
      put(g.pos.transpose(), r, k, GroupId::kPos);
      put(g.pseudo_neg.transpose(), r, k, GroupId::kPseudoNeg);
      put(g.pseudo_pos.transpose(), r, k, GroupId::kPseudoPos);
      put(g.masked.transpose(), r, k, GroupId::kMasked);
    }
  }
  return seq;
}

SequenceCache::SequenceCache(std::vector<int> nodes, int seq_len, int dim, int hops, uint32_t flags)
    : nodes_(std::move(nodes)), seq_len_(seq_len), dim_(dim), hops_(hops), flags_(flags) {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate node " + std::to_string(nodes_[i]) + " in sequence cache");
    }
  }
  values_.assign(nodes_.size() * seq_len_ * dim_, 0.0f);
  meta_.assign(nodes_.size() * seq_len_, TokenMeta{});
}

int SequenceCache::row_of(int v) const {
  auto it = index_.find(v);
  if (it == index_.end()) throw ShapeError("node " + std::to_string(v) + " is not in the sequence cache");
  return it->second;
}

TokenSequence SequenceCache::get(int v) const {
  const int row = row_of(v);
  TokenSequence seq;
  seq.tokens.resize(seq_len_, dim_);
  const float* src = row_tokens(row);
  for (int s = 0; s < seq_len_; ++s) {
    for (int j = 0; j < dim_; ++j) seq.tokens(s, j) = src[s * dim_ + j];
  }
  seq.meta.assign(row_meta(row), row_meta(row) + seq_len_);
  return seq;
}

void SequenceCache::set_row(int row, const TokenSequence& seq) {
  if (seq.tokens.rows() != seq_len_ || seq.tokens.cols() != dim_) throw ShapeError("sequence shape mismatch");
  float* dst = values_.data() + static_cast<size_t>(row) * seq_len_ * dim_;
  for (int s = 0; s < seq_len_; ++s) {
    for (int j = 0; j < dim_; ++j) dst[s * dim_ + j] = seq.tokens(s, j);
  }
  std::copy(seq.meta.begin(), seq.meta.end(), meta_.begin() + static_cast<size_t>(row) * seq_len_);
}

bool operator==(const SequenceCache& a, const SequenceCache& b) {
  return a.nodes_ == b.nodes_ && a.seq_len_ == b.seq_len_ && a.dim_ == b.dim_ && a.hops_ == b.hops_ &&
         a.flags_ == b.flags_ && a.meta_ == b.meta_ &&
         std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

SequenceCache precompute_sequences(const LgaContext& ctx, std::span<const int> node_set, int workers) {
  check_context(ctx);
  for (int v : node_set) {
    if (v < 0 || v >= ctx.graph.num_nodes()) throw ShapeError("node id " + std::to_string(v) + " out of range");
  }
  std::vector<int> nodes(node_set.begin(), node_set.end());
  uint32_t flags = ctx.mode == HopMode::kShells ? kCacheShells : 0u;
  // An explicit id block is only needed when the rows are not simply 0..N-1.
  bool identity = static_cast<int>(nodes.size()) == ctx.graph.num_nodes();
  for (size_t i = 0; identity && i < nodes.size(); ++i) identity = nodes[i] == static_cast<int>(i);
  if (!identity) flags |= kCacheHasIds;

  SequenceCache cache(nodes, sequence_length(ctx.graph.num_relations(), ctx.hops), static_cast<int>(ctx.x.cols()),
                      ctx.hops, flags);
  const int n = static_cast<int>(nodes.size());
  workers = std::clamp(workers, 1, std::max(1, n));
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) cache.set_row(i, build_sequence(ctx, nodes[i]));
  };
  if (workers == 1) {
    work(0, n);
    return cache;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk, end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& t : pool) t.join();
  return cache;
}

void write_sequence_cache(const SequenceCache& cache, const std::filesystem::path& path) {
  auto out = io::open_out(path, true);
  out.write(kSeqMagic, sizeof(kSeqMagic));
  io::write_pod<uint32_t>(out, kSeqVersion);
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(cache.size()));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(cache.seq_len()));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(cache.dim()));
  io::write_pod<uint32_t>(out, cache.flags());
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(cache.hops()));
  const size_t row_floats = static_cast<size_t>(cache.seq_len()) * cache.dim();
  for (int i = 0; i < cache.size(); ++i) {
    out.write(reinterpret_cast<const char*>(cache.row_tokens(i)), static_cast<std::streamsize>(row_floats * sizeof(float)));
  }
  for (int i = 0; i < cache.size(); ++i) {
    const TokenMeta* m = cache.row_meta(i);
    for (int s = 0; s < cache.seq_len(); ++s) {
      const uint8_t bytes[3] = {m[s].relation, m[s].hop, m[s].group};
      out.write(reinterpret_cast<const char*>(bytes), 3);
    }
  }
  if (cache.flags() & kCacheHasIds) {
    for (int v : cache.nodes()) io::write_pod<uint32_t>(out, static_cast<uint32_t>(v));
  }
  if (!out) throw LoadError("failed writing " + path.string());
}

SequenceCache read_sequence_cache(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("missing sequence cache " + path.string());
  auto in = io::open_in(path, true);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSeqMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not a sequence cache (bad magic)");
  }
  if (io::read_pod<uint32_t>(in, "cache version") != kSeqVersion) {
    throw ParseError(path.string() + ": unsupported cache version");
  }
  const auto n = io::read_pod<uint32_t>(in, "cache header");
  const auto s = io::read_pod<uint32_t>(in, "cache header");
  const auto d = io::read_pod<uint32_t>(in, "cache header");
  const auto flags = io::read_pod<uint32_t>(in, "cache header");
  const auto hops = io::read_pod<uint32_t>(in, "cache header");

  const size_t row_floats = static_cast<size_t>(s) * d;
  std::vector<float> values(static_cast<size_t>(n) * row_floats);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  std::vector<uint8_t> meta(static_cast<size_t>(n) * s * 3);
  in.read(reinterpret_cast<char*>(meta.data()), static_cast<std::streamsize>(meta.size()));
  if (!in) throw ParseError(path.string() + ": truncated sequence cache");
  std::vector<int> nodes(n);
  for (uint32_t i = 0; i < n; ++i) {
    nodes[i] = (flags & kCacheHasIds) ? static_cast<int>(io::read_pod<uint32_t>(in, "cache node ids"))
                                      : static_cast<int>(i);
  }

  SequenceCache cache(std::move(nodes), static_cast<int>(s), static_cast<int>(d), static_cast<int>(hops), flags);
  TokenSequence seq;
  seq.tokens.resize(s, d);
  seq.meta.resize(s);
  for (uint32_t i = 0; i < n; ++i) {
    const float* src = values.data() + i * row_floats;
    for (uint32_t t = 0; t < s; ++t) {
      for (uint32_t j = 0; j < d; ++j) seq.tokens(t, j) = src[t * d + j];
      const uint8_t* m = meta.data() + (static_cast<size_t>(i) * s + t) * 3;
      seq.meta[t] = {m[0], m[1], m[2]};
    }
    cache.set_row(static_cast<int>(i), seq);
  }
  return cache;
}

void write_matrix_cache(const Matrix& m, const std::filesystem::path& path) {
  SequenceCache cache([&] {
    std::vector<int> ids(m.rows());
    for (int i = 0; i < m.rows(); ++i) ids[i] = i;
    return ids;
  }(), 1, static_cast<int>(m.cols()), 0);
  TokenSequence row;
  row.meta.assign(1, TokenMeta{});
  for (int i = 0; i < m.rows(); ++i) {
    row.tokens = m.row(i).cast<float>();
    cache.set_row(i, row);
  }
  write_sequence_cache(cache, path);
}

Matrix read_matrix_cache(const std::filesystem::path& path) {
  const SequenceCache cache = read_sequence_cache(path);
  if (cache.seq_len() != 1) throw ParseError(path.string() + ": expected a single-token matrix cache");
  Matrix m(cache.size(), cache.dim());
  for (int i = 0; i < cache.size(); ++i) {
    for (int j = 0; j < cache.dim(); ++j) m(i, j) = cache.row_tokens(i)[j];
  }
  return m;
}

}  // namespace scfcrc
