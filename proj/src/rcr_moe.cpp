#include "scfcrc/rcr_moe.hpp"

#include <algorithm>
#include <cmath>

#include "scfcrc/error.hpp"

namespace scfcrc {

using ag::Var;

void RcrConfig::validate() const {
  if (d_hidden < 1) throw ConfigError("d_hidden must be >= 1");
  if (heads < 1 || d_hidden % heads != 0) throw ConfigError("d_hidden must be divisible by heads");
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
  if (public_depth < 0 || expert_depth < 0 || manager_depth < 0) throw ConfigError("encoder depths must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1]");
}

TokenBatch make_batch(const SequenceCache& cache, std::span<const int> nodes) {
  TokenBatch b;
  b.batch = static_cast<int>(nodes.size());
  b.seq_len = cache.seq_len();
  const int s = cache.seq_len(), d = cache.dim();
  b.tokens.resize(static_cast<Eigen::Index>(b.batch) * s, d);
  b.relation.reserve(b.tokens.rows());
  b.hop.reserve(b.tokens.rows());
  b.group.reserve(b.tokens.rows());
  for (int i = 0; i < b.batch; ++i) {
    const int row = cache.row_of(nodes[i]);
    const float* src = cache.row_tokens(row);
    const TokenMeta* meta = cache.row_meta(row);
    for (int t = 0; t < s; ++t) {
      for (int j = 0; j < d; ++j) b.tokens(i * s + t, j) = src[t * d + j];
      b.relation.push_back(meta[t].relation);
      b.hop.push_back(meta[t].hop);
      b.group.push_back(meta[t].group);
    }
  }
  return b;
}

TokenBatch make_batch(std::span<const TokenSequence> seqs) {
  TokenBatch b;
  b.batch = static_cast<int>(seqs.size());
  if (seqs.empty()) return b;
  b.seq_len = static_cast<int>(seqs[0].tokens.rows());
  const auto d = seqs[0].tokens.cols();
  b.tokens.resize(static_cast<Eigen::Index>(b.batch) * b.seq_len, d);
  for (int i = 0; i < b.batch; ++i) {
    if (seqs[i].tokens.rows() != b.seq_len || seqs[i].tokens.cols() != d) throw ShapeError("ragged sequence batch");
    b.tokens.middleRows(static_cast<Eigen::Index>(i) * b.seq_len, b.seq_len) = seqs[i].tokens.cast<double>();
    for (const auto& m : seqs[i].meta) {
      b.relation.push_back(m.relation);
      b.hop.push_back(m.hop);
      b.group.push_back(m.group);
    }
  }
  return b;
}

Encodings::Encodings(const HeadShape& shape, int d_hidden, std::mt19937_64& rng)
    : input_proj(shape.feature_dim, d_hidden, rng, "rcr.enc.input_proj") {
  std::normal_distribution<double> init(0.0, 0.1);
  auto table = [&](int rows, const std::string& name) {
    nn::Mat m(rows, d_hidden);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = init(rng);
    }
    return nn::Parameter(name, std::move(m));
  };
  relation_table = table(shape.num_relations, "rcr.enc.relation");
  hop_table = table(shape.hops + 1, "rcr.enc.hop");
  group_table = table(kNumGroups, "rcr.enc.group");
}

Var Encodings::forward(nn::Tape& tape, const TokenBatch& batch) {
  auto check = [](const std::vector<int>& ids, const nn::Parameter& table, const char* what) {
    for (int id : ids) {
      if (id < 0 || id >= table.value.rows()) {
        throw ShapeError(std::string(what) + " id " + std::to_string(id) + " outside the encoding table");
      }
    }
  };
  check(batch.relation, relation_table, "relation");
  check(batch.hop, hop_table, "hop");
  check(batch.group, group_table, "group");
  Var x = input_proj.forward(tape, tape.constant(batch.tokens));
  x = ag::add(x, ag::gather_rows(tape.param(relation_table), batch.relation));
  x = ag::add(x, ag::gather_rows(tape.param(hop_table), batch.hop));
  return ag::add(x, ag::gather_rows(tape.param(group_table), batch.group));
}

void Encodings::collect(nn::ParamList& out) {
  input_proj.collect(out);
  out.push_back(&relation_table);
  out.push_back(&hop_table);
  out.push_back(&group_table);
}

MoeHead::MoeHead(const HeadShape& shape, const RcrConfig& config, bool single_expert, uint64_t seed)
    : shape_(shape), config_(config) {
  config.validate();
  if (shape.num_relations < 1 || shape.hops < 1 || shape.feature_dim < 1) throw ConfigError("invalid head shape");
  std::mt19937_64 rng(seed);
  const int dh = config.d_hidden, ff = config.ffn_mult * dh;
  enc_ = Encodings(shape, dh, rng);
  public_ = nn::EncoderStack(config.public_depth, dh, config.heads, ff, config.dropout, rng, "rcr.public");

  std::vector<int> all(shape.num_relations);
  for (int r = 0; r < shape.num_relations; ++r) all[r] = r;
  if (!single_expert) {
    for (int r = 0; r < shape.num_relations; ++r) relation_sets_.push_back({r});
  }
  relation_sets_.push_back(all);

  const int n_e = static_cast<int>(relation_sets_.size());
  experts_.reserve(n_e);
  for (int i = 0; i < n_e; ++i) {
    const std::string name = "rcr.expert" + std::to_string(i);
    Block b;
    b.encoder = nn::EncoderStack(config.expert_depth, dh, config.heads, ff, config.dropout, rng, name + ".enc");
    b.classifier = nn::Mlp({2 * dh, dh, kNumClasses}, nn::Activation::kRelu, config.dropout, rng, name + ".mlp");
    experts_.push_back(std::move(b));
  }
  has_manager_ = n_e > 1;
  if (has_manager_) {
    manager_.encoder = nn::EncoderStack(config.manager_depth, dh, config.heads, ff, config.dropout, rng, "rcr.manager.enc");
    manager_.classifier = nn::Mlp({2 * dh, dh, n_e}, nn::Activation::kRelu, config.dropout, rng, "rcr.manager.mlp");
  }
}

nn::ParamList MoeHead::parameters() {
  nn::ParamList out;
  enc_.collect(out);
  public_.collect(out);
  for (auto& e : experts_) {
    e.encoder.collect(out);
    e.classifier.collect(out);
  }
  if (has_manager_) {
    manager_.encoder.collect(out);
    manager_.classifier.collect(out);
  }
  return out;
}

Var MoeHead::encode_input(nn::Tape& tape, const TokenBatch& batch) {
  if (batch.tokens.cols() != shape_.feature_dim) throw ShapeError("token width does not match the head");
  return enc_.forward(tape, batch);
}

Var MoeHead::public_encode(nn::Tape& tape, const Var& x_in, int seq_len, bool training, std::mt19937_64& rng) {
  return public_.forward(tape, x_in, seq_len, training, rng);
}

std::shared_ptr<const ag::SpMat> MoeHead::mean_selector(int batch, int seq_len, int offset) {
  auto key = std::make_tuple(batch, seq_len, offset);
  if (auto it = selector_cache_.find(key); it != selector_cache_.end()) return it->second;
  const int R = shape_.num_relations;
  std::vector<Eigen::Triplet<double>> trip;
  for (int b = 0; b < batch; ++b) {
    for (int r = 0; r < R; ++r) trip.emplace_back(b, b * seq_len + relation_offset(r, shape_.hops) + offset, 1.0 / R);
  }
  auto m = std::make_shared<ag::SpMat>(batch, static_cast<Eigen::Index>(batch) * seq_len);
  m->setFromTriplets(trip.begin(), trip.end());
  selector_cache_[key] = m;
  return m;
}

// relation < 0 selects the across-relation mean of the target tokens.
Var MoeHead::aggregate(const Var& encoded, int relation, int batch, int seq_len) {
  if (relation < 0) {
    return ag::hcat(ag::spmm(mean_selector(batch, seq_len, 0), encoded),
                    ag::spmm(mean_selector(batch, seq_len, 1), encoded));
  }
  const int off = seq_len == sequence_length(shape_.num_relations, shape_.hops) ? relation_offset(relation, shape_.hops) : 0;
  std::vector<int> raw(batch), filt(batch);
  for (int b = 0; b < batch; ++b) {
    raw[b] = b * seq_len + off;
    filt[b] = raw[b] + 1;
  }
  return ag::hcat(ag::gather_rows(encoded, std::move(raw)), ag::gather_rows(encoded, std::move(filt)));
}

Var MoeHead::expert_repr(nn::Tape& tape, int i, const Var& h, int batch, bool training, std::mt19937_64& rng) {
  if (i < 0 || i >= num_experts()) throw ShapeError("expert index out of range");
  const int S = sequence_length(shape_.num_relations, shape_.hops);
  const bool global = relation_sets_[i].size() != 1 || (shape_.num_relations == 1 && i == num_experts() - 1);
  if (global) {
    Var enc = experts_[i].encoder.forward(tape, h, S, training, rng);
    return aggregate(enc, -1, batch, S);
  }
  const int r = relation_sets_[i][0];
  if (!config_.expert_slicing) {
    Var enc = experts_[i].encoder.forward(tape, h, S, training, rng);
    return aggregate(enc, r, batch, S);
  }
  const int L = S / shape_.num_relations, off = relation_offset(r, shape_.hops);
  std::vector<int> rows;
  rows.reserve(static_cast<size_t>(batch) * L);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < L; ++t) rows.push_back(b * S + off + t);
  }
  Var enc = experts_[i].encoder.forward(tape, ag::gather_rows(h, std::move(rows)), L, training, rng);
  return aggregate(enc, r, batch, L);
}

Var MoeHead::expert_logits(nn::Tape& tape, int i, const Var& h, int batch, bool training, std::mt19937_64& rng) {
  return experts_[i].classifier.forward(tape, expert_repr(tape, i, h, batch, training, rng), training, rng);
}

Var MoeHead::manager_logits(nn::Tape& tape, const Var& h, int batch, bool training, std::mt19937_64& rng) {
  if (!has_manager_) throw ConfigError("single-expert head has no manager");
  const int S = sequence_length(shape_.num_relations, shape_.hops);
  Var enc = manager_.encoder.forward(tape, h, S, training, rng);
  return manager_.classifier.forward(tape, aggregate(enc, -1, batch, S), training, rng);
}

HeadOutput MoeHead::forward(nn::Tape& tape, const TokenBatch& batch, bool training, std::mt19937_64& rng) {
  const int S = sequence_length(shape_.num_relations, shape_.hops);
  if (batch.seq_len != S) throw ShapeError("sequence length does not match the head");
  Var h = public_encode(tape, encode_input(tape, batch), S, training, rng);
  HeadOutput out;
  for (int i = 0; i < num_experts(); ++i) {
    out.expert_logits.push_back(expert_logits(tape, i, h, batch.batch, training, rng));
    out.expert_probs.push_back(ag::softmax_rows(out.expert_logits.back()));
  }
  if (has_manager_) {
    out.manager_logits = manager_logits(tape, h, batch.batch, training, rng);
    out.a_m = ag::softmax_rows(out.manager_logits);
  } else {
    out.a_m = tape.constant(Matrix::Ones(batch.batch, 1));
  }
  return out;
}

namespace {

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Vector softmax(const Vector& s) {
  Vector e = (s.array() - s.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Vector structure_scores(const MultiRelationGraph& graph, int v, const Matrix& x, const Matrix& x_filtered,
                        const std::vector<std::vector<int>>& relation_sets, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1]");
  Vector scores = Vector::Zero(static_cast<Eigen::Index>(relation_sets.size()));
  for (size_t i = 0; i < relation_sets.size(); ++i) {
    std::vector<int> nbrs;
    for (int r : relation_sets[i]) {
      if (r < 0 || r >= graph.num_relations()) throw ConfigError("relation set refers to a missing relation");
      auto n = graph.neighbors(r, v);
      nbrs.insert(nbrs.end(), n.begin(), n.end());
    }
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    if (nbrs.empty()) continue;
    double raw = 0.0, filt = 0.0;
    for (int u : nbrs) {
      raw += cosine(x.row(u), x.row(v));
      filt += cosine(x_filtered.row(u), x_filtered.row(v));
    }
    const double n = static_cast<double>(nbrs.size());
    scores[static_cast<Eigen::Index>(i)] = beta * raw / n + (1.0 - beta) * filt / n;
  }
  return scores;
}

Matrix structure_prior(const MultiRelationGraph& graph, const Matrix& x, const Matrix& x_filtered,
                       const std::vector<std::vector<int>>& relation_sets, double beta) {
  Matrix out(graph.num_nodes(), static_cast<Eigen::Index>(relation_sets.size()));
  for (int v = 0; v < graph.num_nodes(); ++v) {
    out.row(v) = softmax(structure_scores(graph, v, x, x_filtered, relation_sets, beta)).transpose();
  }
  return out;
}

Vector redistribute(const Vector& a_m, std::span<const int> masked) {
  const Eigen::Index n = a_m.size();
  std::vector<char> is_masked(n, 0);
  for (int i : masked) {
    if (i < 0 || i >= n) throw ShapeError("masked expert index out of range");
    is_masked[i] = 1;
  }
  const auto n_masked = std::count(is_masked.begin(), is_masked.end(), 1);
  if (n_masked == n) throw ConfigError("cannot mask every expert");
  double mass = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_masked[i]) mass += a_m[i];
  }
  Vector out(n);
  const double share = mass / static_cast<double>(n - n_masked);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = is_masked[i] ? 0.0 : a_m[i] + share;
  return out;
}

MaskDraw apply_mask(const Vector& a_m, double ratio, std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("masking ratio must lie in [0,1)");
  MaskDraw draw;
  const auto n = static_cast<int>(a_m.size());
  if (n > 1 && ratio > 0.0) {
    std::bernoulli_distribution coin(ratio);
    do {
      draw.masked.clear();
      for (int i = 0; i < n; ++i) {
        if (coin(rng)) draw.masked.push_back(i);
      }
    } while (static_cast<int>(draw.masked.size()) == n);
  }
  draw.a_masked = redistribute(a_m, draw.masked);
  return draw;
}

double loss_guidance(const Vector& a_g, const Vector& a_m) {
  if (a_g.size() != a_m.size()) throw ShapeError("guidance loss: length mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < a_g.size(); ++i) {
    if (a_g[i] > 0.0) kl += a_g[i] * (std::log(a_g[i]) - std::log(std::max(a_m[i], kLogClamp)));
  }
  return kl;
}

Vector predict(const Vector& a_m, const Matrix& expert_probs) {
  if (expert_probs.rows() != a_m.size()) throw ShapeError("predict: expert count mismatch");
  return expert_probs.transpose() * a_m;
}

double loss_regularized_mask(const Vector& a_m, const MaskDraw& mask, const Matrix& expert_probs) {
  const Vector q = predict(a_m, expert_probs);
  const Vector q_masked = predict(mask.a_masked, expert_probs);
  double kl = 0.0;
  for (Eigen::Index c = 0; c < q.size(); ++c) {
    kl += q[c] * (std::log(std::max(q[c], kLogClamp)) - std::log(std::max(q_masked[c], kLogClamp)));
  }
  return kl;
}

double loss_detection(const Vector& a_m, const Matrix& expert_probs, int y) {
  if (y != 0 && y != 1) throw ShapeError("detection loss: label must be 0 or 1");
  if (expert_probs.rows() != a_m.size()) throw ShapeError("detection loss: expert count mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < a_m.size(); ++i) loss -= a_m[i] * std::log(std::max(expert_probs(i, y), kLogClamp));
  return loss;
}

Var loss_guidance(const Matrix& a_g, const Var& manager_logits) {
  if (a_g.rows() != manager_logits.rows() || a_g.cols() != manager_logits.cols()) {
    throw ShapeError("guidance loss: prior shape mismatch");
  }
  const double b = static_cast<double>(a_g.rows());
  double neg_entropy = 0.0;
  for (Eigen::Index i = 0; i < a_g.size(); ++i) {
    const double p = a_g.data()[i];
    if (p > 0.0) neg_entropy += p * std::log(p);
  }
  nn::Tape& tape = *manager_logits.tape();
  Var cross = ag::scale(ag::sum_weighted(ag::log_softmax_rows(manager_logits), a_g), -1.0 / b);
  return ag::add(cross, tape.constant(Matrix::Constant(1, 1, neg_entropy / b)));
}

namespace {

Var mixture(const Var& weights, const std::vector<Var>& probs) {
  Var q = ag::mul_col(probs[0], ag::column(weights, 0));
  for (size_t i = 1; i < probs.size(); ++i) q = ag::add(q, ag::mul_col(probs[i], ag::column(weights, static_cast<int>(i))));
  return q;
}

}  // namespace

Var loss_regularized_mask(const Var& a_m, const Matrix& masked, const std::vector<Var>& expert_probs) {
  if (static_cast<Eigen::Index>(expert_probs.size()) != a_m.cols()) throw ShapeError("mask loss: expert count mismatch");
  const Var q = mixture(a_m, expert_probs);
  const Var q_masked = mixture(ag::mask_redistribute(a_m, masked), expert_probs);
  Var diff = ag::sub(ag::log_clamped(q, kLogClamp), ag::log_clamped(q_masked, kLogClamp));
  return ag::scale(ag::sum(ag::mul(q, diff)), 1.0 / static_cast<double>(a_m.rows()));
}

Var loss_detection(const Var& a_m, const std::vector<Var>& expert_logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(expert_logits.size()) != a_m.cols()) {
    throw ShapeError("detection loss: expert count mismatch");
  }
  if (static_cast<Eigen::Index>(labels.size()) != a_m.rows()) throw ShapeError("detection loss: label count mismatch");
  nn::Tape& tape = *a_m.tape();
  Matrix onehot = Matrix::Zero(a_m.rows(), kNumClasses);
  for (size_t b = 0; b < labels.size(); ++b) onehot(static_cast<Eigen::Index>(b), labels[b]) = 1.0;
  const Var target = tape.constant(std::move(onehot));
  Var total;
  for (size_t i = 0; i < expert_logits.size(); ++i) {
    Var log_py = ag::row_sum(ag::mul(ag::log_softmax_rows(expert_logits[i]), target));
    Var term = ag::sum(ag::mul(ag::column(a_m, static_cast<int>(i)), log_py));
    total = total.valid() ? ag::add(total, term) : term;
  }
  return ag::scale(total, -1.0 / static_cast<double>(a_m.rows()));
}

}  // namespace scfcrc
