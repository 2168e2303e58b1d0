#include "scfcrc/fcf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "scfcrc/error.hpp"

namespace scfcrc {

using ag::Var;

void FcfConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("fcf tau must be > 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("fcf lambda1/lambda2 must be >= 0");
  if (gnn_layers < 1) throw ConfigError("fcf gnn_layers must be >= 1");
  if (epochs < 0) throw ConfigError("fcf epochs must be >= 0");
  if (batch_size < 2) throw ConfigError("fcf batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("fcf learning_rate must be > 0");
  for (int h : hidden) {
    if (h < 0) throw ConfigError("fcf hidden sizes must be >= 0");
  }
}

FilterModel::FilterModel(int feature_dim, const FcfConfig& config, uint64_t seed) : feature_dim_(feature_dim) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<int> sizes{feature_dim};
  for (int h : config.hidden) sizes.push_back(h == 0 ? feature_dim : h);
  sizes.push_back(feature_dim);
  mlp_ = nn::Mlp(sizes, config.activation, 0.0, rng, "fcf.mlp");
  for (int l = 0; l < config.gnn_layers; ++l) {
    gnn_.emplace_back(feature_dim, feature_dim, rng, "fcf.gnn" + std::to_string(l), false);
  }
  head_ = nn::Linear(feature_dim, kNumClasses, rng, "fcf.head");
}

nn::ParamList FilterModel::parameters() {
  nn::ParamList out;
  mlp_.collect(out);
  for (auto& l : gnn_) l.collect(out);
  head_.collect(out);
  return out;
}

Var FilterModel::filter(nn::Tape& tape, const Var& x) {
  static thread_local std::mt19937_64 unused_rng(0);
  return mlp_.forward(tape, x, false, unused_rng);
}

Var FilterModel::gnn(nn::Tape& tape, std::shared_ptr<const ag::SpMat> mean_agg, const Var& x_filtered) {
  Var h = x_filtered;
  for (auto& layer : gnn_) {
    Var agg = ag::spmm(mean_agg, h);
    h = ag::relu(layer.forward(tape, ag::add(h, agg)));
  }
  return h;
}

Var FilterModel::head(nn::Tape& tape, const Var& z) { return head_.forward(tape, z); }

std::shared_ptr<const ag::SpMat> mean_aggregator(const Csr& adj) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int v = 0; v < adj.num_nodes(); ++v) {
    const int deg = adj.degree(v);
    for (int u : adj.neighbors(v)) trip.emplace_back(v, u, 1.0 / deg);
  }
  auto m = std::make_shared<ag::SpMat>(adj.num_nodes(), adj.num_nodes());
  m->setFromTriplets(trip.begin(), trip.end());
  return m;
}

Matrix filter_features(FilterModel& model, const Matrix& x) {
  if (x.cols() != model.feature_dim()) {
    throw ShapeError("filter expects " + std::to_string(model.feature_dim()) + " feature columns, got " +
                     std::to_string(x.cols()));
  }
  if (!x.allFinite()) throw ShapeError("filter input contains non-finite values");
  nn::Tape tape;
  return model.filter(tape, tape.constant(x)).value();
}

Matrix gnn_forward(const MultiRelationGraph& graph, const Matrix& x_filtered, FilterModel& model) {
  if (x_filtered.rows() != graph.num_nodes() || x_filtered.cols() != model.feature_dim()) {
    throw ShapeError("gnn_forward: filtered matrix shape mismatch");
  }
  nn::Tape tape;
  return model.gnn(tape, mean_aggregator(graph.union_relation()), tape.constant(x_filtered)).value();
}

Var loss_cross_entropy(const Var& logits, std::span<const int> labels) {
  if (labels.empty()) throw ShapeError("cross-entropy over an empty node set");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) throw ShapeError("cross-entropy: label count mismatch");
  Matrix w = Matrix::Zero(logits.rows(), logits.cols());
  for (size_t i = 0; i < labels.size(); ++i) w(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return ag::scale(ag::sum_weighted(ag::log_softmax_rows(logits), std::move(w)), -1.0 / static_cast<double>(labels.size()));
}

Var loss_gnn(nn::Tape& tape, FilterModel& model, const Var& z, std::span<const int> hard, std::span<const int> nodes) {
  if (nodes.empty()) throw ShapeError("loss_gnn: empty node set");
  std::vector<int> idx(nodes.begin(), nodes.end());
  std::vector<int> targets;
  targets.reserve(idx.size());
  for (int v : idx) targets.push_back(hard[v]);
  Var logits = model.head(tape, ag::gather_rows(z, std::move(idx)));
  return loss_cross_entropy(logits, targets);
}

Var loss_instance_contrastive(const Var& x_batch, std::span<const int> labels, double tau, bool exclude_self) {
  if (!(tau > 0.0)) throw ConfigError("contrastive temperature must be > 0");
  const Eigen::Index b = x_batch.rows();
  if (static_cast<Eigen::Index>(labels.size()) != b) throw ShapeError("instance contrastive: label count mismatch");
  Var xn = ag::normalize_rows(x_batch);
  Var sim = ag::scale(ag::matmul_nt(xn, xn), 1.0 / tau);
  if (exclude_self) {
    Matrix diag = Matrix::Zero(b, b);
    diag.diagonal().setConstant(-1e30);
    sim = ag::add(sim, x_batch.tape()->constant(std::move(diag)));
  }
  Matrix pos = Matrix::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      if (i != j && labels[i] == labels[j]) pos(i, j) = 1.0;
    }
  }
  return ag::scale(ag::sum_weighted(ag::log_softmax_rows(sim), std::move(pos)), -1.0 / static_cast<double>(b));
}

Var loss_prototype_contrastive(const Var& x_filtered_batch, const Matrix& x_batch, std::span<const int> labels,
                               double tau, int* skipped) {
  if (!(tau > 0.0)) throw ConfigError("contrastive temperature must be > 0");
  const Eigen::Index b = x_filtered_batch.rows();
  if (static_cast<Eigen::Index>(labels.size()) != b || x_batch.rows() != b) {
    throw ShapeError("prototype contrastive: batch size mismatch");
  }
  if (x_batch.cols() != x_filtered_batch.cols()) throw ShapeError("prototype contrastive: feature width mismatch");
  nn::Tape& tape = *x_filtered_batch.tape();
  Matrix protos = Matrix::Zero(kNumClasses, x_batch.cols());
  std::array<int, kNumClasses> counts{};
  for (Eigen::Index i = 0; i < b; ++i) {
    protos.row(labels[i]) += x_batch.row(i);
    ++counts[labels[i]];
  }
  if (counts[0] == 0 || counts[1] == 0) {
    if (skipped != nullptr) ++*skipped;
    return tape.constant(Matrix::Zero(1, 1));
  }
  for (int c = 0; c < kNumClasses; ++c) protos.row(c) /= counts[c];
  Var pn = ag::normalize_rows(tape.constant(std::move(protos)));
  Var sim = ag::scale(ag::matmul_nt(ag::normalize_rows(x_filtered_batch), pn), 1.0 / tau);
  Matrix w = Matrix::Zero(b, kNumClasses);
  for (Eigen::Index i = 0; i < b; ++i) w(i, labels[i]) = 1.0;
  return ag::scale(ag::sum_weighted(ag::log_softmax_rows(sim), std::move(w)), -1.0 / static_cast<double>(b));
}

FcfResult train_fcf(const MultiRelationGraph& graph, const PseudoLabels& pseudo, const FcfConfig& config,
                    uint64_t seed) {
  config.validate();
  const int n = graph.num_nodes();
  if (static_cast<int>(pseudo.hard.size()) != n) throw ShapeError("pseudo-labels do not cover the graph");
  FcfResult result;
  result.model = std::make_unique<FilterModel>(graph.feature_dim(), config, seed);
  FilterModel& model = *result.model;
  const auto agg = mean_aggregator(graph.union_relation());
  const Matrix& x = graph.features();
  nn::ParamList params = model.parameters();
  nn::Adam opt(params, config.learning_rate, config.weight_decay);
  std::mt19937_64 rng(seed ^ 0xfcf0fcf0ULL);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    FcfEpoch acc;
    int steps = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      if (end - start < 2) continue;
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      std::vector<int> labels;
      Matrix xb(static_cast<Eigen::Index>(batch.size()), x.cols());
      for (size_t i = 0; i < batch.size(); ++i) {
        labels.push_back(pseudo.hard[batch[i]]);
        xb.row(static_cast<Eigen::Index>(i)) = x.row(batch[i]);
      }
      nn::Tape tape;
      Var xf = model.filter(tape, tape.constant(x));
      Var z = model.gnn(tape, agg, xf);
      Var l_gnn = loss_gnn(tape, model, z, pseudo.hard, batch);
      Var xfb = ag::gather_rows(xf, batch);
      Var l_ic = loss_instance_contrastive(xfb, labels, config.tau, config.exclude_self);
      Var l_pc = loss_prototype_contrastive(xfb, xb, labels, config.tau, &result.pc_skipped);
      Var objective = l_gnn;
      if (config.lambda1 != 0.0) objective = ag::add(objective, ag::scale(l_ic, config.lambda1));
      if (config.lambda2 != 0.0) objective = ag::add(objective, ag::scale(l_pc, config.lambda2));
      if (!std::isfinite(objective.scalar())) {
        std::ostringstream msg;
        msg << "filter training diverged at epoch " << epoch << " step " << steps << ": L_GNN=" << l_gnn.scalar()
            << " L_IC=" << l_ic.scalar() << " L_PC=" << l_pc.scalar();
        throw TrainingAborted(msg.str());
      }
      opt.zero_grad();
      tape.backward(objective);
      opt.step();
      FcfStep s{l_gnn.scalar(), l_ic.scalar(), l_pc.scalar(), objective.scalar()};
      result.steps.push_back(s);
      acc.l_gnn += s.l_gnn;
      acc.l_ic += s.l_ic;
      acc.l_pc += s.l_pc;
      acc.l1 += s.objective;
      ++steps;
    }
    if (steps > 0) {
      acc.l_gnn /= steps;
      acc.l_ic /= steps;
      acc.l_pc /= steps;
      acc.l1 /= steps;
    }
    result.epochs.push_back(acc);
  }
  result.filtered = filter_features(model, x);
  return result;
}

double separability_ratio(const Matrix& x, std::span<const int> labels) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd norms = x.rowwise().norm().cwiseMax(1e-12);
  Matrix xn = x.array().colwise() / norms.array();
  Matrix sim = xn * xn.transpose();
  double inter = 0, intra = 0;
  int64_t n_inter = 0, n_intra = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] == kUnknownLabel) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[j] == kUnknownLabel) continue;
      const double dist = 1.0 - sim(i, j);
      if (labels[i] == labels[j]) {
        intra += dist;
        ++n_intra;
      } else {
        inter += dist;
        ++n_inter;
      }
    }
  }
  if (n_inter == 0 || n_intra == 0 || intra <= 0.0) return 0.0;
  return (inter / n_inter) / (intra / n_intra);
}

}  // namespace scfcrc
