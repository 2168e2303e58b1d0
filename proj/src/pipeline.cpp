#include "scfcrc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "io_util.hpp"
#include "scfcrc/config.hpp"
#include "scfcrc/error.hpp"

namespace scfcrc {

namespace {

using nlohmann::json;

enum Stream : uint64_t { kSplit = 1, kFilter, kHead, kShuffle, kDropout, kMask };

json metrics_json(const Metrics& m) { return json{{"auc", m.auc}, {"ap", m.ap}, {"f1_macro", m.f1_macro}}; }

std::string stage1_signature(const TrainConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["split"] = {c.split.train, c.split.val, c.split.test};
  j["lp"] = {c.label_prop.alpha, c.label_prop.max_iters, c.label_prop.tol};
  j["no_fcf"] = c.ablation.no_fcf;
  const json full = json::parse(config_to_json(c));
  j["fcf"] = full["fcf"];
  j["fcf"]["lambda1"] = c.ablation.no_ic ? 0.0 : c.fcf.lambda1;
  j["fcf"]["lambda2"] = c.ablation.no_pc ? 0.0 : c.fcf.lambda2;
  return j.dump();
}

std::vector<double> resolved_fixed_prior(const TrainConfig& c, int num_relations, int n_e) {
  std::vector<double> v = c.ablation.fixed_ag->empty() ? default_fixed_prior(num_relations) : *c.ablation.fixed_ag;
  if (static_cast<int>(v.size()) != n_e) {
    throw ConfigError("fixed_ag has " + std::to_string(v.size()) + " entries, the head has " + std::to_string(n_e) +
                      " experts");
  }
  return v;
}

struct Forwarded {
  Matrix a_m;
  std::vector<Matrix> probs;
};

Forwarded forward_eval(TrainedModels& m, std::span<const int> nodes, int batch_size) {
  Forwarded out;
  const int n_e = m.head->num_experts();
  const auto n = static_cast<Eigen::Index>(nodes.size());
  out.a_m.resize(n, n_e);
  out.probs.assign(n_e, Matrix(n, kNumClasses));
  std::mt19937_64 unused(0);
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
    auto chunk = nodes.subspan(static_cast<size_t>(start), static_cast<size_t>(len));
    nn::Tape tape;
    HeadOutput h = m.head->forward(tape, make_batch(m.sequences, chunk), false, unused);
    out.a_m.middleRows(start, len) = h.a_m.value();
    for (int i = 0; i < n_e; ++i) out.probs[i].middleRows(start, len) = h.expert_probs[i].value();
  }
  return out;
}

}  // namespace

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int worker_count_from_env() {
  const char* env = std::getenv("SCFCRC_NUM_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  long long n = 0;
  if (!io::parse_int(env, n) || n < 1) throw ConfigError("SCFCRC_NUM_WORKERS must be a positive integer");
  return static_cast<int>(std::min<long long>(n, 256));
}

std::vector<double> default_fixed_prior(int num_relations) {
  std::vector<double> v(num_relations, 0.6 / num_relations);
  v.push_back(0.4);
  return v;
}

Ablation parse_ablation(const std::string& name, int num_relations) {
  Ablation a;
  if (name == "full" || name == "none") return a;
  if (name == "no_fcf") a.no_fcf = true;
  else if (name == "no_rcr") a.no_rcr = true;
  else if (name == "no_ic") a.no_ic = true;
  else if (name == "no_pc") a.no_pc = true;
  else if (name == "no_lg") a.no_lg = true;
  else if (name == "no_lrm") a.no_lrm = true;
  else if (name == "fixed_ag") a.fixed_ag = num_relations > 0 ? default_fixed_prior(num_relations) : std::vector<double>{};
  else throw ConfigError("unknown ablation '" + name + "'");
  return a;
}

void TrainConfig::validate() const {
  fcf.validate();
  rcr.validate();
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0,1]");
  if (!(masking_ratio >= 0.0 && masking_ratio <= 0.5)) throw ConfigError("masking_ratio must lie in [0,0.5]");
  if (hops < 1 || hops > 4) throw ConfigError("hops must lie in [1,4]");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1 || eval_batch_size < 1) throw ConfigError("batch sizes must be >= 1");
  if (!(learning_rate > 0.0) || weight_decay < 0.0) throw ConfigError("invalid optimizer settings");
  if (lambda3 < 0.0 || lambda4 < 0.0) throw ConfigError("lambda3/lambda4 must be >= 0");
  if (!(label_prop.alpha > 0.0 && label_prop.alpha < 1.0)) throw ConfigError("lp_alpha must lie in (0,1)");
  if (ablation.fixed_ag && !ablation.fixed_ag->empty()) {
    double s = 0.0;
    for (double p : *ablation.fixed_ag) {
      if (p < 0.0) throw ConfigError("fixed_ag entries must be >= 0");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("fixed_ag must sum to 1");
  }
}

std::string RunReport::loss_trace() const {
  json j;
  j["stage1"] = json::array();
  for (const auto& e : stage1) j["stage1"].push_back({e.l_gnn, e.l_ic, e.l_pc, e.l1});
  j["stage2"] = json::array();
  for (const auto& e : stage2) j["stage2"].push_back({e.l_d, e.l_g, e.l_rm, e.l2});
  return j.dump();
}

std::string RunReport::to_json() const {
  json j;
  j["seed"] = seed;
  j["config"] = json::parse(config_json.empty() ? "{}" : config_json);
  j["wall_clock"] = wall_clock;
  j["lp_iterations"] = lp_iterations;
  j["pc_skipped"] = pc_skipped;
  j["stage1"] = json::array();
  for (size_t i = 0; i < stage1.size(); ++i) {
    const auto& e = stage1[i];
    j["stage1"].push_back({{"epoch", i}, {"l_gnn", e.l_gnn}, {"l_ic", e.l_ic}, {"l_pc", e.l_pc}, {"l1", e.l1}});
  }
  j["stage2"] = json::array();
  for (size_t i = 0; i < stage2.size(); ++i) {
    const auto& e = stage2[i];
    j["stage2"].push_back({{"epoch", i},
                           {"l_d", e.l_d},
                           {"l_g", e.l_g},
                           {"l_rm", e.l_rm},
                           {"l2", e.l2},
                           {"rm_active", e.rm_active},
                           {"val", metrics_json(e.val)}});
  }
  j["best_epoch"] = best_epoch;
  j["test"] = metrics_json(test);
  j["experts"] = json::array();
  for (size_t i = 0; i < experts.size(); ++i) {
    json e = metrics_json(experts[i]);
    e["index"] = i;
    j["experts"].push_back(e);
  }
  return j.dump(2);
}

Stage1Result run_stage1(const MultiRelationGraph& graph, const TrainConfig& config) {
  config.validate();
  Stage1Result s;
  s.signature = stage1_signature(config);
  s.split = split_nodes(graph, config.split, derive_seed(config.seed, kSplit));
  const int n = graph.num_nodes();
  if (config.ablation.no_fcf) {
    s.pseudo.dist = Matrix::Constant(n, kNumClasses, 0.5);
    s.pseudo.raw = s.pseudo.dist;
    s.pseudo.hard.assign(n, 0);
    s.pseudo.reached.assign(n, 0);
    s.filtered = Matrix::Zero(n, graph.feature_dim());
    return s;
  }
  s.pseudo = propagate_labels(graph, s.split.train, config.label_prop);
  FcfConfig fcf = config.fcf;
  if (config.ablation.no_ic) fcf.lambda1 = 0.0;
  if (config.ablation.no_pc) fcf.lambda2 = 0.0;
  FcfResult r = train_fcf(graph, s.pseudo, fcf, derive_seed(config.seed, kFilter));
  s.filter = std::move(r.model);
  s.filtered = std::move(r.filtered);
  s.epochs = std::move(r.epochs);
  s.pc_skipped = r.pc_skipped;
  return s;
}

Stage1Result restore_stage1(const MultiRelationGraph& graph, const TrainConfig& config,
                            std::shared_ptr<FilterModel> filter) {
  TrainConfig skip = config;
  skip.ablation.no_fcf = true;
  Stage1Result s = run_stage1(graph, skip);
  s.signature = stage1_signature(config);
  if (config.ablation.no_fcf) return s;
  if (!filter) throw ConfigError("a filter model is required unless no_fcf is set");
  s.pseudo = propagate_labels(graph, s.split.train, config.label_prop);
  s.filtered = filter_features(*filter, graph.features());
  s.filter = std::move(filter);
  return s;
}

TrainedModels assemble_models(const MultiRelationGraph& graph, const TrainConfig& config, Stage1Result stage1,
                              std::unique_ptr<MoeHead> head) {
  TrainedModels m;
  m.config = config;
  m.split = std::move(stage1.split);
  m.pseudo = std::move(stage1.pseudo);
  m.filter = std::move(stage1.filter);
  m.filtered = std::move(stage1.filtered);
  m.head = std::move(head);

  std::vector<int> visible;
  if (config.label_hygiene) {
    visible = visible_labels(graph, m.split.train);
  } else {
    visible = graph.labels();
  }
  const LgaContext ctx{graph, graph.features(), m.filtered, visible, m.pseudo.hard, config.hops, config.hop_mode};
  std::vector<int> all(graph.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  m.sequences = precompute_sequences(ctx, all, worker_count_from_env());

  const int n_e = m.head->num_experts();
  if (config.ablation.fixed_ag && !config.ablation.no_rcr) {
    const auto v = resolved_fixed_prior(config, graph.num_relations(), n_e);
    m.prior = Eigen::Map<const Eigen::RowVectorXd>(v.data(), n_e).replicate(graph.num_nodes(), 1);
  } else {
    m.prior = structure_prior(graph, graph.features(), m.filtered, m.head->relation_sets(), config.rcr.beta);
  }
  return m;
}

Evaluation evaluate(TrainedModels& models, const MultiRelationGraph& graph, std::span<const int> nodes) {
  if (nodes.empty()) throw ShapeError("evaluation node set is empty");
  std::vector<int> labels;
  for (int v : nodes) {
    if (v < 0 || v >= graph.num_nodes()) throw ShapeError("evaluation node out of range");
    if (graph.labels()[v] == kUnknownLabel) throw ShapeError("evaluation node " + std::to_string(v) + " is unlabeled");
    labels.push_back(graph.labels()[v]);
  }
  Forwarded f = forward_eval(models, nodes, models.config.eval_batch_size);
  Evaluation ev;
  ev.scores.resize(nodes.size());
  for (size_t b = 0; b < nodes.size(); ++b) {
    Matrix probs(f.probs.size(), kNumClasses);
    for (size_t i = 0; i < f.probs.size(); ++i) probs.row(static_cast<Eigen::Index>(i)) = f.probs[i].row(b);
    ev.scores[b] = predict(f.a_m.row(b).transpose(), probs)[1];
  }
  ev.overall = score_metrics(ev.scores, labels);
  for (const auto& p : f.probs) {
    std::vector<double> s(p.col(1).data(), p.col(1).data() + p.rows());
    ev.experts.push_back(score_metrics(s, labels));
  }
  ev.expert_probs = std::move(f.probs);
  return ev;
}

TrainResult train(const MultiRelationGraph& graph, const TrainConfig& config, const Stage1Result* stage1,
                  const CheckpointHook& on_best) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  if (config.ablation.fixed_ag && config.ablation.no_rcr) throw ConfigError("fixed_ag needs the expert mixture");

  Stage1Result s1;
  if (stage1 != nullptr) {
    if (stage1->signature != stage1_signature(config)) throw ConfigError("precomputed stage 1 does not match the config");
    s1.split = stage1->split;
    s1.pseudo = stage1->pseudo;
    s1.filter = stage1->filter;
    s1.filtered = stage1->filtered;
    s1.epochs = stage1->epochs;
    s1.pc_skipped = stage1->pc_skipped;
    s1.signature = stage1->signature;
  } else {
    s1 = run_stage1(graph, config);
  }

  TrainResult result;
  RunReport& report = result.report;
  report.seed = config.seed;
  report.config_json = config_to_json(config);
  report.stage1 = s1.epochs;
  report.pc_skipped = s1.pc_skipped;
  report.lp_iterations = s1.pseudo.iterations;

  const HeadShape shape{graph.num_relations(), config.hops, graph.feature_dim()};
  auto head = std::make_unique<MoeHead>(shape, config.rcr, config.ablation.no_rcr, derive_seed(config.seed, kHead));
  result.models = assemble_models(graph, config, std::move(s1), std::move(head));
  TrainedModels& m = result.models;
  MoeHead& h = *m.head;
  const int n_e = h.num_experts();
  const bool mixture = n_e > 1;
  const bool use_lrm = mixture && !config.ablation.no_lrm && config.masking_ratio > 0.0;
  const double lambda3 = config.ablation.no_lg ? 0.0 : config.lambda3;

  nn::ParamList params = h.parameters();
  nn::Adam opt(params, config.learning_rate, config.weight_decay);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffle));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, kDropout));
  std::mt19937_64 mask_rng(derive_seed(config.seed, kMask));

  std::vector<int> order = m.split.train;
  std::vector<Matrix> best = nn::snapshot(params);
  double best_auc = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const bool rm_active = use_lrm && static_cast<double>(epoch) / config.epochs >= config.delta;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.rm_active = rm_active;
    int steps = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::span<const int> nodes(order.data() + start, end - start);
      std::vector<int> labels;
      Matrix prior(static_cast<Eigen::Index>(nodes.size()), n_e);
      for (size_t b = 0; b < nodes.size(); ++b) {
        labels.push_back(graph.labels()[nodes[b]]);
        prior.row(static_cast<Eigen::Index>(b)) = m.prior.row(nodes[b]);
      }
      nn::Tape tape;
      HeadOutput out = h.forward(tape, make_batch(m.sequences, nodes), true, dropout_rng);
      nn::Var l_d = loss_detection(out.a_m, out.expert_logits, labels);
      nn::Var total = l_d;
      double l_g = 0.0, l_rm = 0.0;
      if (mixture) {
        nn::Var g = loss_guidance(prior, out.manager_logits);
        l_g = g.scalar();
        if (lambda3 != 0.0) total = ag::add(total, ag::scale(g, lambda3));
      }
      if (rm_active) {
        Matrix masked = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), n_e);
        for (size_t b = 0; b < nodes.size(); ++b) {
          const Vector a = out.a_m.value().row(static_cast<Eigen::Index>(b)).transpose();
          for (int i : apply_mask(a, config.masking_ratio, mask_rng).masked) masked(static_cast<Eigen::Index>(b), i) = 1.0;
        }
        nn::Var rm = loss_regularized_mask(out.a_m, masked, out.expert_probs);
        l_rm = rm.scalar();
        if (config.lambda4 != 0.0) total = ag::add(total, ag::scale(rm, config.lambda4));
      }
      if (!std::isfinite(total.scalar())) {
        nn::restore(params, best);
        std::ostringstream msg;
        msg << "head training diverged at epoch " << epoch << " step " << steps << ": L_D=" << l_d.scalar()
            << " L_G=" << l_g << " L_RM=" << l_rm;
        throw TrainingAborted(msg.str());
      }
      opt.zero_grad();
      tape.backward(total);
      opt.step();
      rec.l_d += l_d.scalar();
      rec.l_g += l_g;
      rec.l_rm += l_rm;
      rec.l2 += total.scalar();
      ++steps;
    }
    if (steps > 0) {
      rec.l_d /= steps;
      rec.l_g /= steps;
      rec.l_rm /= steps;
      rec.l2 /= steps;
    }
    rec.val = evaluate(m, graph, m.split.val).overall;
    report.stage2.push_back(rec);
    if (rec.val.auc > best_auc) {
      best_auc = rec.val.auc;
      report.best_epoch = epoch;
      best = nn::snapshot(params);
      if (on_best) on_best(m);
    }
  }
  nn::restore(params, best);
  Evaluation test = evaluate(m, graph, m.split.test);
  report.test = test.overall;
  report.experts = test.experts;
  report.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace scfcrc
