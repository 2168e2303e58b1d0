#include "scfcrc/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "io_util.hpp"
#include "scfcrc/checkpoint.hpp"
#include "scfcrc/config.hpp"
#include "scfcrc/error.hpp"
#include "scfcrc/pipeline.hpp"

namespace scfcrc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kFilterKind = "fcf";
constexpr const char* kHeadKind = "rcr";

std::string profile_table() {
  std::ostringstream out;
  out << "Profiles (train/prep --profile):\n";
  out << "  name       d_hidden heads batch masking public_depth epochs fcf_epochs\n";
  for (const char* name : {"yelpchi", "amazon", "synthetic"}) {
    const TrainConfig c = profile_config(name);
    out << "  " << std::left << std::setw(10) << name << " " << std::setw(8) << c.rcr.d_hidden << " " << std::setw(5)
        << c.rcr.heads << " " << std::setw(5) << c.batch_size << " " << std::setw(7) << c.masking_ratio << " "
        << std::setw(12) << c.rcr.public_depth << " " << std::setw(6) << c.epochs << " " << c.fcf.epochs << "\n";
  }
  const TrainConfig d;
  out << "Shared defaults: lambda1=" << d.fcf.lambda1 << " lambda2=" << d.fcf.lambda2 << " lambda3=" << d.lambda3
      << " lambda4=" << d.lambda4 << " beta=" << d.rcr.beta << " delta=" << d.delta << " hops=" << d.hops
      << " lr=" << d.learning_rate << " weight_decay=" << d.weight_decay << " dropout=" << d.rcr.dropout
      << " split=" << d.split.train << "/" << d.split.val << "/" << d.split.test << "\n";
  return out.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw LoadError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = io::open_out(path);
  out << text;
  if (!out) throw LoadError("failed writing " + path.string());
}

std::string metrics_line(const Metrics& m) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "AUC=" << m.auc << " AP=" << m.ap << " F1=" << m.f1_macro;
  return s.str();
}

json metrics_json(const Metrics& m) { return json{{"auc", m.auc}, {"ap", m.ap}, {"f1_macro", m.f1_macro}}; }

TrainConfig base_config(const std::string& config_path, const std::string& profile) {
  return config_path.empty() ? profile_config(profile) : load_config(config_path);
}

fs::path resolve_data(const std::string& flag, const TrainConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.data_path.empty()) return config.data_path;
  throw ConfigError("no dataset given: pass --data or set [data] path");
}

void write_filter_checkpoint(const fs::path& path, const TrainConfig& config, FilterModel* filter) {
  nn::ParamList params;
  if (filter != nullptr) params = filter->parameters();
  write_checkpoint(path, kFilterKind, config_to_json(config), params);
}

void write_head_checkpoint(const fs::path& path, const TrainConfig& config, MoeHead& head) {
  write_checkpoint(path, kHeadKind, config_to_json(config), head.parameters());
}

std::shared_ptr<FilterModel> load_filter(const fs::path& path, const TrainConfig& config, int feature_dim) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.kind != kFilterKind) throw ParseError(path.string() + ": not a filter checkpoint");
  if (config.ablation.no_fcf) return nullptr;
  const TrainConfig saved = config_from_json(ckpt.config);
  auto filter = std::make_shared<FilterModel>(feature_dim, saved.fcf, 0);
  load_parameters(ckpt, filter->parameters());
  return filter;
}

struct LoadedModel {
  TrainConfig config;
  TrainedModels models;
};

LoadedModel load_model(const fs::path& dir, const std::string& data_flag, std::unique_ptr<MultiRelationGraph>& graph) {
  if (!fs::is_directory(dir)) throw LoadError("missing model directory " + dir.string());
  const Checkpoint head_ckpt = read_checkpoint(dir / "rcr.ckpt");
  if (head_ckpt.kind != kHeadKind) throw ParseError((dir / "rcr.ckpt").string() + ": not a head checkpoint");
  LoadedModel out;
  out.config = config_from_json(head_ckpt.config);
  graph = std::make_unique<MultiRelationGraph>(load_dataset(resolve_data(data_flag, out.config)));
  auto filter = load_filter(dir / "fcf.ckpt", out.config, graph->feature_dim());
  Stage1Result s1 = restore_stage1(*graph, out.config, filter);
  const HeadShape shape{graph->num_relations(), out.config.hops, graph->feature_dim()};
  auto head = std::make_unique<MoeHead>(shape, out.config.rcr, out.config.ablation.no_rcr, 0);
  load_parameters(head_ckpt, head->parameters());
  out.models = assemble_models(*graph, out.config, std::move(s1), std::move(head));
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto part : io::split(text, ',')) {
    std::string s(part);
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

// ---- commands ----

struct PrepArgs {
  std::string data, out, config, profile = "synthetic";
  int hops = 2;
  double alpha = 0.9;
  uint64_t seed = 0;
};

int cmd_prep(const PrepArgs& a, std::ostream& out) {
  TrainConfig config = base_config(a.config, a.profile);
  config.hops = a.hops;
  config.label_prop.alpha = a.alpha;
  config.seed = a.seed;
  config.data_path = a.data;
  config.validate();
  const MultiRelationGraph graph = load_dataset(a.data);
  const fs::path dir = a.out;
  ensure_dir(dir);

  Stage1Result s1 = run_stage1(graph, config);
  write_pseudo_csv(s1.pseudo, dir / "pseudo.csv");
  write_filter_checkpoint(dir / "fcf.ckpt", config, s1.filter.get());
  write_matrix_cache(s1.filtered, dir / "filtered.bin");

  const std::vector<int> visible =
      config.label_hygiene ? visible_labels(graph, s1.split.train) : graph.labels();
  const LgaContext ctx{graph, graph.features(), s1.filtered, visible, s1.pseudo.hard, config.hops, config.hop_mode};
  std::vector<int> all(graph.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  const SequenceCache cache = precompute_sequences(ctx, all, worker_count_from_env());
  write_sequence_cache(cache, dir / "sequences.bin");

  json meta{{"seed", config.seed},
            {"hops", config.hops},
            {"alpha", config.label_prop.alpha},
            {"split", {{"train", config.split.train}, {"val", config.split.val}, {"test", config.split.test}}},
            {"counts", {{"train", s1.split.train.size()}, {"val", s1.split.val.size()}, {"test", s1.split.test.size()}}},
            {"lp_iterations", s1.pseudo.iterations},
            {"sequence_length", cache.seq_len()},
            {"nodes", cache.size()}};
  write_text(dir / "prep.json", meta.dump(2) + "\n");
  out << "prepared " << cache.size() << " sequences of " << cache.seq_len() << " tokens in " << dir.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, profile = "synthetic", data, out, ablation = "full";
  uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig config = base_config(a.config, a.profile);
  config.seed = a.seed;
  if (!a.data.empty()) config.data_path = a.data;
  if (a.ablation != "full") {
    const Ablation one = parse_ablation(a.ablation, 0);
    config.ablation.no_fcf |= one.no_fcf;
    config.ablation.no_rcr |= one.no_rcr;
    config.ablation.no_ic |= one.no_ic;
    config.ablation.no_pc |= one.no_pc;
    config.ablation.no_lg |= one.no_lg;
    config.ablation.no_lrm |= one.no_lrm;
    if (one.fixed_ag && !config.ablation.fixed_ag) config.ablation.fixed_ag = one.fixed_ag;
  }
  config.validate();
  const MultiRelationGraph graph = load_dataset(resolve_data(a.data, config));
  const fs::path dir = a.out;
  ensure_dir(dir);

  bool filter_saved = false;
  auto on_best = [&](TrainedModels& m) {
    if (!filter_saved) {
      write_filter_checkpoint(dir / "fcf.ckpt", config, m.filter.get());
      filter_saved = true;
    }
    write_head_checkpoint(dir / "rcr.ckpt", config, *m.head);
  };
  try {
    TrainResult r = train(graph, config, nullptr, on_best);
    write_text(dir / "report.json", r.report.to_json() + "\n");
    out << metrics_line(r.report.test) << "\n";
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << "\n";
    if (filter_saved) err << "last good checkpoint kept in " << dir.string() << "\n";
    return kExitAbort;
  }
  return kExitOk;
}

struct EvalArgs {
  std::string model, data, split = "test";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::unique_ptr<MultiRelationGraph> graph;
  LoadedModel lm = load_model(a.model, a.data, graph);
  const SplitMasks& s = lm.models.split;
  const std::vector<int>* nodes = nullptr;
  if (a.split == "test") nodes = &s.test;
  else if (a.split == "val") nodes = &s.val;
  else if (a.split == "train") nodes = &s.train;
  else throw ConfigError("--split must be train, val or test");
  const Evaluation ev = evaluate(lm.models, *graph, *nodes);

  json j = metrics_json(ev.overall);
  j["split"] = a.split;
  j["n"] = nodes->size();
  j["experts"] = json::array();
  for (size_t i = 0; i < ev.experts.size(); ++i) {
    json e = metrics_json(ev.experts[i]);
    e["index"] = i;
    j["experts"].push_back(e);
  }
  write_text(fs::path(a.model) / "metrics.json", j.dump(2) + "\n");
  out << metrics_line(ev.overall) << "\n";
  return kExitOk;
}

struct SynthArgs {
  int nodes = 2000, relations = 3, dim = 16;
  double ir = 6.0, camouflage = 0.8, degree = 10.0, separation = 1.0;
  std::string homophily = "0.9,0.3,0.6", out;
  uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (!(a.ir > 0.0)) throw ConfigError("--ir must be > 0");
  SyntheticConfig c;
  c.n_nodes = a.nodes;
  c.n_relations = a.relations;
  c.fraud_ratio = 1.0 / (1.0 + a.ir);
  c.homophily.clear();
  for (const auto& h : split_list(a.homophily)) {
    double v = 0;
    if (!io::parse_double(h, v)) throw ConfigError("--homophily: cannot parse '" + h + "'");
    c.homophily.push_back(v);
  }
  c.camouflage_strength = a.camouflage;
  c.mean_degree = a.degree;
  c.seed = a.seed;
  c.feature_dim = a.dim;
  c.class_separation = a.separation;
  c.validate();
  const MultiRelationGraph g = generate_synthetic(c);
  write_dataset(g, a.out);
  const auto fraud = std::count(g.labels().begin(), g.labels().end(), 1);
  out << "wrote " << g.num_nodes() << " nodes (" << fraud << " fraud), " << g.num_relations() << " relations to "
      << a.out << "\n";
  return kExitOk;
}

struct ExportArgs {
  std::string model, data, which = "filtered", out;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const fs::path dir = a.model;
  if (!fs::is_directory(dir)) throw LoadError("missing model directory " + dir.string());
  const Checkpoint ckpt = read_checkpoint(dir / "fcf.ckpt");
  const TrainConfig config = config_from_json(ckpt.config);
  const MultiRelationGraph graph = load_dataset(resolve_data(a.data, config));
  Matrix m;
  if (a.which == "raw") {
    m = graph.features();
  } else if (a.which == "filtered") {
    auto filter = load_filter(dir / "fcf.ckpt", config, graph.feature_dim());
    m = filter ? filter_features(*filter, graph.features()) : Matrix::Zero(graph.num_nodes(), graph.feature_dim());
  } else {
    throw ConfigError("--which must be raw or filtered");
  }
  auto file = io::open_out(a.out);
  file << "id";
  for (int j = 0; j < m.cols(); ++j) file << ",f" << j;
  file << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    file << i;
    for (int j = 0; j < m.cols(); ++j) file << ',' << io::format_double(m(i, j));
    file << "\n";
  }
  if (!file) throw LoadError("failed writing " + a.out);
  out << "exported " << m.rows() << " x " << m.cols() << " " << a.which << " features to " << a.out << "\n";
  return kExitOk;
}

struct AblateArgs {
  std::string config, profile = "synthetic", data, out, seeds = "0,1,2,3,4",
                                 variants = "full,no_fcf,no_rcr,no_ic,no_pc,no_lg,no_lrm,fixed_ag";
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const TrainConfig base = base_config(a.config, a.profile);
  const MultiRelationGraph graph = load_dataset(resolve_data(a.data, base));
  std::vector<uint64_t> seeds;
  for (const auto& s : split_list(a.seeds)) {
    long long v = 0;
    if (!io::parse_int(s, v) || v < 0) throw ConfigError("--seeds: cannot parse '" + s + "'");
    seeds.push_back(static_cast<uint64_t>(v));
  }
  const auto variants = split_list(a.variants);
  std::map<std::string, std::vector<Metrics>> results;
  for (uint64_t seed : seeds) {
    std::map<std::string, Stage1Result> stage1;
    for (const auto& name : variants) {
      TrainConfig c = base;
      c.seed = seed;
      c.ablation = parse_ablation(name, graph.num_relations());
      c.validate();
      const std::string key = std::string(c.ablation.no_fcf ? "nofcf" : "") + (c.ablation.no_ic ? "noic" : "") +
                              (c.ablation.no_pc ? "nopc" : "");
      if (!stage1.count(key)) stage1.emplace(key, run_stage1(graph, c));
      const TrainResult r = train(graph, c, &stage1.at(key));
      results[name].push_back(r.report.test);
      out << "seed " << seed << " " << std::left << std::setw(9) << name << " " << metrics_line(r.report.test) << "\n";
    }
  }
  json summary = json::object();
  for (const auto& name : variants) {
    const auto& rs = results[name];
    Metrics mean;
    for (const auto& m : rs) {
      mean.auc += m.auc / rs.size();
      mean.ap += m.ap / rs.size();
      mean.f1_macro += m.f1_macro / rs.size();
    }
    json runs = json::array();
    for (const auto& m : rs) runs.push_back(metrics_json(m));
    summary[name] = {{"mean", metrics_json(mean)}, {"runs", runs}};
    out << "mean " << std::left << std::setw(9) << name << " " << metrics_line(mean) << "\n";
  }
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "ablation.json", summary.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Camouflage-robust fraud detection on multi-relation graphs"};
  app.require_subcommand(1);
  app.footer(profile_table());

  PrepArgs prep;
  auto* p = app.add_subcommand("prep", "Label propagation, filter training and sequence caches");
  p->add_option("--data", prep.data, "Dataset directory")->required();
  p->add_option("--out", prep.out, "Output directory")->required();
  p->add_option("--hops", prep.hops, "Aggregation hops K")->capture_default_str();
  p->add_option("--alpha", prep.alpha, "Label propagation alpha")->capture_default_str();
  p->add_option("--config", prep.config, "Config file (overrides --profile)");
  p->add_option("--profile", prep.profile, "Built-in profile")->capture_default_str();
  p->add_option("--seed", prep.seed, "Random seed")->capture_default_str();
  p->footer(profile_table());

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Two-stage training; writes fcf.ckpt, rcr.ckpt and report.json");
  t->add_option("--config", tr.config, "Config file (overrides --profile)");
  t->add_option("--profile", tr.profile, "Built-in profile")->capture_default_str();
  t->add_option("--data", tr.data, "Dataset directory (overrides [data] path)");
  t->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--ablation", tr.ablation, "full, no_fcf, no_rcr, no_ic, no_pc, no_lg, no_lrm or fixed_ag")
      ->capture_default_str();
  t->footer(profile_table());

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a trained model; writes metrics.json into the model directory");
  e->add_option("--model", ev.model, "Model directory")->required();
  e->add_option("--data", ev.data, "Dataset directory (defaults to the one used in training)");
  e->add_option("--split", ev.split, "train, val or test")->capture_default_str();

  SynthArgs sy;
  auto* s = app.add_subcommand("synth", "Generate a synthetic camouflage graph");
  s->add_option("--nodes", sy.nodes, "Node count")->capture_default_str();
  s->add_option("--relations", sy.relations, "Relation count")->capture_default_str();
  s->add_option("--ir", sy.ir, "Benign:fraud imbalance ratio")->capture_default_str();
  s->add_option("--homophily", sy.homophily, "Per-relation homophily list")->capture_default_str();
  s->add_option("--camouflage", sy.camouflage, "Feature camouflage strength in [0,1]")->capture_default_str();
  s->add_option("--degree", sy.degree, "Mean degree per relation")->capture_default_str();
  s->add_option("--dim", sy.dim, "Feature dimension")->capture_default_str();
  s->add_option("--separation", sy.separation, "Per-dimension class mean offset")->capture_default_str();
  s->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
  s->add_option("--out", sy.out, "Output dataset directory")->required();

  ExportArgs ex;
  auto* x = app.add_subcommand("export-embed", "Export raw or filtered features as CSV");
  x->add_option("--model", ex.model, "Model directory")->required();
  x->add_option("--data", ex.data, "Dataset directory (defaults to the one used in training)");
  x->add_option("--which", ex.which, "raw or filtered")->capture_default_str();
  x->add_option("--out", ex.out, "Output CSV file")->required();

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Train every ablation variant over several seeds");
  b->add_option("--config", ab.config, "Config file (overrides --profile)");
  b->add_option("--profile", ab.profile, "Built-in profile")->capture_default_str();
  b->add_option("--data", ab.data, "Dataset directory (overrides [data] path)");
  b->add_option("--seeds", ab.seeds, "Comma-separated seeds")->capture_default_str();
  b->add_option("--variants", ab.variants, "Comma-separated ablation names")->capture_default_str();
  b->add_option("--out", ab.out, "Directory for ablation.json");
  b->footer(profile_table());

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (p->parsed()) return cmd_prep(prep, out);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (e->parsed()) return cmd_eval(ev, out);
    if (s->parsed()) return cmd_synth(sy, out);
    if (x->parsed()) return cmd_export(ex, out);
    if (b->parsed()) return cmd_ablate(ab, out);
  } catch (const TrainingAborted& ta) {
    err << "training aborted: " << ta.what() << "\n";
    return kExitAbort;
  } catch (const Error& er) {
    err << "error: " << er.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace scfcrc
