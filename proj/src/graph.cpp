#include "scfcrc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "io_util.hpp"
#include "json.hpp"
#include "scfcrc/error.hpp"

namespace scfcrc {

namespace fs = std::filesystem;

Csr::Csr(int num_nodes, const EdgeList& edges) {
  std::vector<std::vector<int>> lists(num_nodes);
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw StructuralError("edge endpoint out of range: (" + std::to_string(u) + ", " +
                            std::to_string(v) + ") with N=" + std::to_string(num_nodes));
    }
    if (u == v) continue;
    lists[u].push_back(v);
    lists[v].push_back(u);
  }
  offsets_.assign(num_nodes + 1, 0);
  for (int v = 0; v < num_nodes; ++v) {
    auto& l = lists[v];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    offsets_[v + 1] = offsets_[v] + static_cast<int64_t>(l.size());
  }
  targets_.reserve(offsets_.back());
  for (auto& l : lists) targets_.insert(targets_.end(), l.begin(), l.end());
}

MultiRelationGraph::MultiRelationGraph(Matrix features, std::vector<int> labels,
                                       const std::vector<EdgeList>& relations,
                                       std::vector<std::string> relation_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      relation_names_(std::move(relation_names)) {
  const int n = static_cast<int>(labels_.size());
  if (n < 1) throw StructuralError("graph needs at least one node");
  if (relations.empty()) throw StructuralError("graph needs at least one relation");
  if (features_.rows() != n) {
    throw ShapeError("feature rows " + std::to_string(features_.rows()) + " != N " +
                     std::to_string(n));
  }
  if (features_.cols() < 1) throw ShapeError("feature dimension must be positive");
  for (int i = 0; i < n; ++i) {
    if (!features_.row(i).allFinite()) {
      throw ParseError("non-finite feature in row " + std::to_string(i));
    }
    int y = labels_[i];
    if (y != 0 && y != 1 && y != kUnknownLabel) {
      throw ParseError("invalid label " + std::to_string(y) + " for node " + std::to_string(i));
    }
  }
  EdgeList all;
  relations_.reserve(relations.size());
  for (const auto& rel : relations) {
    relations_.emplace_back(n, rel);
    all.insert(all.end(), rel.begin(), rel.end());
  }
  union_ = Csr(n, all);
  if (relation_names_.empty()) {
    for (size_t r = 0; r < relations.size(); ++r) relation_names_.push_back("rel_" + std::to_string(r));
  }
  if (relation_names_.size() != relations.size()) {
    throw StructuralError("relation_names has " + std::to_string(relation_names_.size()) +
                          " entries for " + std::to_string(relations.size()) + " relations");
  }
}

EdgeList MultiRelationGraph::edges(int r) const {
  EdgeList out;
  const Csr& csr = relations_.at(r);
  for (int u = 0; u < num_nodes(); ++u) {
    for (int v : csr.neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

SplitMasks split_nodes(const MultiRelationGraph& graph, SplitRatios ratios, uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw SplitError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw SplitError("split ratios must sum to 1");
  }
  std::mt19937_64 rng(seed);
  SplitMasks masks;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<int> ids;
    for (int v = 0; v < graph.num_nodes(); ++v) {
      if (graph.labels()[v] == c) ids.push_back(v);
    }
    const int n = static_cast<int>(ids.size());
    if (n < 3) {
      throw SplitError("class " + std::to_string(c) + " has " + std::to_string(n) +
                       " labeled nodes, fewer than the 3 splits");
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    int n_train = std::max(1, static_cast<int>(std::lround(ratios.train * n)));
    int n_val = std::max(1, static_cast<int>(std::lround(ratios.val * n)));
    n_train = std::min(n_train, n - 2);
    n_val = std::min(n_val, n - n_train - 1);
    masks.train.insert(masks.train.end(), ids.begin(), ids.begin() + n_train);
    masks.val.insert(masks.val.end(), ids.begin() + n_train, ids.begin() + n_train + n_val);
    masks.test.insert(masks.test.end(), ids.begin() + n_train + n_val, ids.end());
  }
  std::sort(masks.train.begin(), masks.train.end());
  std::sort(masks.val.begin(), masks.val.end());
  std::sort(masks.test.begin(), masks.test.end());
  return masks;
}

std::vector<int> visible_labels(const MultiRelationGraph& graph, std::span<const int> visible) {
  std::vector<int> out(graph.num_nodes(), kUnknownLabel);
  for (int v : visible) out[v] = graph.labels()[v];
  return out;
}

namespace {

std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  std::string s = pos == std::string::npos ? line : line.substr(0, pos);
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  return s;
}

EdgeList read_edges(const fs::path& path, int n) {
  if (!fs::exists(path)) throw LoadError("missing edge file " + path.string());
  auto in = io::open_in(path);
  EdgeList edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = strip_comment(line);
    std::istringstream ss(s);
    std::string a, b, extra;
    if (!(ss >> a)) continue;
    long long u = 0, v = 0;
    if (!(ss >> b) || (ss >> extra) || !io::parse_int(a, u) || !io::parse_int(b, v)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected two integers");
    }
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw StructuralError(path.string() + ":" + std::to_string(line_no) + ": endpoint out of range [0, " +
                            std::to_string(n) + ")");
    }
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  return edges;
}

}  // namespace

MultiRelationGraph load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) throw LoadError("missing meta file " + meta_path.string());
  nlohmann::json meta;
  try {
    auto in = io::open_in(meta_path);
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  int n = 0, num_rel = 0, d = 0;
  std::vector<std::string> names;
  try {
    n = meta.at("num_nodes").get<int>();
    num_rel = meta.at("num_relations").get<int>();
    d = meta.at("feature_dim").get<int>();
    if (meta.contains("relation_names")) names = meta.at("relation_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  if (n < 1 || num_rel < 1 || d < 1) {
    throw ParseError(meta_path.string() + ": num_nodes, num_relations and feature_dim must be positive");
  }

  const fs::path nodes_path = dir / "nodes.csv";
  if (!fs::exists(nodes_path)) throw LoadError("missing nodes file " + nodes_path.string());
  auto in = io::open_in(nodes_path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(nodes_path.string() + ": empty file");
  {
    const std::string header_line = strip_comment(line);
    auto header = io::split(header_line, ',');
    if (static_cast<int>(header.size()) != d + 2 || header[0] != "id" || header[1] != "label") {
      throw ParseError(nodes_path.string() + ": header must be id,label,f0..f" + std::to_string(d - 1));
    }
  }
  Matrix features(n, d);
  std::vector<int> labels(n, kUnknownLabel);
  std::vector<char> seen(n, 0);
  int row = 0;
  while (std::getline(in, line)) {
    std::string s = strip_comment(line);
    if (s.empty()) continue;
    auto cells = io::split(s, ',');
    const std::string where = nodes_path.string() + " row " + std::to_string(row);
    if (static_cast<int>(cells.size()) != d + 2) throw ParseError(where + ": expected " + std::to_string(d + 2) + " columns");
    long long id = 0, label = 0;
    if (!io::parse_int(cells[0], id) || id < 0 || id >= n) throw ParseError(where + ": bad node id");
    if (seen[id]) throw ParseError(where + ": duplicate node id " + std::to_string(id));
    if (!io::parse_int(cells[1], label) || (label != 0 && label != 1 && label != -1)) {
      throw ParseError(where + ": label must be 0, 1 or -1");
    }
    seen[id] = 1;
    labels[id] = static_cast<int>(label);
    for (int j = 0; j < d; ++j) {
      double x = 0;
      if (!io::parse_double(cells[j + 2], x) || !std::isfinite(x)) {
        throw ParseError(where + ": non-finite feature in row " + std::to_string(row) + " column f" + std::to_string(j));
      }
      features(id, j) = x;
    }
    ++row;
  }
  if (row != n) throw ParseError(nodes_path.string() + ": expected " + std::to_string(n) + " rows, got " + std::to_string(row));

  std::vector<EdgeList> relations;
  for (int r = 0; r < num_rel; ++r) {
    relations.push_back(read_edges(dir / ("rel_" + std::to_string(r) + ".edges"), n));
  }
  if (names.empty()) {
    for (int r = 0; r < num_rel; ++r) names.push_back("rel_" + std::to_string(r));
  }
  if (static_cast<int>(names.size()) != num_rel) {
    throw ParseError(meta_path.string() + ": relation_names length differs from num_relations");
  }
  return MultiRelationGraph(std::move(features), std::move(labels), relations, std::move(names));
}

void write_dataset(const MultiRelationGraph& graph, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json meta = {{"num_nodes", graph.num_nodes()},
                         {"num_relations", graph.num_relations()},
                         {"feature_dim", graph.feature_dim()},
                         {"relation_names", graph.relation_names()}};
  {
    auto out = io::open_out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  {
    auto out = io::open_out(dir / "nodes.csv");
    out << "id,label";
    for (int j = 0; j < graph.feature_dim(); ++j) out << ",f" << j;
    out << "\n";
    for (int v = 0; v < graph.num_nodes(); ++v) {
      out << v << ',' << graph.labels()[v];
      for (int j = 0; j < graph.feature_dim(); ++j) out << ',' << io::format_double(graph.features()(v, j));
      out << "\n";
    }
  }
  for (int r = 0; r < graph.num_relations(); ++r) {
    auto out = io::open_out(dir / ("rel_" + std::to_string(r) + ".edges"));
    out << "# " << graph.relation_names()[r] << "\n";
    for (auto [u, v] : graph.edges(r)) out << u << ' ' << v << "\n";
  }
}

double measured_homophily(const MultiRelationGraph& graph, int r) {
  int64_t same = 0, total = 0;
  const auto& y = graph.labels();
  for (auto [u, v] : graph.edges(r)) {
    if (y[u] == kUnknownLabel || y[v] == kUnknownLabel) continue;
    ++total;
    if (y[u] == y[v]) ++same;
  }
  return total == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(total);
}

}  // namespace scfcrc
