#include "scfcrc/label_prop.hpp"

#include <array>
#include <cmath>
#include <string>

#include "io_util.hpp"
#include "scfcrc/error.hpp"

namespace scfcrc {

namespace {

Matrix seed_matrix(const MultiRelationGraph& graph, std::span<const int> train) {
  Matrix y0 = Matrix::Zero(graph.num_nodes(), kNumClasses);
  for (int v : train) {
    int y = graph.labels()[v];
    if (y == kUnknownLabel) throw SplitError("train node " + std::to_string(v) + " has no label");
    y0(v, y) = 1.0;
  }
  return y0;
}

// out = alpha * S * in + (1 - alpha) * y0
void spread(const Csr& adj, const std::vector<double>& inv_sqrt_deg, const Matrix& in,
            const Matrix& y0, double alpha, Matrix& out) {
  const int n = adj.num_nodes();
  for (int v = 0; v < n; ++v) {
    double s0 = 0.0, s1 = 0.0;
    for (int u : adj.neighbors(v)) {
      const double w = inv_sqrt_deg[u];
      s0 += w * in(u, 0);
      s1 += w * in(u, 1);
    }
    out(v, 0) = alpha * inv_sqrt_deg[v] * s0 + (1.0 - alpha) * y0(v, 0);
    out(v, 1) = alpha * inv_sqrt_deg[v] * s1 + (1.0 - alpha) * y0(v, 1);
  }
}

std::vector<double> inverse_sqrt_degree(const Csr& adj) {
  std::vector<double> out(adj.num_nodes(), 0.0);
  for (int v = 0; v < adj.num_nodes(); ++v) {
    if (adj.degree(v) > 0) out[v] = 1.0 / std::sqrt(static_cast<double>(adj.degree(v)));
  }
  return out;
}

}  // namespace

PseudoLabels propagate_labels(const MultiRelationGraph& graph, std::span<const int> train,
                              const LabelPropConfig& config) {
  if (train.empty()) throw SplitError("label propagation needs a nonempty train set");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ConfigError("label propagation alpha must lie in (0,1)");
  const Matrix y0 = seed_matrix(graph, train);
  const Eigen::RowVector2d counts = y0.colwise().sum();
  if (counts[0] == 0 || counts[1] == 0) throw SplitError("train set must contain both classes");
  const Eigen::RowVector2d prior = counts / counts.sum();

  const Csr& adj = graph.union_relation();
  const auto inv_sqrt_deg = inverse_sqrt_degree(adj);
  const int n = graph.num_nodes();

  Matrix f = y0;
  Matrix next(n, kNumClasses);
  PseudoLabels out;
  for (int it = 0; it < config.max_iters; ++it) {
    spread(adj, inv_sqrt_deg, f, y0, config.alpha, next);
    const double change = (next - f).cwiseAbs().maxCoeff();
    f.swap(next);
    out.iterations = it + 1;
    if (change < config.tol) break;
  }
  out.raw = f;

  for (int v : train) {
    f.row(v).setZero();
    f(v, graph.labels()[v]) = 1.0;
  }
  out.dist.resize(n, kNumClasses);
  out.hard.assign(n, 0);
  out.reached.assign(n, 1);
  for (int v = 0; v < n; ++v) {
    const double mass = f(v, 0) + f(v, 1);
    if (mass > 0.0) {
      out.dist.row(v) = f.row(v) / mass;
    } else {
      out.dist.row(v) = prior;
      out.reached[v] = 0;
    }
    out.hard[v] = out.dist(v, 1) > out.dist(v, 0) ? 1 : 0;
  }
  return out;
}

double propagation_residual(const MultiRelationGraph& graph, std::span<const int> train,
                            const Matrix& scores, double alpha, std::span<const int> rows) {
  const Matrix y0 = seed_matrix(graph, train);
  const Csr& adj = graph.union_relation();
  Matrix next(graph.num_nodes(), kNumClasses);
  spread(adj, inverse_sqrt_degree(adj), scores, y0, alpha, next);
  double worst = 0.0;
  for (int v : rows) worst = std::max(worst, (next.row(v) - scores.row(v)).cwiseAbs().maxCoeff());
  return worst;
}

void write_pseudo_csv(const PseudoLabels& pseudo, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << "id,p0,p1,hard,reached\n";
  for (int v = 0; v < pseudo.dist.rows(); ++v) {
    out << v << ',' << io::format_double(pseudo.dist(v, 0)) << ',' << io::format_double(pseudo.dist(v, 1)) << ','
        << pseudo.hard[v] << ',' << (pseudo.reached[v] ? 1 : 0) << "\n";
  }
}

PseudoLabels read_pseudo_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("missing pseudo-label file " + path.string());
  auto in = io::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,p0,p1,hard,reached", 0) != 0) {
    throw ParseError(path.string() + ": bad header");
  }
  std::vector<std::array<double, 2>> rows;
  PseudoLabels out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = io::split(line, ',');
    long long id = 0, hard = 0, reached = 0;
    double p0 = 0, p1 = 0;
    if (cells.size() != 5 || !io::parse_int(cells[0], id) || !io::parse_double(cells[1], p0) ||
        !io::parse_double(cells[2], p1) || !io::parse_int(cells[3], hard) || !io::parse_int(cells[4], reached) ||
        id != static_cast<long long>(rows.size())) {
      throw ParseError(path.string() + ": malformed row " + std::to_string(rows.size()));
    }
    rows.push_back({p0, p1});
    out.hard.push_back(static_cast<int>(hard));
    out.reached.push_back(static_cast<char>(reached != 0));
  }
  out.dist.resize(static_cast<Eigen::Index>(rows.size()), kNumClasses);
  for (size_t i = 0; i < rows.size(); ++i) {
    out.dist(i, 0) = rows[i][0];
    out.dist(i, 1) = rows[i][1];
  }
  out.raw = out.dist;
  return out;
}

}  // namespace scfcrc
