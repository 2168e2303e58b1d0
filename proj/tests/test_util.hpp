#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "scfcrc/autograd.hpp"
#include "scfcrc/graph.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("scfcrc_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline scfcrc::Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  scfcrc::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

// Random undirected graph: each pair joined with probability p in each relation.
inline scfcrc::MultiRelationGraph random_graph(int n, int relations, double p, int dim, std::mt19937_64& rng,
                                               double labeled = 1.0) {
  std::bernoulli_distribution edge(p), has_label(labeled), fraud(0.3);
  std::vector<scfcrc::EdgeList> rels(relations);
  for (int r = 0; r < relations; ++r) {
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (edge(rng)) rels[r].emplace_back(u, v);
      }
    }
  }
  std::vector<int> labels(n);
  for (int v = 0; v < n; ++v) labels[v] = has_label(rng) ? (fraud(rng) ? 1 : 0) : scfcrc::kUnknownLabel;
  return scfcrc::MultiRelationGraph(random_matrix(n, dim, rng), labels, rels);
}

// Relative error ||a - n|| / max(||a||, ||n||, 1e-8) between the analytic
// gradient of `loss` w.r.t. params and a central finite difference.
inline double gradient_error(const std::vector<scfcrc::ag::Parameter*>& params,
                             const std::function<scfcrc::ag::Var(scfcrc::ag::Tape&)>& loss, double h = 1e-6) {
  using scfcrc::ag::Tape;
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  double diff = 0, na = 0, nn = 0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      Tape t1;
      const double up = loss(t1).scalar();
      p->value.data()[i] = orig - h;
      Tape t2;
      const double down = loss(t2).scalar();
      p->value.data()[i] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = p->grad.data()[i];
      diff += (ana - num) * (ana - num);
      na += ana * ana;
      nn += num * num;
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

}  // namespace testutil
