#include <gtest/gtest.h>

#include "scfcrc/error.hpp"
#include "scfcrc/label_prop.hpp"
#include "test_util.hpp"

using namespace scfcrc;

namespace {

// Closed form of the propagation fixed point: (I - alpha S) F = (1 - alpha) Y0.
Matrix dense_fixed_point(const MultiRelationGraph& g, const std::vector<int>& train, double alpha) {
  const int n = g.num_nodes();
  const Csr& adj = g.union_relation();
  Matrix s = Matrix::Zero(n, n);
  for (int v = 0; v < n; ++v) {
    for (int u : adj.neighbors(v)) s(v, u) = 1.0 / std::sqrt(static_cast<double>(adj.degree(v) * adj.degree(u)));
  }
  Matrix y0 = Matrix::Zero(n, 2);
  for (int v : train) y0(v, g.labels()[v]) = 1.0;
  return (Matrix::Identity(n, n) - alpha * s).partialPivLu().solve((1 - alpha) * y0);
}

}  // namespace

TEST(LabelProp, MatchesClosedFormFixedPoint) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = testutil::random_graph(40, 2, 0.08, 2, rng);
    const auto split = split_nodes(g, {}, trial);
    const auto p = propagate_labels(g, split.train, {});
    const Matrix exact = dense_fixed_point(g, split.train, 0.9);
    EXPECT_LT((p.raw - exact).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(LabelProp, ResidualAndClamping) {
  std::mt19937_64 rng(4);
  const auto g = testutil::random_graph(120, 3, 0.03, 2, rng);
  const auto split = split_nodes(g, {}, 1);
  const auto p = propagate_labels(g, split.train, {});
  std::vector<int> all(g.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_LT(propagation_residual(g, split.train, p.raw, 0.9, all), 1e-5);
  for (int v : split.train) {
    EXPECT_EQ(p.dist(v, g.labels()[v]), 1.0);
    EXPECT_EQ(p.dist(v, 1 - g.labels()[v]), 0.0);
    EXPECT_EQ(p.hard[v], g.labels()[v]);
  }
  for (int v = 0; v < g.num_nodes(); ++v) {
    EXPECT_NEAR(p.dist.row(v).sum(), 1.0, 1e-12);
    EXPECT_EQ(p.hard[v], p.dist(v, 1) > p.dist(v, 0) ? 1 : 0);
  }
}

TEST(LabelProp, UnreachableNodesGetTheTrainPrior) {
  // Node 4 is isolated and unlabeled in training.
  Matrix x = Matrix::Zero(5, 1);
  MultiRelationGraph g(x, {0, 0, 1, 0, 1}, {{{0, 1}, {1, 2}, {2, 3}}});
  const std::vector<int> train{0, 2, 3};
  const auto p = propagate_labels(g, train, {});
  EXPECT_FALSE(p.reached[4]);
  EXPECT_NEAR(p.dist(4, 0), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(p.hard[4], 0);
  EXPECT_TRUE(p.reached[1]);
}

TEST(LabelProp, Errors) {
  Matrix x = Matrix::Zero(3, 1);
  MultiRelationGraph g(x, {0, 1, kUnknownLabel}, {{{0, 1}}});
  EXPECT_THROW(propagate_labels(g, std::vector<int>{}, {}), SplitError);
  EXPECT_THROW(propagate_labels(g, std::vector<int>{0}, {}), SplitError);
  EXPECT_THROW(propagate_labels(g, std::vector<int>{0, 2}, {}), SplitError);
  EXPECT_THROW(propagate_labels(g, std::vector<int>{0, 1}, {1.5, 10, 1e-6}), ConfigError);
}

TEST(LabelProp, CsvRoundTrip) {
  std::mt19937_64 rng(9);
  const auto g = testutil::random_graph(25, 1, 0.2, 1, rng);
  const auto split = split_nodes(g, {}, 0);
  const auto p = propagate_labels(g, split.train, {});
  testutil::TempDir dir("pseudo");
  write_pseudo_csv(p, dir / "pseudo.csv");
  const auto q = read_pseudo_csv(dir / "pseudo.csv");
  EXPECT_EQ(q.dist, p.dist);
  EXPECT_EQ(q.hard, p.hard);
  EXPECT_EQ(q.reached, p.reached);
  EXPECT_THROW(read_pseudo_csv(dir / "absent.csv"), LoadError);
}
