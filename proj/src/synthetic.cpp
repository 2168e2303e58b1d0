#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scfcrc/error.hpp"
#include "scfcrc/graph.hpp"

namespace scfcrc {

void SyntheticConfig::validate() const {
  if (n_nodes < 4) throw ConfigError("synthetic n_nodes must be >= 4");
  if (n_relations < 1) throw ConfigError("synthetic n_relations must be >= 1");
  if (!(fraud_ratio >= 0.0 && fraud_ratio <= 1.0)) throw ConfigError("fraud_ratio must lie in [0,1]");
  if (!(camouflage_strength >= 0.0 && camouflage_strength <= 1.0)) {
    throw ConfigError("camouflage_strength must lie in [0,1]");
  }
  if (!(mean_degree >= 1.0)) throw ConfigError("mean_degree must be >= 1");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (static_cast<int>(homophily.size()) != n_relations) {
    throw ConfigError("homophily needs one entry per relation (" + std::to_string(n_relations) + ")");
  }
  for (double h : homophily) {
    if (!(h >= 0.0 && h <= 1.0)) throw ConfigError("homophily values must lie in [0,1]");
  }
}

Vector synthetic_fraud_mean(const SyntheticConfig& config) {
  std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
  std::bernoulli_distribution coin(0.5);
  Vector mu(config.feature_dim);
  for (int j = 0; j < config.feature_dim; ++j) mu[j] = coin(rng) ? config.class_separation : -config.class_separation;
  return mu;
}

MultiRelationGraph generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const int n = config.n_nodes;
  std::mt19937_64 rng(config.seed);

  const int n_fraud = static_cast<int>(std::lround(config.fraud_ratio * n));
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> labels(n, 0);
  for (int i = 0; i < n_fraud; ++i) labels[perm[i]] = 1;

  // Degree propensities, mean one.
  std::gamma_distribution<double> propensity(2.0, 0.5);
  std::vector<double> theta(n);
  for (auto& t : theta) t = propensity(rng);

  const Vector mu_f = synthetic_fraud_mean(config);
  const Vector fraud_center = (1.0 - config.camouflage_strength) * mu_f;
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix features(n, config.feature_dim);
  for (int v = 0; v < n; ++v) {
    for (int j = 0; j < config.feature_dim; ++j) {
      features(v, j) = noise(rng) + (labels[v] == 1 ? fraud_center[j] : 0.0);
    }
  }

  std::vector<std::vector<int>> members(kNumClasses);
  std::vector<std::vector<double>> member_weights(kNumClasses);
  for (int v = 0; v < n; ++v) {
    members[labels[v]].push_back(v);
    member_weights[labels[v]].push_back(theta[v]);
  }
  std::vector<std::discrete_distribution<int>> pick(kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    if (!members[c].empty()) pick[c] = std::discrete_distribution<int>(member_weights[c].begin(), member_weights[c].end());
  }

  std::vector<EdgeList> relations(config.n_relations);
  for (int r = 0; r < config.n_relations; ++r) {
    std::bernoulli_distribution same_class(config.homophily[r]);
    EdgeList& edges = relations[r];
    for (int u = 0; u < n; ++u) {
      std::poisson_distribution<int> count(theta[u] * config.mean_degree / 2.0);
      const int m = count(rng);
      for (int e = 0; e < m; ++e) {
        const int target = same_class(rng) ? labels[u] : 1 - labels[u];
        const auto& pool = members[target];
        if (pool.empty() || (pool.size() == 1 && pool[0] == u)) continue;
        int v = u;
        while (v == u) v = pool[pick[target](rng)];
        edges.emplace_back(u, v);
      }
    }
  }
  std::vector<std::string> names;
  for (int r = 0; r < config.n_relations; ++r) names.push_back("synthetic_" + std::to_string(r));
  return MultiRelationGraph(std::move(features), std::move(labels), relations, std::move(names));
}

}  // namespace scfcrc
