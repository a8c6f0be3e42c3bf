#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "seqnovel/core.hpp"
#include "seqnovel/distance.hpp"
#include "seqnovel/rng.hpp"

namespace seqnovel {

/// LOF score returned when a test point with positive density sits next to a
/// zero-diameter (infinite-density) neighborhood.
inline constexpr double kLofInfiniteDensityScore = 1e12;

namespace detail {

inline int default_neighbor_count(std::size_t n, int lower_clamp,
                                  std::size_t upper_clamp) {
  const auto tenth = static_cast<long long>(
      std::llround(0.1 * static_cast<double>(n)));
  const long long k = std::max<long long>(tenth, lower_clamp);
  return static_cast<int>(
      std::min<long long>(k, static_cast<long long>(upper_clamp)));
}

inline int clamp_neighbor_count(std::optional<int> k, std::size_t n,
                                int lower_clamp, std::size_t upper_clamp,
                                const char* who) {
  if (k) {
    if (*k <= 0) {
      throw std::invalid_argument(std::string(who) + ": k must be positive");
    }
    return static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(*k), upper_clamp));
  }
  return default_neighbor_count(n, lower_clamp, upper_clamp);
}

/// Indices of the k nearest entries of `dist`, ties broken by index so
/// neighbor sets are deterministic.
inline std::vector<std::size_t> k_nearest(std::span<const double> dist,
                                          std::size_t k,
                                          std::optional<std::size_t> skip = {}) {
  std::vector<std::size_t> idx;
  idx.reserve(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (skip && i == *skip) continue;
    idx.push_back(i);
  }
  const auto cmp = [&dist](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), cmp);
  idx.resize(k);
  return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// k-nearest-neighbor outlier scoring: score(x) = distance to the k-th
// nearest training sample.
// ---------------------------------------------------------------------------

struct KnnModel {
  std::vector<Sequence> train;
  MetricKind kind = MetricKind::kLcs;
  int k = 1;
  // Built at fit time; scoring only measures distances to `train`, so the
  // matrix is the fit-phase cost and memory footprint of this detector.
  DistanceMatrix train_matrix;
};

/// k defaults to min(n, max(round(0.1 n), 20)).
inline KnnModel knn_fit(std::span<const Sequence> train, MetricKind kind,
                        std::optional<int> k = {}, unsigned threads = 1) {
  if (train.empty()) throw std::invalid_argument("knn_fit: empty training set");
  KnnModel model;
  model.kind = kind;
  model.k = detail::clamp_neighbor_count(k, train.size(), 20, train.size(),
                                         "knn_fit");
  model.train.assign(train.begin(), train.end());
  model.train_matrix = pairwise_matrix(kind, train, threads);
  return model;
}

inline double knn_score(const KnnModel& model, const Sequence& x) {
  std::vector<double> d(model.train.size());
  for (std::size_t i = 0; i < model.train.size(); ++i) {
    d[i] = normalized_distance(model.kind, x, model.train[i]);
  }
  const auto kth = d.begin() + (model.k - 1);
  std::nth_element(d.begin(), kth, d.end());
  return *kth;
}

// ---------------------------------------------------------------------------
// Local outlier factor over precomputed training distances.
// ---------------------------------------------------------------------------

struct LofModel {
  std::vector<Sequence> train;
  MetricKind kind = MetricKind::kLcs;
  int k = 1;
  DistanceMatrix train_matrix;
  std::vector<double> kdist;  // d_k per training point
  std::vector<double> lrd;    // local reachability density per training point
};

/// k defaults to min(n - 1, max(round(0.1 n), 50)). Precomputes the pairwise
/// matrix, per-point k-distances and local reachability densities
/// (lrd = 1 / mean reachability to the k nearest neighbors; +inf when all
/// those reachabilities are zero).
inline LofModel lof_fit(std::span<const Sequence> train, MetricKind kind,
                        std::optional<int> k = {}, unsigned threads = 1) {
  if (train.size() < 2) {
    throw std::invalid_argument("lof_fit: need at least 2 training sequences");
  }
  LofModel model;
  model.kind = kind;
  model.k = detail::clamp_neighbor_count(k, train.size(), 50, train.size() - 1,
                                         "lof_fit");
  model.train.assign(train.begin(), train.end());
  model.train_matrix = pairwise_matrix(kind, train, threads);

  const std::size_t n = train.size();
  const auto kk = static_cast<std::size_t>(model.k);
  std::vector<std::vector<std::size_t>> neighbors(n);
  model.kdist.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = model.train_matrix.at(i, j);
    neighbors[i] = detail::k_nearest(row, kk, i);
    model.kdist[i] = row[neighbors[i].back()];
  }
  model.lrd.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach_sum = 0.0;
    for (std::size_t j : neighbors[i]) {
      reach_sum += std::max(model.kdist[j], model.train_matrix.at(i, j));
    }
    model.lrd[i] = reach_sum > 0.0
                       ? static_cast<double>(kk) / reach_sum
                       : std::numeric_limits<double>::infinity();
  }
  return model;
}

/// LOF(x) = mean lrd of x's k training neighbors / lrd(x), where lrd(x) is
/// built from reachability distances rd(x, n_i) = max(d_k(n_i), d(x, n_i)).
/// Degenerate zero-distance neighborhoods: 1.0 when both sides are infinite,
/// kLofInfiniteDensityScore when only the neighbors' density is.
inline double lof_score(const LofModel& model, const Sequence& x) {
  const std::size_t n = model.train.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = normalized_distance(model.kind, x, model.train[i]);
  }
  const auto kk = static_cast<std::size_t>(model.k);
  const auto nb = detail::k_nearest(d, kk);

  double reach_sum = 0.0;
  bool nb_lrd_infinite = false;
  double nb_lrd_sum = 0.0;
  for (std::size_t i : nb) {
    reach_sum += std::max(model.kdist[i], d[i]);
    if (std::isinf(model.lrd[i])) {
      nb_lrd_infinite = true;
    } else {
      nb_lrd_sum += model.lrd[i];
    }
  }
  const double lrd_x = reach_sum > 0.0
                           ? static_cast<double>(kk) / reach_sum
                           : std::numeric_limits<double>::infinity();
  if (nb_lrd_infinite) {
    return std::isinf(lrd_x) ? 1.0 : kLofInfiniteDensityScore;
  }
  if (std::isinf(lrd_x)) return 0.0;
  return nb_lrd_sum / static_cast<double>(kk) / lrd_x;
}

// ---------------------------------------------------------------------------
// k-medoids (Voronoi iteration) with distance-to-closest-medoid scoring.
// ---------------------------------------------------------------------------

struct KMedoidsModel {
  std::vector<Sequence> medoids;
  MetricKind kind = MetricKind::kLcs;
  double objective = 0.0;  // final sum of within-cluster distances
};

/// Alternates (assign each point to its nearest medoid) and (replace each
/// medoid by the cluster member minimizing the within-cluster distance sum)
/// until the medoid set is stable or max_iters is reached. The objective is
/// non-increasing from iteration to iteration; `objective_trace` receives it
/// per iteration when given.
inline KMedoidsModel kmedoids_fit(std::span<const Sequence> train,
                                  MetricKind kind, int k = 2,
                                  int max_iters = 100, std::uint64_t seed = 0,
                                  unsigned threads = 1,
                                  std::vector<double>* objective_trace = nullptr) {
  const std::size_t n = train.size();
  if (k < 1) throw std::invalid_argument("kmedoids_fit: k must be >= 1");
  if (static_cast<std::size_t>(k) > n) {
    throw std::invalid_argument("kmedoids_fit: k exceeds training size");
  }
  if (max_iters < 1) throw std::invalid_argument("kmedoids_fit: max_iters >= 1");

  const DistanceMatrix dist = pairwise_matrix(kind, train, threads);

  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  SplitMix64 rng(seed);
  shuffle(pool, rng);
  std::vector<std::size_t> medoids(pool.begin(),
                                   pool.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(medoids.begin(), medoids.end());

  std::vector<std::size_t> assign(n);
  double objective = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment step; ties go to the medoid with the smaller training index.
    objective = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      std::size_t best = 0;
      double best_d = dist.at(p, medoids[0]);
      for (std::size_t c = 1; c < medoids.size(); ++c) {
        const double dd = dist.at(p, medoids[c]);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      assign[p] = best;
      objective += best_d;
    }
    if (objective_trace) objective_trace->push_back(objective);

    // Update step: swap each medoid for the member with the smallest
    // within-cluster distance sum. Empty clusters keep their medoid.
    bool changed = false;
    std::vector<std::size_t> next = medoids;
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      double best_sum = std::numeric_limits<double>::infinity();
      std::size_t best_m = medoids[c];
      bool any = false;
      for (std::size_t cand = 0; cand < n; ++cand) {
        if (assign[cand] != c) continue;
        any = true;
        double sum = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          if (assign[p] == c) sum += dist.at(cand, p);
        }
        if (sum < best_sum) {
          best_sum = sum;
          best_m = cand;
        }
      }
      if (any && best_m != medoids[c]) {
        next[c] = best_m;
        changed = true;
      }
    }
    if (!changed) break;
    medoids = std::move(next);
  }

  // Final objective under the final medoid set.
  objective = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m : medoids) best_d = std::min(best_d, dist.at(p, m));
    objective += best_d;
  }

  KMedoidsModel model;
  model.kind = kind;
  model.objective = objective;
  model.medoids.reserve(medoids.size());
  for (std::size_t m : medoids) model.medoids.push_back(train[m]);
  return model;
}

/// Distance to the closest medoid; higher = more anomalous.
inline double kmedoids_score(const KMedoidsModel& model, const Sequence& x) {
  double best = std::numeric_limits<double>::infinity();
  for (const Sequence& m : model.medoids) {
    best = std::min(best, normalized_distance(model.kind, x, m));
  }
  return best;
}

}  // namespace seqnovel
