#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqnovel/core.hpp"
#include "seqnovel/detector.hpp"
#include "seqnovel/rng.hpp"
#include "seqnovel/util.hpp"

namespace seqnovel {

/// Continuous anomaly scores (higher = more anomalous) with their labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<Label> labels;
};

struct PrPoint {
  double threshold;  // the distinct score value whose group enters here
  double precision;
  double recall;
};

namespace detail {

/// Indices of `scores` sorted by score descending, equal scores adjacent.
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

}  // namespace detail

/// Precision-recall curve with the anomaly class as positive. One point per
/// distinct score value; items with equal scores enter together, which makes
/// the curve (and AP) independent of input order. Recall is non-decreasing
/// along the returned order.
inline std::vector<PrPoint> precision_recall_curve(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size()) {
    throw std::invalid_argument("precision_recall_curve: size mismatch");
  }
  std::size_t positives = 0;
  for (Label l : s.labels) positives += (l == Label::kAnomaly);
  if (positives == 0) {
    throw std::invalid_argument("precision_recall_curve: no anomalies labelled");
  }

  const auto order = detail::descending_order(s.scores);
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  std::size_t taken = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = s.scores[order[i]];
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == value) {
      tp += (s.labels[order[j]] == Label::kAnomaly);
      ++j;
    }
    taken = j;
    curve.push_back({value,
                     static_cast<double>(tp) / static_cast<double>(taken),
                     static_cast<double>(tp) / static_cast<double>(positives)});
    i = j;
  }
  return curve;
}

/// Area under the precision-recall curve as the step-wise sum
/// sum_k (R_k - R_{k-1}) * P_k with R_0 = 0 (no interpolation).
inline double average_precision(const ScoredSet& s) {
  const auto curve = precision_recall_curve(s);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const PrPoint& p : curve) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Cross-validated MAP
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string detector;
  std::string dataset;
  std::vector<double> fold_ap;
  double map = 0.0;     // arithmetic mean of fold APs
  double stddev = 0.0;  // sample standard deviation over folds
};

namespace detail {

inline bool detector_accepts_seed(const std::string& name) {
  return name == "hmm" || name.rfind("kmedoids", 0) == 0;
}

inline EvalReport finish_report(std::string detector, std::string dataset,
                                std::vector<double> fold_ap) {
  EvalReport report;
  report.detector = std::move(detector);
  report.dataset = std::move(dataset);
  report.fold_ap = std::move(fold_ap);
  const double n = static_cast<double>(report.fold_ap.size());
  report.map = std::accumulate(report.fold_ap.begin(), report.fold_ap.end(), 0.0) / n;
  if (report.fold_ap.size() > 1) {
    double ss = 0.0;
    for (double ap : report.fold_ap) {
      ss += (ap - report.map) * (ap - report.map);
    }
    report.stddev = std::sqrt(ss / (n - 1.0));
  }
  return report;
}

}  // namespace detail

/// Fits on the train part and scores the test part once; a single-"fold"
/// report for fixed splits.
inline EvalReport evaluate_split(const DetectorSpec& spec,
                                 const LabeledDataset& train,
                                 const LabeledDataset& test,
                                 std::uint64_t seed,
                                 const std::string& dataset_id) {
  DetectorSpec fold_spec = spec;
  if (detail::detector_accepts_seed(spec.name) && !fold_spec.seed) {
    fold_spec.seed = seed;
  }
  auto detector = make_detector(fold_spec);
  detector->fit(train);
  ScoredSet scored;
  scored.scores = score_all(*detector, test.sequences, spec.threads);
  scored.labels = test.labels;
  return detail::finish_report(spec.name, dataset_id, {average_precision(scored)});
}

/// Stratified k-fold cross-validation: fit on each (contaminated) train
/// part, score the held-out part, report mean and std of the fold APs.
/// Detector fit errors propagate and abort the report.
inline EvalReport cross_validated_map(const DetectorSpec& spec,
                                      const LabeledDataset& ds, int folds = 5,
                                      std::uint64_t seed = 0,
                                      const std::string& dataset_id = "dataset") {
  const auto parts = stratified_kfold(ds, folds, seed);
  std::vector<double> fold_ap;
  fold_ap.reserve(parts.size());
  for (std::size_t f = 0; f < parts.size(); ++f) {
    DetectorSpec fold_spec = spec;
    if (detail::detector_accepts_seed(spec.name)) {
      fold_spec.seed = derive_stream(spec.seed.value_or(seed), {f});
    }
    auto detector = make_detector(fold_spec);
    detector->fit(parts[f].first);
    ScoredSet scored;
    scored.scores = score_all(*detector, parts[f].second.sequences, spec.threads);
    scored.labels = parts[f].second.labels;
    fold_ap.push_back(average_precision(scored));
  }
  return detail::finish_report(spec.name, dataset_id, std::move(fold_ap));
}

// ---------------------------------------------------------------------------
// Friedman test
// ---------------------------------------------------------------------------

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> mean_ranks;  // rank 1 = best (highest AP)
  std::string p_method;            // "exact" or "monte-carlo"
};

namespace detail {

/// Average ranks of one row, doubled so ties stay integral (rank 2.5 -> 5).
/// Rank 1 = largest value.
inline std::vector<std::int64_t> doubled_ranks(std::span<const double> row) {
  const std::size_t a = row.size();
  std::vector<std::size_t> order(a);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (row[x] != row[y]) return row[x] > row[y];
    return x < y;
  });
  std::vector<std::int64_t> out(a);
  std::size_t i = 0;
  while (i < a) {
    std::size_t j = i;
    while (j < a && row[order[j]] == row[order[i]]) ++j;
    // Group occupying ranks i+1 .. j: doubled average rank = (i+1) + j.
    const std::int64_t doubled = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t g = i; g < j; ++g) out[order[g]] = doubled;
    i = j;
  }
  return out;
}

/// Squared deviation statistic in doubled-rank integer space:
///   T = sum_j (U_j - D*(A+1))^2  with U_j the doubled column rank sum.
/// The Friedman statistic is 3*T / (D*A*(A+1)). Working on integers makes
/// ">= observed" comparisons exact.
inline std::int64_t doubled_rank_statistic(std::span<const std::int64_t> col_sums,
                                           std::int64_t expected) {
  std::int64_t t = 0;
  for (std::int64_t u : col_sums) t += (u - expected) * (u - expected);
  return t;
}

/// Exact tail probability P(T >= t_obs) under independent uniform
/// permutations of each row's rank multiset, by dynamic programming over
/// partial column sums. Tractable for a handful of algorithms.
inline double friedman_exact_tail(
    const std::vector<std::vector<std::int64_t>>& rows, std::int64_t t_obs) {
  const std::size_t a = rows[0].size();
  const std::size_t d = rows.size();
  const std::int64_t expected =
      static_cast<std::int64_t>(d) * static_cast<std::int64_t>(a + 1);

  // State: the first A-1 doubled column sums packed into 16-bit lanes.
  const auto pack = [a](std::span<const std::int64_t> sums) {
    std::uint64_t key = 0;
    for (std::size_t j = 0; j + 1 < a; ++j) {
      key = (key << 16) | static_cast<std::uint64_t>(sums[j]);
    }
    return key;
  };

  std::unordered_map<std::uint64_t, double> dist;
  dist.emplace(0, 1.0);
  std::int64_t total = 0;

  std::vector<std::int64_t> sums(a);
  for (const auto& row : rows) {
    for (std::int64_t r : row) total += r;

    std::vector<std::int64_t> perm = row;
    std::sort(perm.begin(), perm.end());
    double n_assignments = 1.0;  // A! / (product of tie-group factorials)
    {
      double fact = 1.0;
      for (std::size_t i = 1; i <= a; ++i) fact *= static_cast<double>(i);
      double ties = 1.0;
      std::size_t i = 0;
      while (i < a) {
        std::size_t j = i;
        while (j < a && perm[j] == perm[i]) ++j;
        for (std::size_t g = 2; g <= j - i; ++g) ties *= static_cast<double>(g);
        i = j;
      }
      n_assignments = fact / ties;
    }
    const double weight = 1.0 / n_assignments;

    std::unordered_map<std::uint64_t, double> next;
    next.reserve(dist.size() * 4);
    do {
      for (const auto& [key, prob] : dist) {
        std::uint64_t k = key;
        for (std::size_t j = a - 1; j-- > 0;) {
          sums[j] = static_cast<std::int64_t>(k & 0xffff);
          k >>= 16;
        }
        for (std::size_t j = 0; j + 1 < a; ++j) sums[j] += perm[j];
        next[pack(sums)] += prob * weight;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    dist = std::move(next);
  }

  double tail = 0.0;
  for (const auto& [key, prob] : dist) {
    std::uint64_t k = key;
    std::int64_t partial = 0;
    for (std::size_t j = a - 1; j-- > 0;) {
      sums[j] = static_cast<std::int64_t>(k & 0xffff);
      partial += sums[j];
      k >>= 16;
    }
    sums[a - 1] = total - partial;
    if (doubled_rank_statistic(sums, expected) >= t_obs) tail += prob;
  }
  return tail;
}

/// Monte Carlo fallback for matrices too wide for the exact distribution.
/// Fixed internal stream, so results are deterministic.
inline double friedman_mc_tail(const std::vector<std::vector<std::int64_t>>& rows,
                               std::int64_t t_obs, std::size_t resamples) {
  const std::size_t a = rows[0].size();
  const std::size_t d = rows.size();
  const std::int64_t expected =
      static_cast<std::int64_t>(d) * static_cast<std::int64_t>(a + 1);
  SplitMix64 rng(0x66726965646d616eull);
  std::vector<std::vector<std::int64_t>> work = rows;
  std::vector<std::int64_t> sums(a);
  std::size_t hits = 0;
  for (std::size_t rep = 0; rep < resamples; ++rep) {
    std::fill(sums.begin(), sums.end(), 0);
    for (auto& row : work) {
      shuffle(row, rng);
      for (std::size_t j = 0; j < a; ++j) sums[j] += row[j];
    }
    hits += (doubled_rank_statistic(sums, expected) >= t_obs);
  }
  return static_cast<double>(hits) / static_cast<double>(resamples);
}

}  // namespace detail

/// Friedman test over a datasets x algorithms matrix of AP values, with
/// average-rank tie handling. The statistic is the classical
///   chi2 = 12 D / (A (A + 1)) * sum_j (Rbar_j - (A + 1) / 2)^2.
/// The p-value is the tail of the statistic's permutation null (exact by
/// dynamic programming for A <= 4 and D <= 12, seeded Monte Carlo
/// otherwise); at the matrix sizes this toolkit meets, the asymptotic
/// chi-square tail misstates the null by several hundredths.
inline FriedmanResult friedman_test(
    const std::vector<std::vector<double>>& ap_matrix) {
  const std::size_t d = ap_matrix.size();
  if (d < 2) throw std::invalid_argument("friedman_test: need >= 2 datasets");
  const std::size_t a = ap_matrix[0].size();
  if (a < 2) throw std::invalid_argument("friedman_test: need >= 2 algorithms");
  for (const auto& row : ap_matrix) {
    if (row.size() != a) {
      throw std::invalid_argument("friedman_test: ragged AP matrix");
    }
  }

  std::vector<std::vector<std::int64_t>> rows;
  rows.reserve(d);
  std::vector<std::int64_t> col_sums(a, 0);
  for (const auto& row : ap_matrix) {
    rows.push_back(detail::doubled_ranks(row));
    for (std::size_t j = 0; j < a; ++j) col_sums[j] += rows.back()[j];
  }
  const std::int64_t expected =
      static_cast<std::int64_t>(d) * static_cast<std::int64_t>(a + 1);
  const std::int64_t t_obs = detail::doubled_rank_statistic(col_sums, expected);

  FriedmanResult result;
  result.statistic = 3.0 * static_cast<double>(t_obs) /
                     (static_cast<double>(d) * static_cast<double>(a) *
                      static_cast<double>(a + 1));
  result.mean_ranks.resize(a);
  for (std::size_t j = 0; j < a; ++j) {
    result.mean_ranks[j] =
        static_cast<double>(col_sums[j]) / (2.0 * static_cast<double>(d));
  }
  if (a <= 4 && d <= 12) {
    result.p_value = detail::friedman_exact_tail(rows, t_obs);
    result.p_method = "exact";
  } else {
    result.p_value = detail::friedman_mc_tail(rows, t_obs, 100000);
    result.p_method = "monte-carlo";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Rank summary
// ---------------------------------------------------------------------------

/// Per-dataset ranks (1 = best MAP, average-rank ties) averaged per
/// algorithm; returned sorted ascending by mean rank. Every algorithm must
/// be evaluated on every dataset.
inline std::vector<std::pair<std::string, double>> rank_summary(
    std::span<const EvalReport> reports) {
  std::map<std::string, std::map<std::string, double>> by_dataset;
  std::set<std::string> algorithms;
  for (const EvalReport& r : reports) {
    by_dataset[r.dataset][r.detector] = r.map;
    algorithms.insert(r.detector);
  }
  if (by_dataset.empty()) {
    throw std::invalid_argument("rank_summary: no reports");
  }
  std::map<std::string, double> rank_sum;
  for (const auto& [dataset, cells] : by_dataset) {
    std::vector<double> maps;
    std::vector<std::string> names;
    for (const std::string& alg : algorithms) {
      const auto it = cells.find(alg);
      if (it == cells.end()) {
        throw std::invalid_argument("rank_summary: missing cell for '" + alg +
                                    "' on dataset '" + dataset + "'");
      }
      names.push_back(alg);
      maps.push_back(it->second);
    }
    const auto doubled = detail::doubled_ranks(maps);
    for (std::size_t j = 0; j < names.size(); ++j) {
      rank_sum[names[j]] += static_cast<double>(doubled[j]) / 2.0;
    }
  }
  std::vector<std::pair<std::string, double>> out(rank_sum.begin(), rank_sum.end());
  const double n_datasets = static_cast<double>(by_dataset.size());
  for (auto& [name, sum] : out) sum /= n_datasets;
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second < y.second;
    return x.first < y.first;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline void write_fold_csv(std::span<const EvalReport> reports, std::ostream& out) {
  out << "dataset,algorithm,fold,ap\n";
  for (const EvalReport& r : reports) {
    for (std::size_t f = 0; f < r.fold_ap.size(); ++f) {
      out << r.dataset << ',' << r.detector << ',' << f << ','
          << format_double(r.fold_ap[f]) << '\n';
    }
  }
}

inline void write_summary_csv(std::span<const EvalReport> reports,
                              std::ostream& out) {
  out << "dataset,algorithm,map,std\n";
  for (const EvalReport& r : reports) {
    out << r.dataset << ',' << r.detector << ',' << format_double(r.map) << ','
        << format_double(r.stddev) << '\n';
  }
}

inline void write_friedman_block(const FriedmanResult& result,
                                 std::span<const std::string> algorithm_names,
                                 std::ostream& out) {
  out << "friedman_statistic " << format_double(result.statistic) << "\n";
  out << "friedman_p_value " << format_double(result.p_value) << "\n";
  out << "friedman_p_method " << result.p_method << "\n";
  for (std::size_t j = 0; j < algorithm_names.size(); ++j) {
    out << "mean_rank " << algorithm_names[j] << ' '
        << format_double(result.mean_ranks[j]) << "\n";
  }
}

}  // namespace seqnovel
