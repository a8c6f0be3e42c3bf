#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqnovel/core.hpp"
#include "seqnovel/util.hpp"

namespace seqnovel {

enum class MetricKind { kLcs, kLevenshtein };

inline const char* metric_name(MetricKind kind) {
  return kind == MetricKind::kLcs ? "lcs" : "levenshtein";
}

/// Length of the longest (not necessarily contiguous) common subsequence.
/// Symbols compare by id, so kUnseenSymbol matches kUnseenSymbol.
/// Two rolling DP rows; memory O(min(|x|, |y|)).
inline int lcs_length(const Sequence& x, const Sequence& y) {
  const std::vector<SymbolId>* a = &x.symbols;
  const std::vector<SymbolId>* b = &y.symbols;
  if (b->size() > a->size()) std::swap(a, b);
  const std::size_t m = b->size();
  if (m == 0) return 0;

  std::vector<std::int32_t> prev(m + 1, 0);
  std::vector<std::int32_t> cur(m + 1, 0);
  for (std::size_t i = 1; i <= a->size(); ++i) {
    const SymbolId ai = (*a)[i - 1];
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = ai == (*b)[j - 1] ? prev[j - 1] + 1
                                 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Levenshtein distance: minimum insertions + deletions + substitutions.
inline int levenshtein(const Sequence& x, const Sequence& y) {
  const std::vector<SymbolId>* a = &x.symbols;
  const std::vector<SymbolId>* b = &y.symbols;
  if (b->size() > a->size()) std::swap(a, b);
  const std::size_t m = b->size();

  std::vector<std::int32_t> prev(m + 1);
  std::vector<std::int32_t> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<std::int32_t>(j);
  for (std::size_t i = 1; i <= a->size(); ++i) {
    const SymbolId ai = (*a)[i - 1];
    cur[0] = static_cast<std::int32_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int32_t subst = prev[j - 1] + (ai == (*b)[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Length-sum normalized distance in [0, 1]:
///   Levenshtein: lev(x, y) / (|x| + |y|)
///   LCS:         1 - 2 * lcs(x, y) / (|x| + |y|)
/// The LCS form is an order-preserving remap of the negative-LCS similarity
/// onto non-negative values with d(x, x) = 0.
inline double normalized_distance(MetricKind kind, const Sequence& x,
                                  const Sequence& y) {
  const double len_sum = static_cast<double>(x.size() + y.size());
  if (kind == MetricKind::kLcs) {
    return 1.0 - 2.0 * static_cast<double>(lcs_length(x, y)) / len_sum;
  }
  return static_cast<double>(levenshtein(x, y)) / len_sum;
}

/// Dense distance matrix; `symmetric` marks pairwise (square, zero-diagonal)
/// storage as opposed to rectangular test x train cross storage.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t rows, std::size_t cols, bool symmetric)
      : rows_(rows), cols_(cols), symmetric_(symmetric),
        values_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool symmetric() const { return symmetric_; }

  double& at(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  bool symmetric_ = false;
  std::vector<double> values_;
};

/// Symmetric matrix of normalized distances over `data`. Each off-diagonal
/// cell is computed once; rows are striped across workers and every cell is
/// a pure function of its pair, so any thread count yields identical bits.
inline DistanceMatrix pairwise_matrix(MetricKind kind,
                                      std::span<const Sequence> data,
                                      unsigned threads = 1) {
  if (data.empty()) throw std::invalid_argument("pairwise_matrix: empty input");
  DistanceMatrix m(data.size(), data.size(), true);
  detail::parallel_indices(data.size(), threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < data.size(); ++j) {
      const double d = normalized_distance(kind, data[i], data[j]);
      m.at(i, j) = d;
      m.at(j, i) = d;
    }
  });
  return m;
}

/// |test| x |train| matrix of normalized distances.
inline DistanceMatrix cross_matrix(MetricKind kind,
                                   std::span<const Sequence> test,
                                   std::span<const Sequence> train,
                                   unsigned threads = 1) {
  if (test.empty() || train.empty()) {
    throw std::invalid_argument("cross_matrix: empty input");
  }
  DistanceMatrix m(test.size(), train.size(), false);
  detail::parallel_indices(test.size(), threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < train.size(); ++j) {
      m.at(i, j) = normalized_distance(kind, test[i], train[j]);
    }
  });
  return m;
}

/// Row-major CSV dump with header `i,j,d`.
inline void write_matrix_csv(const DistanceMatrix& m, std::ostream& out) {
  out << "i,j,d\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out << i << ',' << j << ',' << format_double(m.at(i, j)) << '\n';
    }
  }
}

}  // namespace seqnovel
