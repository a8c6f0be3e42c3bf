#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "seqnovel/core.hpp"

namespace seqnovel {

namespace detail {

struct WindowHash {
  std::size_t operator()(const std::vector<SymbolId>& w) const {
    // FNV-1a over the raw ids.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (SymbolId id : w) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(id));
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Sliding-window frequency model (t-STIDE). Windows of length `window_len`
/// are counted per training sequence; sequences shorter than the window
/// contribute their full extent as one window into a same-length side table.
struct StideModel {
  struct LengthTable {
    std::unordered_map<std::vector<SymbolId>, std::uint64_t, detail::WindowHash>
        counts;
    std::uint64_t total = 0;
  };

  int window_len = 6;
  double threshold = 1e-5;
  std::map<int, LengthTable> tables;  // keyed by window length
};

inline StideModel stide_fit(std::span<const Sequence> train, int window_len = 6,
                            double threshold = 1e-5) {
  if (window_len < 1) throw std::invalid_argument("stide_fit: window_len >= 1");
  if (threshold < 0.0) throw std::invalid_argument("stide_fit: threshold >= 0");
  StideModel model;
  model.window_len = window_len;
  model.threshold = threshold;
  const auto w = static_cast<std::size_t>(window_len);
  for (const Sequence& s : train) {
    const std::size_t len = s.size();
    if (len >= w) {
      auto& table = model.tables[window_len];
      table.counts.reserve(table.counts.size() + (len - w + 1));
      for (std::size_t i = 0; i + w <= len; ++i) {
        std::vector<SymbolId> window(s.symbols.begin() + i,
                                     s.symbols.begin() + i + w);
        ++table.counts[std::move(window)];
        ++table.total;
      }
    } else {
      auto& table = model.tables[static_cast<int>(len)];
      ++table.counts[s.symbols];
      ++table.total;
    }
  }
  return model;
}

/// Fraction of x's windows that are absent from the matching-length table or
/// whose relative frequency is strictly below the threshold; in [0, 1],
/// higher = more anomalous. Short sequences are scored as a single window
/// against the table of their own length.
inline double stide_score(const StideModel& model, const Sequence& x) {
  const auto w = static_cast<std::size_t>(model.window_len);
  const std::size_t len = x.size();

  const auto flagged = [&model](const StideModel::LengthTable* table,
                                const std::vector<SymbolId>& window) {
    if (table == nullptr || table->total == 0) return true;
    const auto it = table->counts.find(window);
    if (it == table->counts.end()) return true;
    const double rel = static_cast<double>(it->second) /
                       static_cast<double>(table->total);
    return rel < model.threshold;
  };

  if (len < w) {
    const auto it = model.tables.find(static_cast<int>(len));
    const auto* table = it == model.tables.end() ? nullptr : &it->second;
    return flagged(table, x.symbols) ? 1.0 : 0.0;
  }

  const auto it = model.tables.find(model.window_len);
  const auto* table = it == model.tables.end() ? nullptr : &it->second;
  const std::size_t n_windows = len - w + 1;
  std::size_t n_flagged = 0;
  std::vector<SymbolId> window(w);
  for (std::size_t i = 0; i + w <= len; ++i) {
    window.assign(x.symbols.begin() + i, x.symbols.begin() + i + w);
    n_flagged += flagged(table, window);
  }
  return static_cast<double>(n_flagged) / static_cast<double>(n_windows);
}

}  // namespace seqnovel
