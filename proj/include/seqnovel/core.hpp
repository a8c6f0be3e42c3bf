#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqnovel/rng.hpp"

namespace seqnovel {

using SymbolId = std::int32_t;

/// Reserved id returned for tokens that are not part of a frozen table.
inline constexpr SymbolId kUnseenSymbol = -1;

/// Raised on malformed dataset files; the message carries the line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interns textual event tokens as dense ids 0..sigma-1. After freeze(),
/// lookups of unknown tokens return kUnseenSymbol instead of registering,
/// so test-time alphabets may exceed the training alphabet.
class SymbolTable {
 public:
  /// Returns the id of `token`, registering it first unless the table is
  /// frozen; frozen tables map unknown tokens to kUnseenSymbol.
  SymbolId intern(std::string_view token) {
    auto it = ids_.find(std::string(token));
    if (it != ids_.end()) return it->second;
    if (frozen_) return kUnseenSymbol;
    const SymbolId id = static_cast<SymbolId>(tokens_.size());
    tokens_.emplace_back(token);
    ids_.emplace(tokens_.back(), id);
    return id;
  }

  /// Lookup without registration; unknown tokens yield kUnseenSymbol.
  SymbolId lookup(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnseenSymbol : it->second;
  }

  const std::string& token(SymbolId id) const { return tokens_.at(id); }

  /// Alphabet size sigma (registered tokens only; kUnseenSymbol excluded).
  std::size_t size() const { return tokens_.size(); }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  std::unordered_map<std::string, SymbolId> ids_;
  std::vector<std::string> tokens_;
  bool frozen_ = false;
};

/// One discrete event sequence; parse-time construction guarantees length
/// >= 1 and ids that are either registered or kUnseenSymbol.
struct Sequence {
  std::vector<SymbolId> symbols;

  std::size_t size() const { return symbols.size(); }
  SymbolId operator[](std::size_t i) const { return symbols[i]; }
  bool operator==(const Sequence& other) const = default;
};

enum class Label : std::uint8_t { kNominal = 0, kAnomaly = 1 };

/// Sequences plus binary anomaly labels. The symbol table is shared between
/// datasets produced by splitting; everything is immutable after load.
struct LabeledDataset {
  std::vector<Sequence> sequences;
  std::vector<Label> labels;
  std::shared_ptr<const SymbolTable> table;

  std::size_t size() const { return sequences.size(); }

  std::size_t anomaly_count() const {
    std::size_t n = 0;
    for (Label l : labels) n += (l == Label::kAnomaly);
    return n;
  }

  double anomaly_proportion() const {
    return sequences.empty()
               ? 0.0
               : static_cast<double>(anomaly_count()) / sequences.size();
  }
};

namespace detail {

inline bool parse_dataset_line(std::string_view line, std::size_t line_no,
                               Label* label, std::vector<std::string>* toks) {
  // Blank lines and '#' comments carry no record.
  std::size_t end = line.size();
  if (end > 0 && line[end - 1] == '\r') --end;
  line = line.substr(0, end);
  if (line.empty()) return false;
  if (line[0] == '#') return false;

  const std::size_t tab = line.find('\t');
  if (tab == std::string_view::npos) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": missing <label>\\t<tokens> separator");
  }
  const std::string_view label_field = line.substr(0, tab);
  if (label_field == "0") {
    *label = Label::kNominal;
  } else if (label_field == "1") {
    *label = Label::kAnomaly;
  } else {
    throw ParseError("line " + std::to_string(line_no) + ": unknown label '" +
                     std::string(label_field) + "' (expected 0 or 1)");
  }

  toks->clear();
  std::size_t pos = tab + 1;
  while (pos < line.size()) {
    const std::size_t space = line.find(' ', pos);
    const std::size_t stop = space == std::string_view::npos ? line.size() : space;
    if (stop > pos) toks->emplace_back(line.substr(pos, stop - pos));
    pos = stop + 1;
  }
  if (toks->empty()) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": empty sequence (no tokens after label)");
  }
  return true;
}

}  // namespace detail

/// Parses the tab-separated dataset format from a stream. When `table` is
/// null, a fresh table is built from the data and frozen afterwards;
/// otherwise the given (frozen) table is used and unknown tokens map to
/// kUnseenSymbol.
inline LabeledDataset read_dataset(std::istream& in,
                                   std::shared_ptr<const SymbolTable> table = nullptr) {
  LabeledDataset ds;
  auto building = table ? nullptr : std::make_shared<SymbolTable>();

  std::string line;
  std::vector<std::string> toks;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    Label label{};
    if (!detail::parse_dataset_line(line, line_no, &label, &toks)) continue;
    Sequence seq;
    seq.symbols.reserve(toks.size());
    for (const auto& t : toks) {
      seq.symbols.push_back(building ? building->intern(t)
                                     : table->lookup(t));
    }
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(label);
  }
  if (building) {
    building->freeze();
    ds.table = std::move(building);
  } else {
    ds.table = std::move(table);
  }
  return ds;
}

inline LabeledDataset load_dataset(const std::string& path,
                                   std::shared_ptr<const SymbolTable> table = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  return read_dataset(in, std::move(table));
}

/// Writes the canonical dataset form: `<label>\t<tok1> <tok2> ...\n`.
inline void write_dataset(const LabeledDataset& ds, std::ostream& out) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << (ds.labels[i] == Label::kAnomaly ? '1' : '0') << '\t';
    const auto& symbols = ds.sequences[i].symbols;
    for (std::size_t j = 0; j < symbols.size(); ++j) {
      if (j > 0) out << ' ';
      out << ds.table->token(symbols[j]);
    }
    out << '\n';
  }
}

inline void save_dataset(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  write_dataset(ds, out);
}

namespace detail {

inline LabeledDataset subset(const LabeledDataset& ds,
                             const std::vector<std::size_t>& idx) {
  LabeledDataset out;
  out.table = ds.table;
  out.sequences.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    out.sequences.push_back(ds.sequences[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

inline std::vector<std::size_t> class_indices(const LabeledDataset& ds,
                                              Label label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == label) idx.push_back(i);
  }
  return idx;
}

}  // namespace detail

/// Stratified train/test split. Each class is shuffled by a seed-derived
/// stream and split with floor(ratio * class_size) going to train, so the
/// anomaly proportions of the parts differ by at most one sample per class.
inline std::pair<LabeledDataset, LabeledDataset> split_train_test(
    const LabeledDataset& ds, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw std::invalid_argument("train_ratio must lie in (0, 1)");
  }
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (Label cls : {Label::kNominal, Label::kAnomaly}) {
    auto idx = detail::class_indices(ds, cls);
    SplitMix64 rng(derive_stream(seed, {static_cast<std::uint64_t>(cls)}));
    shuffle(idx, rng);
    const std::size_t n_train =
        static_cast<std::size_t>(train_ratio * static_cast<double>(idx.size()));
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
    test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {detail::subset(ds, train_idx), detail::subset(ds, test_idx)};
}

/// Stratified k-fold partition: per class, a seeded shuffle is dealt
/// round-robin into folds, so per-fold anomaly counts differ by at most 1.
/// Returns k (train, test) pairs; test folds are disjoint and cover ds.
inline std::vector<std::pair<LabeledDataset, LabeledDataset>> stratified_kfold(
    const LabeledDataset& ds, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold requires k >= 2");
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (Label cls : {Label::kNominal, Label::kAnomaly}) {
    auto idx = detail::class_indices(ds, cls);
    SplitMix64 rng(derive_stream(seed, {static_cast<std::uint64_t>(cls)}));
    shuffle(idx, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      folds[i % folds.size()].push_back(idx[i]);
    }
  }
  std::vector<std::pair<LabeledDataset, LabeledDataset>> out;
  out.reserve(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> test_idx = folds[f];
    std::sort(test_idx.begin(), test_idx.end());
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g == f) continue;
      train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    out.emplace_back(detail::subset(ds, train_idx), detail::subset(ds, test_idx));
  }
  return out;
}

}  // namespace seqnovel
