#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqnovel/core.hpp"
#include "seqnovel/rng.hpp"
#include "seqnovel/util.hpp"

namespace seqnovel {

/// First-order Markov chain over sigma symbols.
struct MarkovChain {
  std::vector<double> initial;  // categorical over sigma symbols
  Matrix transition;            // sigma x sigma, row-stochastic

  std::size_t sigma() const { return initial.size(); }
};

struct GeneratorSpec {
  std::size_t sigma = 10;
  std::size_t n_sequences = 0;
  std::size_t seq_len = 0;
  double anomaly_prop = 0.10;
  std::uint64_t seed = 0;
};

namespace detail {

// Substream tags for the generator (one substream per chain and per
// split/sequence index, so datasets regenerate identically in any order).
inline constexpr std::uint64_t kNominalChainStream = 1;
inline constexpr std::uint64_t kAnomalyChainStream = 2;
inline constexpr std::uint64_t kTrainSplitStream = 3;
inline constexpr std::uint64_t kTestSplitStream = 4;

inline MarkovChain random_chain(std::size_t sigma, SplitMix64& rng,
                                bool add_identity) {
  MarkovChain chain;
  chain.initial.assign(sigma, 1.0 / static_cast<double>(sigma));
  chain.transition = Matrix(sigma, sigma);
  for (std::size_t i = 0; i < sigma; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < sigma; ++j) {
      // Clamp away from zero so no row can degenerate under adversarial
      // streams.
      double v = std::max(rng.uniform01(), 1e-12);
      if (add_identity && i == j) v += 1.0;
      chain.transition(i, j) = v;
      row_sum += v;
    }
    for (std::size_t j = 0; j < sigma; ++j) chain.transition(i, j) /= row_sum;
  }
  return chain;
}

}  // namespace detail

/// Transition entries drawn i.i.d. Uniform(0,1), rows normalized; uniform
/// initial distribution.
inline MarkovChain nominal_chain(std::size_t sigma, std::uint64_t seed) {
  if (sigma < 2) throw std::invalid_argument("nominal_chain: sigma >= 2");
  SplitMix64 rng(derive_stream(seed, {detail::kNominalChainStream}));
  return detail::random_chain(sigma, rng, false);
}

/// Like nominal_chain but with the identity matrix added before row
/// normalization, biasing anomalous sequences toward self-transitions.
inline MarkovChain anomaly_chain(std::size_t sigma, std::uint64_t seed) {
  if (sigma < 2) throw std::invalid_argument("anomaly_chain: sigma >= 2");
  SplitMix64 rng(derive_stream(seed, {detail::kAnomalyChainStream}));
  return detail::random_chain(sigma, rng, true);
}

/// Samples a sequence of exactly `length` symbols: the first from the
/// initial distribution, each next from the transition row of its
/// predecessor.
inline Sequence sample_sequence(const MarkovChain& chain, std::size_t length,
                                SplitMix64& rng) {
  if (length < 1) throw std::invalid_argument("sample_sequence: length >= 1");
  Sequence seq;
  seq.symbols.resize(length);
  std::size_t state = sample_categorical(chain.initial, rng);
  seq.symbols[0] = static_cast<SymbolId>(state);
  const std::size_t sigma = chain.sigma();
  for (std::size_t t = 1; t < length; ++t) {
    state = sample_categorical({&chain.transition(state, 0), sigma}, rng);
    seq.symbols[t] = static_cast<SymbolId>(state);
  }
  return seq;
}

/// Generates a (train, test) pair from one nominal and one anomaly chain
/// built off spec.seed. Each part holds spec.n_sequences samples of length
/// spec.seq_len with round(anomaly_prop * n) anomalies, nominal samples
/// first. Both parts share the same symbol table and chains; every sequence
/// has its own substream, so regeneration is byte-identical.
inline std::pair<LabeledDataset, LabeledDataset> generate_datasets(
    const GeneratorSpec& spec) {
  if (spec.sigma < 2) throw std::invalid_argument("generate_datasets: sigma >= 2");
  if (spec.n_sequences < 1) {
    throw std::invalid_argument("generate_datasets: n_sequences >= 1");
  }
  if (spec.seq_len < 1) throw std::invalid_argument("generate_datasets: seq_len >= 1");
  if (!(spec.anomaly_prop >= 0.0 && spec.anomaly_prop < 1.0)) {
    throw std::invalid_argument("generate_datasets: anomaly_prop in [0, 1)");
  }
  const auto n_anomalies = static_cast<std::size_t>(std::llround(
      spec.anomaly_prop * static_cast<double>(spec.n_sequences)));
  if (n_anomalies >= spec.n_sequences && n_anomalies > 0) {
    throw std::invalid_argument("generate_datasets: anomaly count reaches n");
  }

  const MarkovChain nominal = nominal_chain(spec.sigma, spec.seed);
  const MarkovChain anomaly = anomaly_chain(spec.sigma, spec.seed);

  auto table = std::make_shared<SymbolTable>();
  for (std::size_t s = 0; s < spec.sigma; ++s) table->intern(std::to_string(s));
  table->freeze();

  const auto make_split = [&](std::uint64_t split_stream) {
    LabeledDataset ds;
    ds.table = table;
    ds.sequences.reserve(spec.n_sequences);
    ds.labels.reserve(spec.n_sequences);
    for (std::size_t i = 0; i < spec.n_sequences; ++i) {
      const bool anomalous = i >= spec.n_sequences - n_anomalies;
      SplitMix64 rng(derive_stream(spec.seed, {split_stream, i}));
      ds.sequences.push_back(
          sample_sequence(anomalous ? anomaly : nominal, spec.seq_len, rng));
      ds.labels.push_back(anomalous ? Label::kAnomaly : Label::kNominal);
    }
    return ds;
  };
  return {make_split(detail::kTrainSplitStream),
          make_split(detail::kTestSplitStream)};
}

/// Sidecar metadata in `key=value` form; written next to generated datasets
/// for provenance.
inline void write_generator_meta(const GeneratorSpec& spec, std::ostream& out) {
  out << "sigma=" << spec.sigma << "\n";
  out << "n_sequences=" << spec.n_sequences << "\n";
  out << "seq_len=" << spec.seq_len << "\n";
  out << "anomaly_prop=" << format_double(spec.anomaly_prop) << "\n";
  out << "seed=" << spec.seed << "\n";
}

}  // namespace seqnovel
