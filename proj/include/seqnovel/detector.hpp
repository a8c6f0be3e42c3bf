#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqnovel/core.hpp"
#include "seqnovel/hmm.hpp"
#include "seqnovel/neighbors.hpp"
#include "seqnovel/stide.hpp"
#include "seqnovel/util.hpp"

namespace seqnovel {

/// Common face of all detectors: unsupervised fit on a (possibly
/// contaminated) training set, then per-sequence scoring with
/// higher = more anomalous. Fitted detectors are immutable and scoring is
/// pure, so one instance may score in parallel.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual const std::string& name() const = 0;
  virtual void fit(const LabeledDataset& train) = 0;
  virtual double score(const Sequence& x) const = 0;
};

/// Parsed detector selection: one of the eight supported names plus
/// parameter overrides. Overrides are type-checked against the named
/// detector by make_detector.
struct DetectorSpec {
  std::string name;
  std::optional<int> k;
  std::optional<int> window;
  std::optional<double> threshold;
  std::optional<int> components;
  std::optional<int> iters;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

inline const std::vector<std::string>& detector_names() {
  static const std::vector<std::string> names = {
      "hmm",          "knn-lcs",      "knn-lev",      "lof-lcs",
      "lof-lev",      "kmedoids-lcs", "kmedoids-lev", "t-stide"};
  return names;
}

namespace detail {

class HmmDetector final : public Detector {
 public:
  HmmDetector(std::string name, HmmTrainConfig cfg)
      : name_(std::move(name)), cfg_(cfg) {}
  const std::string& name() const override { return name_; }
  void fit(const LabeledDataset& train) override {
    model_ = hmm_fit(train.sequences, train.table->size(), cfg_);
  }
  double score(const Sequence& x) const override { return hmm_score(model_, x); }

 private:
  std::string name_;
  HmmTrainConfig cfg_;
  HmmModel model_;
};

class KnnDetector final : public Detector {
 public:
  KnnDetector(std::string name, MetricKind kind, std::optional<int> k,
              unsigned threads)
      : name_(std::move(name)), kind_(kind), k_(k), threads_(threads) {}
  const std::string& name() const override { return name_; }
  void fit(const LabeledDataset& train) override {
    model_ = knn_fit(train.sequences, kind_, k_, threads_);
  }
  double score(const Sequence& x) const override { return knn_score(model_, x); }

 private:
  std::string name_;
  MetricKind kind_;
  std::optional<int> k_;
  unsigned threads_;
  KnnModel model_;
};

class LofDetector final : public Detector {
 public:
  LofDetector(std::string name, MetricKind kind, std::optional<int> k,
              unsigned threads)
      : name_(std::move(name)), kind_(kind), k_(k), threads_(threads) {}
  const std::string& name() const override { return name_; }
  void fit(const LabeledDataset& train) override {
    model_ = lof_fit(train.sequences, kind_, k_, threads_);
  }
  double score(const Sequence& x) const override { return lof_score(model_, x); }

 private:
  std::string name_;
  MetricKind kind_;
  std::optional<int> k_;
  unsigned threads_;
  LofModel model_;
};

class KMedoidsDetector final : public Detector {
 public:
  KMedoidsDetector(std::string name, MetricKind kind, int k, int max_iters,
                   std::uint64_t seed, unsigned threads)
      : name_(std::move(name)), kind_(kind), k_(k), max_iters_(max_iters),
        seed_(seed), threads_(threads) {}
  const std::string& name() const override { return name_; }
  void fit(const LabeledDataset& train) override {
    model_ = kmedoids_fit(train.sequences, kind_, k_, max_iters_, seed_, threads_);
  }
  double score(const Sequence& x) const override {
    return kmedoids_score(model_, x);
  }

 private:
  std::string name_;
  MetricKind kind_;
  int k_;
  int max_iters_;
  std::uint64_t seed_;
  unsigned threads_;
  KMedoidsModel model_;
};

class StideDetector final : public Detector {
 public:
  StideDetector(std::string name, int window_len, double threshold)
      : name_(std::move(name)), window_len_(window_len), threshold_(threshold) {}
  const std::string& name() const override { return name_; }
  void fit(const LabeledDataset& train) override {
    model_ = stide_fit(train.sequences, window_len_, threshold_);
  }
  double score(const Sequence& x) const override {
    return stide_score(model_, x);
  }

 private:
  std::string name_;
  int window_len_;
  double threshold_;
  StideModel model_;
};

inline void reject_override(const DetectorSpec& spec, bool bad,
                            const char* field) {
  if (bad) {
    throw std::invalid_argument("detector '" + spec.name +
                                "' does not accept the '" + field +
                                "' override");
  }
}

}  // namespace detail

/// Builds a detector from a spec; throws std::invalid_argument on unknown
/// names or overrides that do not apply to the named detector.
inline std::unique_ptr<Detector> make_detector(const DetectorSpec& spec) {
  const auto no_k = [&] { detail::reject_override(spec, spec.k.has_value(), "k"); };
  const auto no_window = [&] {
    detail::reject_override(spec, spec.window.has_value(), "window");
  };
  const auto no_threshold = [&] {
    detail::reject_override(spec, spec.threshold.has_value(), "threshold");
  };
  const auto no_components = [&] {
    detail::reject_override(spec, spec.components.has_value(), "components");
  };
  const auto no_iters = [&] {
    detail::reject_override(spec, spec.iters.has_value(), "iters");
  };
  const auto no_tol = [&] {
    detail::reject_override(spec, spec.tol.has_value(), "tol");
  };
  const auto no_seed = [&] {
    detail::reject_override(spec, spec.seed.has_value(), "seed");
  };

  if (spec.name == "hmm") {
    no_k();
    no_window();
    no_threshold();
    HmmTrainConfig cfg;
    if (spec.components) cfg.components = *spec.components;
    if (spec.iters) cfg.max_iters = *spec.iters;
    if (spec.tol) cfg.tol = *spec.tol;
    if (spec.seed) cfg.seed = *spec.seed;
    return std::make_unique<detail::HmmDetector>(spec.name, cfg);
  }
  if (spec.name == "knn-lcs" || spec.name == "knn-lev") {
    no_window();
    no_threshold();
    no_components();
    no_iters();
    no_tol();
    no_seed();
    const MetricKind kind =
        spec.name == "knn-lcs" ? MetricKind::kLcs : MetricKind::kLevenshtein;
    return std::make_unique<detail::KnnDetector>(spec.name, kind, spec.k,
                                                 spec.threads);
  }
  if (spec.name == "lof-lcs" || spec.name == "lof-lev") {
    no_window();
    no_threshold();
    no_components();
    no_iters();
    no_tol();
    no_seed();
    const MetricKind kind =
        spec.name == "lof-lcs" ? MetricKind::kLcs : MetricKind::kLevenshtein;
    return std::make_unique<detail::LofDetector>(spec.name, kind, spec.k,
                                                 spec.threads);
  }
  if (spec.name == "kmedoids-lcs" || spec.name == "kmedoids-lev") {
    no_window();
    no_threshold();
    no_components();
    no_tol();
    const MetricKind kind = spec.name == "kmedoids-lcs"
                                ? MetricKind::kLcs
                                : MetricKind::kLevenshtein;
    return std::make_unique<detail::KMedoidsDetector>(
        spec.name, kind, spec.k.value_or(2), spec.iters.value_or(100),
        spec.seed.value_or(0), spec.threads);
  }
  if (spec.name == "t-stide") {
    no_k();
    no_components();
    no_iters();
    no_tol();
    no_seed();
    return std::make_unique<detail::StideDetector>(
        spec.name, spec.window.value_or(6), spec.threshold.value_or(1e-5));
  }
  throw std::invalid_argument("unknown detector name: " + spec.name);
}

/// Scores every sequence; indices are striped across workers and each slot
/// is written once, so results match the sequential order bit-for-bit.
inline std::vector<double> score_all(const Detector& detector,
                                     std::span<const Sequence> data,
                                     unsigned threads = 1) {
  std::vector<double> scores(data.size());
  detail::parallel_indices(data.size(), threads, [&](std::size_t i) {
    scores[i] = detector.score(data[i]);
  });
  return scores;
}

}  // namespace seqnovel
