#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "seqnovel/datagen.hpp"
#include "seqnovel/detector.hpp"
#include "seqnovel/eval.hpp"
#include "seqnovel/rng.hpp"
#include "seqnovel/util.hpp"

namespace seqnovel {

enum class BenchAxisKind { kNumSamples, kSeqLength, kAnomalyProportion };

inline const char* axis_name(BenchAxisKind kind) {
  switch (kind) {
    case BenchAxisKind::kNumSamples: return "samples";
    case BenchAxisKind::kSeqLength: return "length";
    case BenchAxisKind::kAnomalyProportion: return "proportion";
  }
  return "?";
}

/// One scalability sweep: the varied parameter, its (strictly increasing)
/// points, and the fixed generator parameters for the other dimensions.
/// `paired_samples`, when non-empty, gives a per-point sample count for the
/// length axis so the total symbol volume can be held constant.
struct BenchAxis {
  BenchAxisKind kind = BenchAxisKind::kNumSamples;
  std::vector<double> values;
  GeneratorSpec base;
  std::vector<std::size_t> paired_samples;
};

/// One measurement row; times and memory are means over the completed runs.
struct BenchRecord {
  std::string algorithm;
  BenchAxisKind axis = BenchAxisKind::kNumSamples;
  double value = 0.0;
  double fit_time_s = 0.0;
  double score_time_s = 0.0;
  std::optional<std::uint64_t> peak_mem_bytes;
  std::optional<double> map;
  int n_runs = 0;
  bool timed_out = false;
  bool failed = false;
};

/// A detector entry for the harness: display name plus a factory taking the
/// per-run seed.
struct BenchTask {
  std::string algorithm;
  std::function<std::unique_ptr<Detector>(std::uint64_t)> make;
};

// ---------------------------------------------------------------------------
// Peak-RSS sampling
// ---------------------------------------------------------------------------

namespace detail {

/// Current resident set size in bytes, or nullopt where /proc is missing.
inline std::optional<std::uint64_t> current_rss_bytes() {
  std::ifstream statm("/proc/self/statm");
  if (!statm) return std::nullopt;
  std::uint64_t total_pages = 0;
  std::uint64_t resident_pages = 0;
  if (!(statm >> total_pages >> resident_pages)) return std::nullopt;
  const long page = sysconf(_SC_PAGESIZE);
  if (page <= 0) return std::nullopt;
  return resident_pages * static_cast<std::uint64_t>(page);
}

/// Background thread sampling RSS at a fixed interval while a measured
/// computation runs. At desk scale a 10 ms interval does not distort the
/// peak of multi-second phases, unlike sub-millisecond polling.
class RssSampler {
 public:
  RssSampler() {
    baseline_ = current_rss_bytes();
    if (!baseline_) return;
    peak_ = *baseline_;
    worker_ = std::thread([this] {
      std::unique_lock<std::mutex> lock(mu_);
      while (!stop_) {
        cv_.wait_for(lock, std::chrono::milliseconds(10));
        if (auto rss = current_rss_bytes()) {
          peak_ = std::max(peak_, *rss);
        }
      }
    });
  }

  RssSampler(const RssSampler&) = delete;
  RssSampler& operator=(const RssSampler&) = delete;

  ~RssSampler() {
    if (worker_.joinable()) finish();
  }

  /// Stops sampling and returns the peak above the baseline, floored at 0;
  /// nullopt when RSS introspection is unavailable.
  std::optional<std::uint64_t> finish() {
    if (!baseline_) return std::nullopt;
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
    if (auto rss = current_rss_bytes()) peak_ = std::max(peak_, *rss);
    return peak_ > *baseline_ ? peak_ - *baseline_ : 0;
  }

 private:
  std::optional<std::uint64_t> baseline_;
  std::uint64_t peak_ = 0;
  std::thread worker_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
};

}  // namespace detail

/// Runs `action` under the RSS sampler and reports the peak above the
/// pre-action baseline. Returns nullopt (instead of aborting) on platforms
/// without RSS introspection.
inline std::optional<std::uint64_t> measure_peak_memory(
    const std::function<void()>& action) {
  detail::RssSampler sampler;
  action();
  return sampler.finish();
}

// ---------------------------------------------------------------------------
// Axis runner
// ---------------------------------------------------------------------------

namespace detail {

inline GeneratorSpec spec_for_point(const BenchAxis& axis, std::size_t point_idx) {
  GeneratorSpec gs = axis.base;
  const double value = axis.values[point_idx];
  switch (axis.kind) {
    case BenchAxisKind::kNumSamples:
      gs.n_sequences = static_cast<std::size_t>(value);
      break;
    case BenchAxisKind::kSeqLength:
      gs.seq_len = static_cast<std::size_t>(value);
      if (!axis.paired_samples.empty()) {
        gs.n_sequences = axis.paired_samples[point_idx];
      }
      break;
    case BenchAxisKind::kAnomalyProportion:
      gs.anomaly_prop = value;
      break;
  }
  return gs;
}

}  // namespace detail

/// Runs every (detector, axis point) cell: one discarded warm-up plus 3
/// measured runs over distinct seed-derived dataset pairs, recording mean
/// fit/score wall time, peak RSS above the pre-run baseline, and test AP.
/// A run exceeding timeout_s flags the record and skips larger axis points
/// for that detector; skipped cells still emit (flagged) records. Exactly
/// one measured computation runs at a time.
inline std::vector<BenchRecord> run_axis(const BenchAxis& axis,
                                         const std::vector<BenchTask>& tasks,
                                         double timeout_s, std::uint64_t seed) {
  if (axis.values.size() < 2) {
    throw std::invalid_argument("run_axis: need >= 2 axis points");
  }
  for (std::size_t i = 1; i < axis.values.size(); ++i) {
    if (!(axis.values[i] > axis.values[i - 1])) {
      throw std::invalid_argument("run_axis: axis points must strictly increase");
    }
  }
  constexpr int kMeasuredRuns = 3;
  using Clock = std::chrono::steady_clock;
  const auto seconds_between = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  std::vector<BenchRecord> records;
  for (std::size_t task_idx = 0; task_idx < tasks.size(); ++task_idx) {
    const BenchTask& task = tasks[task_idx];
    bool skip_rest = false;
    for (std::size_t point = 0; point < axis.values.size(); ++point) {
      BenchRecord rec;
      rec.algorithm = task.algorithm;
      rec.axis = axis.kind;
      rec.value = axis.values[point];
      if (skip_rest) {
        rec.timed_out = true;
        records.push_back(std::move(rec));
        continue;
      }

      double fit_sum = 0.0;
      double score_sum = 0.0;
      std::uint64_t mem_sum = 0;
      std::size_t mem_samples = 0;
      double map_sum = 0.0;
      int map_runs = 0;

      try {
        // Warm-up run, discarded; run index kMeasuredRuns keeps its dataset
        // stream distinct from the measured ones.
        for (int run = kMeasuredRuns; run >= 0; --run) {
          const bool warmup = run == kMeasuredRuns;
          GeneratorSpec gs = detail::spec_for_point(axis, point);
          gs.seed = derive_stream(seed, {point, static_cast<std::uint64_t>(run)});
          const auto [train, test] = generate_datasets(gs);
          auto detector = task.make(gs.seed);

          detail::RssSampler sampler;
          const auto t0 = Clock::now();
          detector->fit(train);
          const auto t1 = Clock::now();
          const double fit_s = seconds_between(t0, t1);
          if (fit_s > timeout_s) {
            sampler.finish();
            rec.timed_out = true;
            if (!warmup) {
              fit_sum += fit_s;
              ++rec.n_runs;
            }
            break;
          }
          ScoredSet scored;
          scored.scores = score_all(*detector, test.sequences);
          const auto t2 = Clock::now();
          scored.labels = test.labels;
          const auto peak = sampler.finish();
          const double score_s = seconds_between(t1, t2);

          if (!warmup) {
            fit_sum += fit_s;
            score_sum += score_s;
            if (peak) {
              mem_sum += *peak;
              ++mem_samples;
            }
            if (train.anomaly_count() > 0 || test.anomaly_count() > 0) {
              map_sum += average_precision(scored);
              ++map_runs;
            }
            ++rec.n_runs;
          }
          if (fit_s + score_s > timeout_s) {
            rec.timed_out = true;
            break;
          }
        }
      } catch (const std::exception&) {
        rec.failed = true;
      }

      if (rec.n_runs > 0) {
        const double n = rec.n_runs;
        rec.fit_time_s = fit_sum / n;
        rec.score_time_s = score_sum / n;
        if (mem_samples > 0) {
          rec.peak_mem_bytes =
              mem_sum / static_cast<std::uint64_t>(mem_samples);
        }
        if (map_runs > 0) rec.map = map_sum / map_runs;
      }
      if (rec.timed_out || rec.failed) skip_rest = rec.timed_out;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

/// CSV schema: algorithm,axis,value,fit_time_s,score_time_s,peak_mem_bytes,
/// map,n_runs,timed_out. Absent memory or MAP fields stay empty.
inline void write_bench_csv(std::span<const BenchRecord> records,
                            std::ostream& out) {
  out << "algorithm,axis,value,fit_time_s,score_time_s,peak_mem_bytes,map,"
         "n_runs,timed_out\n";
  for (const BenchRecord& r : records) {
    out << r.algorithm << ',' << axis_name(r.axis) << ','
        << format_double(r.value) << ',' << format_double(r.fit_time_s) << ','
        << format_double(r.score_time_s) << ',';
    if (r.peak_mem_bytes) out << *r.peak_mem_bytes;
    out << ',';
    if (r.map) out << format_double(*r.map);
    out << ',' << r.n_runs << ',' << (r.timed_out ? "true" : "false") << '\n';
  }
}

/// Desk-scale presets. The samples and length axes hold the total symbol
/// count equal across corresponding points (N * L constant pointwise), so
/// the two sweeps expose the pure effect of each dimension.
inline BenchAxis preset_axis(BenchAxisKind kind) {
  BenchAxis axis;
  axis.kind = kind;
  axis.base.sigma = 10;
  axis.base.anomaly_prop = 0.1;
  switch (kind) {
    case BenchAxisKind::kNumSamples:
      axis.values = {100, 200, 500, 1000, 2000, 5000};
      axis.base.seq_len = 20;
      axis.base.n_sequences = 500;
      break;
    case BenchAxisKind::kSeqLength:
      axis.values = {20, 50, 100, 250, 500, 1000};
      axis.base.seq_len = 20;
      axis.base.n_sequences = 100;
      // Same symbol volumes as the samples axis: N_i * L_i = samples_i * 20.
      axis.paired_samples = {100, 80, 100, 80, 80, 100};
      break;
    case BenchAxisKind::kAnomalyProportion:
      axis.values = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4};
      axis.base.seq_len = 20;
      axis.base.n_sequences = 500;
      break;
  }
  return axis;
}

/// Builds harness tasks from detector specs (the per-run seed reaches
/// detectors that take one).
inline std::vector<BenchTask> bench_tasks_from_specs(
    std::span<const DetectorSpec> specs) {
  std::vector<BenchTask> tasks;
  tasks.reserve(specs.size());
  for (const DetectorSpec& spec : specs) {
    tasks.push_back({spec.name, [spec](std::uint64_t run_seed) {
                       DetectorSpec s = spec;
                       if (detail::detector_accepts_seed(s.name) && !s.seed) {
                         s.seed = run_seed;
                       }
                       return make_detector(s);
                     }});
  }
  return tasks;
}

}  // namespace seqnovel
