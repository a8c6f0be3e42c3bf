#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqnovel/core.hpp"
#include "seqnovel/rng.hpp"
#include "seqnovel/util.hpp"

namespace seqnovel {

/// Discrete-emission hidden Markov model. The emission matrix has sigma + 1
/// columns; the last column carries the mass reserved for symbols that never
/// appeared in training (kUnseenSymbol), so every likelihood stays finite.
struct HmmModel {
  std::vector<double> initial;  // pi, length n_states
  Matrix transition;            // A, n_states x n_states
  Matrix emission;              // B, n_states x (sigma + 1)

  int n_states() const { return static_cast<int>(initial.size()); }
  std::size_t sigma() const { return emission.cols() - 1; }

  std::size_t emission_column(SymbolId id) const {
    return id < 0 || static_cast<std::size_t>(id) >= sigma()
               ? sigma()
               : static_cast<std::size_t>(id);
  }
};

struct HmmTrainConfig {
  int components = 3;
  int max_iters = 30;
  double tol = 1e-2;  // absolute improvement of total train log-likelihood
  std::uint64_t seed = 0;
  double emission_floor = 1e-6;
};

namespace detail {

/// Exact maximizer of sum_b c_b * log(p_b) subject to p_b >= floor and
/// sum_b p_b = 1. Entries whose proportional share would fall below the
/// floor are pinned there; the rest split the remaining mass proportionally.
/// Keeping the M-step a constrained maximum (instead of floor-then-rescale)
/// preserves EM's monotone log-likelihood.
inline void floored_mstep_row(std::span<const double> counts, double floor,
                              std::span<double> out) {
  const std::size_t m = counts.size();
  std::vector<bool> pinned(m, false);
  for (;;) {
    std::size_t n_pinned = 0;
    double unpinned_sum = 0.0;
    for (std::size_t b = 0; b < m; ++b) {
      if (pinned[b]) {
        ++n_pinned;
      } else {
        unpinned_sum += counts[b];
      }
    }
    if (unpinned_sum <= 0.0) {
      // No evidence at all: fall back to the uniform row.
      for (std::size_t b = 0; b < m; ++b) out[b] = 1.0 / static_cast<double>(m);
      return;
    }
    const double free_mass = 1.0 - floor * static_cast<double>(n_pinned);
    bool changed = false;
    for (std::size_t b = 0; b < m; ++b) {
      if (!pinned[b] && counts[b] / unpinned_sum * free_mass < floor) {
        pinned[b] = true;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t b = 0; b < m; ++b) {
        out[b] = pinned[b] ? floor : counts[b] / unpinned_sum * free_mass;
      }
      return;
    }
  }
}

/// Symbols ordered by (training count desc, first occurrence asc). The order
/// is a property of the data itself, so random init values keyed by it make
/// the whole fit equivariant under alphabet relabeling.
inline std::vector<std::size_t> canonical_symbol_order(
    std::span<const Sequence> train, std::size_t sigma) {
  std::vector<std::uint64_t> count(sigma, 0);
  std::vector<std::uint64_t> first(sigma,
                                   std::numeric_limits<std::uint64_t>::max());
  std::uint64_t pos = 0;
  for (const Sequence& s : train) {
    for (SymbolId id : s.symbols) {
      if (id < 0 || static_cast<std::size_t>(id) >= sigma) {
        throw std::invalid_argument(
            "hmm_fit: training sequences must use registered symbol ids");
      }
      const auto u = static_cast<std::size_t>(id);
      ++count[u];
      if (first[u] == std::numeric_limits<std::uint64_t>::max()) first[u] = pos;
      ++pos;
    }
  }
  std::vector<std::size_t> order(sigma);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (count[a] != count[b]) return count[a] > count[b];
    if (first[a] != first[b]) return first[a] < first[b];
    return a < b;
  });
  return order;
}

}  // namespace detail

/// Baum-Welch (EM) over all training sequences, with per-step scaling so no
/// raw probability underflows. pi and A start from seeded uniform-random
/// positive rows; emission rows start from seeded random values assigned
/// through the canonical symbol order of the training data, which keeps the
/// fit equivariant under alphabet relabeling. Stops when the total
/// log-likelihood improves by less than cfg.tol or after cfg.max_iters
/// iterations. `loglik_trace`, when given, receives the per-iteration E-step
/// log-likelihoods.
inline HmmModel hmm_fit(std::span<const Sequence> train, std::size_t sigma,
                        const HmmTrainConfig& cfg,
                        std::vector<double>* loglik_trace = nullptr) {
  if (train.empty()) throw std::invalid_argument("hmm_fit: empty training set");
  if (sigma < 1) throw std::invalid_argument("hmm_fit: sigma must be >= 1");
  if (cfg.components < 1) throw std::invalid_argument("hmm_fit: components >= 1");
  if (cfg.max_iters < 1) throw std::invalid_argument("hmm_fit: max_iters >= 1");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("hmm_fit: tol > 0");
  const std::size_t n_cols = sigma + 1;
  if (!(cfg.emission_floor > 0.0 &&
        cfg.emission_floor < 1.0 / static_cast<double>(n_cols))) {
    throw std::invalid_argument(
        "hmm_fit: emission_floor outside (0, 1/(sigma+1))");
  }

  const std::size_t n = static_cast<std::size_t>(cfg.components);
  const auto order = detail::canonical_symbol_order(train, sigma);
  std::vector<std::size_t> rank(sigma);
  for (std::size_t r = 0; r < sigma; ++r) rank[order[r]] = r;

  // EM runs entirely in canonical symbol space, so the trajectory does not
  // depend on the original symbol ids; columns are mapped back at the end.
  std::vector<std::vector<std::size_t>> obs;
  obs.reserve(train.size());
  for (const Sequence& s : train) {
    std::vector<std::size_t> o(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) {
      o[t] = rank[static_cast<std::size_t>(s.symbols[t])];
    }
    obs.push_back(std::move(o));
  }

  SplitMix64 rng(cfg.seed);
  std::vector<double> pi(n);
  Matrix a(n, n);
  Matrix b(n, n_cols);
  const auto draw_row = [&rng](std::span<double> row) {
    double sum = 0.0;
    for (double& v : row) {
      v = rng.uniform01() + 1e-3;
      sum += v;
    }
    for (double& v : row) v /= sum;
  };
  draw_row(pi);
  for (std::size_t i = 0; i < n; ++i) {
    draw_row({&a(i, 0), n});
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> raw(n_cols);
    for (double& v : raw) v = rng.uniform01() + 1e-3;
    detail::floored_mstep_row(raw, cfg.emission_floor, {&b(i, 0), n_cols});
  }

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<double> pi_acc(n, 0.0);
    Matrix a_num(n, n);
    std::vector<double> a_den(n, 0.0);
    Matrix b_num(n, n_cols);
    double ll = 0.0;

    for (const auto& o : obs) {
      const std::size_t len = o.size();
      // Scaled forward pass; scale[t] is the per-step normalizer, so the
      // sequence log-likelihood is the sum of log scales.
      Matrix fwd(len, n);
      std::vector<double> scale(len);
      double s0 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        fwd(0, i) = pi[i] * b(i, o[0]);
        s0 += fwd(0, i);
      }
      scale[0] = s0;
      for (std::size_t i = 0; i < n; ++i) fwd(0, i) /= s0;
      for (std::size_t t = 1; t < len; ++t) {
        double st = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += fwd(t - 1, i) * a(i, j);
          const double v = acc * b(j, o[t]);
          fwd(t, j) = v;
          st += v;
        }
        scale[t] = st;
        for (std::size_t j = 0; j < n; ++j) fwd(t, j) /= st;
      }
      for (std::size_t t = 0; t < len; ++t) ll += std::log(scale[t]);

      // Scaled backward pass sharing the forward normalizers; the product
      // fwd * bwd is then exactly the state posterior gamma.
      Matrix bwd(len, n);
      for (std::size_t i = 0; i < n; ++i) bwd(len - 1, i) = 1.0;
      for (std::size_t t = len - 1; t-- > 0;) {
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            acc += a(i, j) * b(j, o[t + 1]) * bwd(t + 1, j);
          }
          bwd(t, i) = acc / scale[t + 1];
        }
      }

      for (std::size_t i = 0; i < n; ++i) pi_acc[i] += fwd(0, i) * bwd(0, i);
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          const double g = fwd(t, i) * bwd(t, i);
          b_num(i, o[t]) += g;
          if (t + 1 < len) a_den[i] += g;
        }
      }
      for (std::size_t t = 0; t + 1 < len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          const double base = fwd(t, i) / scale[t + 1];
          for (std::size_t j = 0; j < n; ++j) {
            a_num(i, j) += base * a(i, j) * b(j, o[t + 1]) * bwd(t + 1, j);
          }
        }
      }
    }

    if (loglik_trace) loglik_trace->push_back(ll);
    if (iter > 0 && ll - prev_ll < cfg.tol) break;
    prev_ll = ll;

    const double n_seq = static_cast<double>(obs.size());
    for (std::size_t i = 0; i < n; ++i) pi[i] = pi_acc[i] / n_seq;
    for (std::size_t i = 0; i < n; ++i) {
      if (a_den[i] > 0.0) {
        for (std::size_t j = 0; j < n; ++j) a(i, j) = a_num(i, j) / a_den[i];
      }
      detail::floored_mstep_row({&b_num(i, 0), n_cols}, cfg.emission_floor,
                                {&b(i, 0), n_cols});
    }
  }

  HmmModel model;
  model.initial = std::move(pi);
  model.transition = std::move(a);
  model.emission = Matrix(n, n_cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < sigma; ++s) {
      model.emission(i, s) = b(i, rank[s]);
    }
    model.emission(i, sigma) = b(i, sigma);
  }
  return model;
}

/// log P(x | model) via the scaled forward algorithm; exact for any length.
/// Unknown symbols use the reserved kUnseenSymbol emission column.
inline double forward_loglik(const HmmModel& model, const Sequence& x) {
  const std::size_t n = static_cast<std::size_t>(model.n_states());
  std::vector<double> alpha(n), next(n);
  double ll = 0.0;

  double s = 0.0;
  const std::size_t c0 = model.emission_column(x.symbols[0]);
  for (std::size_t i = 0; i < n; ++i) {
    alpha[i] = model.initial[i] * model.emission(i, c0);
    s += alpha[i];
  }
  ll += std::log(s);
  for (std::size_t i = 0; i < n; ++i) alpha[i] /= s;

  for (std::size_t t = 1; t < x.size(); ++t) {
    const std::size_t ct = model.emission_column(x.symbols[t]);
    s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += alpha[i] * model.transition(i, j);
      next[j] = acc * model.emission(j, ct);
      s += next[j];
    }
    ll += std::log(s);
    for (std::size_t j = 0; j < n; ++j) next[j] /= s;
    std::swap(alpha, next);
  }
  return ll;
}

/// Per-symbol negative log-likelihood; higher = more anomalous.
inline double hmm_score(const HmmModel& model, const Sequence& x) {
  return -forward_loglik(model, x) / static_cast<double>(x.size());
}

/// Plain-text serialization: dimensions, then rows of decimal reals with
/// round-trip precision.
inline void hmm_save(const HmmModel& model, std::ostream& out) {
  const std::size_t n = static_cast<std::size_t>(model.n_states());
  out << "states " << n << "\n";
  out << "symbols " << model.emission.cols() << "\n";
  out << "pi\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << (i > 0 ? " " : "") << format_double(model.initial[i]);
  }
  out << "\ntransitions\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out << (j > 0 ? " " : "") << format_double(model.transition(i, j));
    }
    out << "\n";
  }
  out << "emissions\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < model.emission.cols(); ++j) {
      out << (j > 0 ? " " : "") << format_double(model.emission(i, j));
    }
    out << "\n";
  }
}

inline HmmModel hmm_load(std::istream& in) {
  const auto expect = [&in](const char* word) {
    std::string tok;
    if (!(in >> tok) || tok != word) {
      throw std::runtime_error(std::string("hmm_load: expected '") + word + "'");
    }
  };
  std::size_t n = 0;
  std::size_t cols = 0;
  expect("states");
  if (!(in >> n) || n == 0) throw std::runtime_error("hmm_load: bad state count");
  expect("symbols");
  if (!(in >> cols) || cols < 2) {
    throw std::runtime_error("hmm_load: bad symbol count");
  }
  HmmModel model;
  model.initial.resize(n);
  model.transition = Matrix(n, n);
  model.emission = Matrix(n, cols);
  expect("pi");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> model.initial[i])) throw std::runtime_error("hmm_load: bad pi");
  }
  expect("transitions");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!(in >> model.transition(i, j))) {
        throw std::runtime_error("hmm_load: bad transition row");
      }
    }
  }
  expect("emissions");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!(in >> model.emission(i, j))) {
        throw std::runtime_error("hmm_load: bad emission row");
      }
    }
  }
  // Sanity check: rows must still be stochastic after the text round trip.
  const auto check_row = [](std::span<const double> row, const char* what) {
    double sum = 0.0;
    for (double v : row) {
      if (v < 0.0) throw std::runtime_error(std::string("hmm_load: negative ") + what);
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::runtime_error(std::string("hmm_load: non-stochastic ") + what);
    }
  };
  check_row(model.initial, "pi");
  for (std::size_t i = 0; i < n; ++i) {
    check_row({&model.transition(i, 0), n}, "transition row");
    check_row({&model.emission(i, 0), cols}, "emission row");
  }
  return model;
}

}  // namespace seqnovel
