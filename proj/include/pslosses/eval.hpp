#pragma once

// Ranking metrics and their propensity-scored counterparts, plus the
// subsampling fallback for instances too heavy for exact estimation and the
// quantile filter used when aggregating unbounded per-example estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"
#include "pslosses/multilabel.hpp"

namespace pslosses {

// Indices of the k highest scores, best first; ties broken by the lower
// index so the ranking is fully deterministic.
inline std::vector<std::int32_t> top_k(const ScoreVector& scores, int k) {
  const std::int32_t l = static_cast<std::int32_t>(scores.size());
  if (k < 1 || k > l)
    throw ParameterError("top_k: k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(l) + "]");
  for (const double s : scores)
    if (std::isnan(s)) throw DomainError("top_k: scores contain NaN");
  std::vector<std::int32_t> order(static_cast<std::size_t>(l));
  for (std::int32_t j = 0; j < l; ++j) order[static_cast<std::size_t>(j)] = j;
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::int32_t a, std::int32_t b) {
                      const double sa = scores[static_cast<std::size_t>(a)];
                      const double sb = scores[static_cast<std::size_t>(b)];
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

inline SparseLabels top_k_labels(const ScoreVector& scores, int k) {
  return SparseLabels::from_unsorted(top_k(scores, k),
                                     static_cast<std::int32_t>(scores.size()));
}

// Fraction of the top-k predictions that are (observed) positives.
inline double precision_at_k(const SparseLabels& y, const ScoreVector& scores, int k) {
  check_score_length(scores, y.num_labels());
  std::size_t hits = 0;
  for (const std::int32_t j : top_k(scores, k))
    if (y.contains(j)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

// Inverse-propensity weighted precision: each observed positive in the top-k
// counts 1/p_j, making the expectation over the mask equal the clean P@k.
inline double ps_precision_at_k(const Propensities& p, const SparseLabels& y,
                                const ScoreVector& scores, int k) {
  check_same_label_space(y, p);
  check_score_length(scores, y.num_labels());
  KahanSum acc;
  for (const std::int32_t j : top_k(scores, k))
    if (y.contains(j)) acc.add(1.0 / p[j]);
  return acc.value() / static_cast<double>(k);
}

inline double recall_at_k(const SparseLabels& y, const ScoreVector& scores, int k) {
  check_score_length(scores, y.num_labels());
  return vanilla_recall(y, top_k_labels(scores, k));
}

// Unbiased recall estimate for instances whose observed positives exceed the
// enumeration cap: repeatedly thin the labels (each kept with prob. 1/2,
// which composes with the masking to propensities p/2) until under the cap,
// evaluate the exact estimate there, and average over rounds. Under-cap
// inputs take the exact path directly and consume no randomness.
inline double subsampled_ps_recall(const Propensities& p, const SparseLabels& y,
                                   const SparseLabels& predicted, Rng& rng,
                                   int rounds = 100, int cap = kDefaultEnumerationCap) {
  check_same_label_space(y, p);
  if (rounds < 1) throw ParameterError("subsampled_ps_recall: rounds must be positive");
  if (static_cast<int>(y.count()) <= cap) return ps_recall(p, y, predicted, cap);

  // Thinned propensity vectors by halving depth, built on demand.
  std::vector<Propensities> scaled;
  scaled.reserve(4);
  auto scaled_at_depth = [&](int depth) -> const Propensities& {
    while (static_cast<int>(scaled.size()) < depth) {
      std::vector<double> v = scaled.empty() ? p.values() : scaled.back().values();
      for (double& x : v) x *= 0.5;
      scaled.emplace_back(std::move(v));
    }
    return scaled[static_cast<std::size_t>(depth - 1)];
  };

  KahanSum acc;
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::int32_t> kept(y.indices());
    int depth = 0;
    while (static_cast<int>(kept.size()) > cap) {
      std::vector<std::int32_t> next;
      next.reserve(kept.size());
      for (const std::int32_t j : kept)
        if (canonical_double(rng) < 0.5) next.push_back(j);
      kept = std::move(next);
      ++depth;
    }
    acc.add(ps_recall(scaled_at_depth(depth), SparseLabels(kept, y.num_labels()),
                      predicted, cap));
  }
  return acc.value() / static_cast<double>(rounds);
}

// Unbiased R@k; instances over the cap go through the subsampling path.
inline double ps_recall_at_k(const Propensities& p, const SparseLabels& y,
                             const ScoreVector& scores, int k, Rng& rng,
                             int rounds = 100, int cap = kDefaultEnumerationCap) {
  check_score_length(scores, y.num_labels());
  const SparseLabels predicted = top_k_labels(scores, k);
  if (static_cast<int>(y.count()) <= cap) return ps_recall(p, y, predicted, cap);
  return subsampled_ps_recall(p, y, predicted, rng, rounds, cap);
}

// ---------------------------------------------------------------------------
// Quantile filtering. Per-example PS estimates are unbounded (weights 1/p),
// so aggregate reports optionally trim both tails. Quantiles use linear
// interpolation on the order statistics; values strictly below the lower or
// strictly above the upper quantile are dropped.

struct FilteredValues {
  std::vector<double> kept;
  double lower_cut = 0.0;
  double upper_cut = 0.0;
  double filtered_fraction = 0.0;
};

namespace detail {

// Interpolated order statistic of a sorted sample at probability q.
inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

inline FilteredValues quantile_filter(const std::vector<double>& values, double lower_q,
                                      double upper_q) {
  if (!(lower_q >= 0.0) || !(upper_q >= 0.0) || !(lower_q + upper_q < 1.0))
    throw ParameterError("quantile_filter: need lower_q, upper_q >= 0 and lower_q + upper_q < 1");
  FilteredValues out;
  if (values.empty()) return out;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  out.lower_cut = detail::interpolated_quantile(sorted, lower_q);
  out.upper_cut = detail::interpolated_quantile(sorted, 1.0 - upper_q);
  out.kept.reserve(values.size());
  for (const double v : values)
    if (v >= out.lower_cut && v <= out.upper_cut) out.kept.push_back(v);
  out.filtered_fraction = static_cast<double>(values.size() - out.kept.size()) /
                          static_cast<double>(values.size());
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate summary of one per-example metric.

struct MetricSummary {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation (n - 1), 0 for n <= 1
  std::size_t count = 0;
  double filtered_fraction = 0.0;
};

using MetricReport = std::map<std::string, MetricSummary>;

inline MetricSummary summarize_values(const std::vector<double>& values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  KahanSum total;
  for (const double v : values) total.add(v);
  s.mean = total.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    KahanSum sq;
    for (const double v : values) sq.add((v - s.mean) * (v - s.mean));
    s.stdev = std::sqrt(sq.value() / static_cast<double>(values.size() - 1));
  }
  return s;
}

// Summary after two-sided quantile trimming (pass 0 for either side to keep
// that tail). The trim is recorded, never silent.
inline MetricSummary summarize_filtered(const std::vector<double>& values, double lower_q,
                                        double upper_q) {
  const FilteredValues filtered = quantile_filter(values, lower_q, upper_q);
  MetricSummary s = summarize_values(filtered.kept);
  s.filtered_fraction = filtered.filtered_fraction;
  return s;
}

}  // namespace pslosses
