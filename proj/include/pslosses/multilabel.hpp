#pragma once

// Multilabel estimators under label masking. The general construction turns
// any clean loss f(y, s) into an observed-label estimator whose expectation
// over the masking process recovers the clean value:
//
//   f_obs(y, s) = sum over subsets J of the observed positives I(y) of
//                 f(J, s) * prod_{j in J} (1/p_j) * prod_{j in I\J} ((p_j-1)/p_j)
//
// The subset coefficients sum to 1 but alternate in sign, hence the
// compensated accumulation and the hard cap on |I(y)| (cost doubles per
// observed positive). Specialized reductions (one-vs-all, pick-all-labels,
// their normalized versions, pairwise) avoid the exponential path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pslosses/binary.hpp"
#include "pslosses/common.hpp"
#include "pslosses/core.hpp"

namespace pslosses {

inline constexpr int kDefaultEnumerationCap = 25;

namespace detail {

// Visits every subset of `labels` (given per-element in/out factors) in
// increasing-cardinality, lexicographic order. The visitor receives the
// chosen label indices and the product of the chosen alpha / omitted beta
// factors; products are maintained incrementally along the recursion, one
// multiply per step, so no per-subset rebuild and no division (beta may be 0).
template <typename Visitor>
void for_each_weighted_subset(const std::vector<std::int32_t>& labels,
                              const std::vector<double>& alpha,
                              const std::vector<double>& beta, Visitor&& visit) {
  const std::size_t m = labels.size();
  std::vector<double> suffix_beta(m + 1, 1.0);  // product of beta[t..m)
  for (std::size_t t = m; t > 0; --t) suffix_beta[t - 1] = suffix_beta[t] * beta[t - 1];

  std::vector<std::int32_t> chosen;
  chosen.reserve(m);
  // Chooses `need` more elements from positions [pos, m); acc carries the
  // factors of all decided positions.
  auto recurse = [&](auto&& self, std::size_t pos, std::size_t need, double acc) -> void {
    if (need == 0) {
      visit(static_cast<const std::vector<std::int32_t>&>(chosen), acc * suffix_beta[pos]);
      return;
    }
    if (m - pos < need) return;
    chosen.push_back(labels[pos]);
    self(self, pos + 1, need - 1, acc * alpha[pos]);
    chosen.pop_back();
    self(self, pos + 1, need, acc * beta[pos]);
  };
  for (std::size_t k = 0; k <= m; ++k) recurse(recurse, 0, k, 1.0);
}

inline void check_enumeration_cap(std::size_t observed_positives, int cap) {
  if (static_cast<int>(observed_positives) > cap)
    throw CapacityError("instance has " + std::to_string(observed_positives) +
                        " observed positives, above the enumeration cap of " +
                        std::to_string(cap) + "; subsample first");
}

// Elementary symmetric sums e[0..n] of the given values (e[k] = sum over all
// k-subsets of the product), by the standard one-value-at-a-time update.
inline std::vector<double> elementary_symmetric_sums(const std::vector<double>& values) {
  std::vector<double> e(values.size() + 1, 0.0);
  e[0] = 1.0;
  std::size_t used = 0;
  for (const double x : values) {
    ++used;
    for (std::size_t k = used; k >= 1; --k) e[k] += x * e[k - 1];
  }
  return e;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// General unbiased estimator for an arbitrary clean loss.

using MultilabelLoss =
    std::function<double(const SparseLabels&, const ScoreVector&)>;

inline double unbiased_general(const MultilabelLoss& clean_loss, const Propensities& p,
                               const SparseLabels& y, const ScoreVector& scores,
                               int cap = kDefaultEnumerationCap) {
  check_same_label_space(y, p);
  check_score_length(scores, y.num_labels());
  detail::check_enumeration_cap(y.count(), cap);

  const auto& idx = y.indices();
  std::vector<double> alpha(idx.size()), beta(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const double pj = p[idx[t]];
    alpha[t] = 1.0 / pj;
    beta[t] = (pj - 1.0) / pj;
  }
  KahanSum acc;
  detail::for_each_weighted_subset(
      idx, alpha, beta, [&](const std::vector<std::int32_t>& subset, double coeff) {
        acc.add(coeff * clean_loss(SparseLabels(subset, y.num_labels()), scores));
      });
  return acc.value();
}

// ---------------------------------------------------------------------------
// Per-label weights for the normalized reductions.

// Exact unbiased weights: label i's weight is the subset-sum estimate of
// y*_i / |I(y*)|. Single observed label -> 1/p_i; all p = 1 -> 1/|I(y)|.
// Returned dense (length l, zero off the observed positives).
inline std::vector<double> normalized_unbiased_weights(const Propensities& p,
                                                       const SparseLabels& y,
                                                       int cap = kDefaultEnumerationCap) {
  check_same_label_space(y, p);
  detail::check_enumeration_cap(y.count(), cap);
  std::vector<double> weights(static_cast<std::size_t>(y.num_labels()), 0.0);
  if (y.empty()) return weights;

  const auto& idx = y.indices();
  std::vector<double> alpha(idx.size()), beta(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const double pj = p[idx[t]];
    alpha[t] = 1.0 / pj;
    beta[t] = (pj - 1.0) / pj;
  }
  std::vector<KahanSum> acc(idx.size());
  // Map from label id to its position in idx for the accumulation below.
  detail::for_each_weighted_subset(
      idx, alpha, beta, [&](const std::vector<std::int32_t>& subset, double coeff) {
        if (subset.empty()) return;
        const double share = coeff / static_cast<double>(subset.size());
        for (const std::int32_t j : subset) {
          // subset members are a subsequence of idx; find the position.
          const auto it = std::lower_bound(idx.begin(), idx.end(), j);
          acc[static_cast<std::size_t>(it - idx.begin())].add(share);
        }
      });
  for (std::size_t t = 0; t < idx.size(); ++t)
    weights[static_cast<std::size_t>(idx[t])] = acc[t].value();
  return weights;
}

// Cheap surrogate weights whose expectation upper-bounds the clean weight
// (Jensen against the convex reciprocal):
//   w_i = (1/p_i) / (1 + sum_{j in I(y), j != i} 1/p_j).
// `include_self` switches to the variant that keeps the i-th term in the
// denominator as well.
inline std::vector<double> normalized_upper_bound_weights(const Propensities& p,
                                                          const SparseLabels& y,
                                                          bool include_self = false) {
  check_same_label_space(y, p);
  std::vector<double> weights(static_cast<std::size_t>(y.num_labels()), 0.0);
  if (y.empty()) return weights;
  double inv_sum = 0.0;
  for (const std::int32_t j : y.indices()) inv_sum += 1.0 / p[j];
  for (const std::int32_t j : y.indices()) {
    const double inv = 1.0 / p[j];
    const double denom = include_self ? 1.0 + inv_sum : 1.0 + (inv_sum - inv);
    weights[static_cast<std::size_t>(j)] = inv / denom;
  }
  return weights;
}

// ---------------------------------------------------------------------------
// Per-example recall and its unbiased estimate.

// |truth ∩ predicted| / |truth|, with the empty-truth convention of 0.
inline double vanilla_recall(const SparseLabels& y, const SparseLabels& predicted) {
  if (y.num_labels() != predicted.num_labels())
    throw DimensionError("vanilla_recall: label spaces differ");
  if (y.empty()) return 0.0;
  std::size_t hits = 0;
  for (const std::int32_t j : y.indices())
    if (predicted.contains(j)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y.count());
}

// Unbiased estimate of recall against the unobserved truth. Equivalent to
// unbiased_general applied to vanilla_recall, but evaluated in polynomial
// time: group the subset sum by how many predicted / unpredicted positives
// are chosen, which reduces it to elementary symmetric sums of 1/(p_j - 1).
// Labels with p_j = 1 are never dropped and enter every subset, so they are
// split off first (this also keeps the p = 1 case an exact integer ratio).
inline double ps_recall(const Propensities& p, const SparseLabels& y,
                        const SparseLabels& predicted, int cap = kDefaultEnumerationCap) {
  check_same_label_space(y, p);
  if (y.num_labels() != predicted.num_labels())
    throw DimensionError("ps_recall: label spaces differ");
  detail::check_enumeration_cap(y.count(), cap);
  if (y.empty()) return 0.0;

  std::size_t certain_hits = 0, certain_misses = 0;
  std::vector<double> hit_inv, miss_inv;  // 1/(p_j - 1) per uncertain label
  for (const std::int32_t j : y.indices()) {
    const bool hit = predicted.contains(j);
    if (p[j] == 1.0) {
      (hit ? certain_hits : certain_misses) += 1;
    } else {
      (hit ? hit_inv : miss_inv).push_back(1.0 / (p[j] - 1.0));
    }
  }

  if (hit_inv.empty() && miss_inv.empty()) {
    if (certain_hits == 0) return 0.0;
    return static_cast<double>(certain_hits) /
           static_cast<double>(certain_hits + certain_misses);
  }

  double scale = 1.0;  // prod over uncertain labels of (p_j - 1)/p_j
  for (const std::int32_t j : y.indices())
    if (p[j] != 1.0) scale *= (p[j] - 1.0) / p[j];

  const std::vector<double> e_hit = detail::elementary_symmetric_sums(hit_inv);
  const std::vector<double> e_miss = detail::elementary_symmetric_sums(miss_inv);
  KahanSum total;
  for (std::size_t v = 0; v < e_hit.size(); ++v) {
    const double hits = static_cast<double>(v + certain_hits);
    if (hits == 0.0) continue;  // recall of a subset with no predicted positives
    for (std::size_t u = 0; u < e_miss.size(); ++u) {
      const double size = hits + static_cast<double>(u + certain_misses);
      total.add(hits / size * e_hit[v] * e_miss[u]);
    }
  }
  return scale * total.value();
}

struct RecallExpectationCheck {
  double expected_estimate = 0.0;  // exact expectation of ps_recall over all masks
  double clean_recall = 0.0;       // vanilla recall of the unmasked truth
};

// Brute-force identity check: averaging ps_recall over every mask outcome of
// `truth` must reproduce the clean recall. |truth| is capped at 20.
inline RecallExpectationCheck ps_recall_expectation_check(const Propensities& p,
                                                          const SparseLabels& truth,
                                                          const SparseLabels& predicted) {
  check_same_label_space(truth, p);
  const auto& idx = truth.indices();
  const int m = static_cast<int>(idx.size());
  if (m > 20)
    throw CapacityError("ps_recall_expectation_check: more than 20 true positives");
  RecallExpectationCheck out;
  out.clean_recall = vanilla_recall(truth, predicted);
  KahanSum acc;
  std::vector<std::int32_t> kept;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    kept.clear();
    double prob = 1.0;
    for (int i = 0; i < m; ++i) {
      const std::int32_t j = idx[static_cast<std::size_t>(i)];
      if (mask & (1u << i)) {
        kept.push_back(j);
        prob *= p[j];
      } else {
        prob *= 1.0 - p[j];
      }
    }
    acc.add(prob * ps_recall(p, SparseLabels(kept, truth.num_labels()), predicted,
                             /*cap=*/m));
  }
  out.expected_estimate = acc.value();
  return out;
}

// ---------------------------------------------------------------------------
// Reductions: one-vs-all (ova), pick-all-labels (pal), and their normalized
// versions. pal-type reductions consume a multiclass base loss; the default
// is softmax cross-entropy.

enum class ReductionKind { ova, pal, ova_n, pal_n };

inline const char* to_string(ReductionKind k) {
  switch (k) {
    case ReductionKind::ova: return "ova";
    case ReductionKind::pal: return "pal";
    case ReductionKind::ova_n: return "ova-n";
    case ReductionKind::pal_n: return "pal-n";
  }
  return "?";
}

using MulticlassLoss = std::function<double(std::int32_t, const ScoreVector&)>;

inline double log_sum_exp(const ScoreVector& scores) {
  if (scores.empty()) throw DimensionError("log_sum_exp of an empty vector");
  double hi = scores[0];
  for (const double s : scores) hi = std::max(hi, s);
  KahanSum acc;
  for (const double s : scores) acc.add(std::exp(s - hi));
  return hi + std::log(acc.value());
}

inline double softmax_cross_entropy(std::int32_t i, const ScoreVector& scores) {
  if (i < 0 || static_cast<std::size_t>(i) >= scores.size())
    throw DimensionError("softmax_cross_entropy: class index out of range");
  return log_sum_exp(scores) - scores[static_cast<std::size_t>(i)];
}

struct Reduction {
  ReductionKind kind = ReductionKind::ova;
  BinaryLoss base{};                  // used by ova / ova_n
  Variant variant = Variant::vanilla;
  bool tilde_includes_self = false;   // denominator flag for the normalized upper bound
  int cap = kDefaultEnumerationCap;   // subset cap for the normalized unbiased weights

  std::string name() const {
    std::string n = to_string(kind);
    n += ":";
    n += (kind == ReductionKind::pal || kind == ReductionKind::pal_n)
             ? "cce"
             : to_string(base.kind);
    n += ":";
    n += to_string(variant);
    return n;
  }
};

namespace detail {

// Weights over the observed positives used by the normalized reductions.
inline std::vector<double> normalized_reduction_weights(const Reduction& reduction,
                                                        const Propensities& p,
                                                        const SparseLabels& y) {
  switch (reduction.variant) {
    case Variant::vanilla: {
      std::vector<double> w(static_cast<std::size_t>(y.num_labels()), 0.0);
      if (!y.empty()) {
        const double share = 1.0 / static_cast<double>(y.count());
        for (const std::int32_t j : y.indices()) w[static_cast<std::size_t>(j)] = share;
      }
      return w;
    }
    case Variant::unbiased:
      return normalized_unbiased_weights(p, y, reduction.cap);
    case Variant::upper_bound:
      return normalized_upper_bound_weights(p, y, reduction.tilde_includes_self);
  }
  throw ParameterError("unknown variant");
}

}  // namespace detail

// Value of the reduced loss for one example. `multiclass` overrides the
// softmax cross-entropy base of the pal reductions (value path only).
inline double reduction_loss(const Reduction& reduction, const Propensities& p,
                             const SparseLabels& y, const ScoreVector& scores,
                             const MulticlassLoss& multiclass = {}) {
  check_same_label_space(y, p);
  check_score_length(scores, y.num_labels());
  const std::int32_t l = y.num_labels();

  switch (reduction.kind) {
    case ReductionKind::ova: {
      KahanSum acc;
      for (std::int32_t j = 0; j < l; ++j) {
        const int yj = y.contains(j) ? 1 : 0;
        const double s = scores[static_cast<std::size_t>(j)];
        switch (reduction.variant) {
          case Variant::vanilla: acc.add(reduction.base.value(yj, s)); break;
          case Variant::unbiased: acc.add(ps_loss(reduction.base, p[j], yj, s)); break;
          case Variant::upper_bound:
            acc.add(binary_upper_bound(reduction.base, p[j], yj, s));
            break;
        }
      }
      return acc.value();
    }
    case ReductionKind::pal: {
      // Unbiased and upper-bound coincide here: the clean loss is linear in
      // the label indicators, so inverse-propensity weights are exact.
      KahanSum acc;
      for (const std::int32_t i : y.indices()) {
        const double g = multiclass ? multiclass(i, scores) : softmax_cross_entropy(i, scores);
        const double w = reduction.variant == Variant::vanilla ? 1.0 : 1.0 / p[i];
        acc.add(w * g);
      }
      return acc.value();
    }
    case ReductionKind::ova_n: {
      const std::vector<double> w = detail::normalized_reduction_weights(reduction, p, y);
      KahanSum acc;
      for (std::int32_t j = 0; j < l; ++j) {
        const double s = scores[static_cast<std::size_t>(j)];
        const double neg = reduction.base.value_neg(s);
        acc.add(neg);
        const double wj = w[static_cast<std::size_t>(j)];
        if (wj != 0.0) acc.add(wj * (reduction.base.value_pos(s) - neg));
      }
      return acc.value();
    }
    case ReductionKind::pal_n: {
      const std::vector<double> w = detail::normalized_reduction_weights(reduction, p, y);
      KahanSum acc;
      for (const std::int32_t i : y.indices()) {
        const double wi = w[static_cast<std::size_t>(i)];
        if (wi == 0.0) continue;
        const double g = multiclass ? multiclass(i, scores) : softmax_cross_entropy(i, scores);
        acc.add(wi * g);
      }
      return acc.value();
    }
  }
  throw ParameterError("unknown reduction kind");
}

// Value plus d(value)/d(scores); built-in bases only (binary base for ova
// reductions, softmax cross-entropy for pal reductions). `grad` is resized
// and overwritten.
inline double reduction_loss_gradient(const Reduction& reduction, const Propensities& p,
                                      const SparseLabels& y, const ScoreVector& scores,
                                      std::vector<double>& grad) {
  check_same_label_space(y, p);
  check_score_length(scores, y.num_labels());
  const std::int32_t l = y.num_labels();
  grad.assign(static_cast<std::size_t>(l), 0.0);

  switch (reduction.kind) {
    case ReductionKind::ova: {
      KahanSum acc;
      for (std::int32_t j = 0; j < l; ++j) {
        const int yj = y.contains(j) ? 1 : 0;
        const double s = scores[static_cast<std::size_t>(j)];
        double value = 0.0, slope = 0.0;
        switch (reduction.variant) {
          case Variant::vanilla:
            value = reduction.base.value(yj, s);
            slope = reduction.base.gradient(yj, s);
            break;
          case Variant::unbiased:
            value = ps_loss(reduction.base, p[j], yj, s);
            slope = ps_gradient(reduction.base, p[j], yj, s);
            break;
          case Variant::upper_bound:
            value = binary_upper_bound(reduction.base, p[j], yj, s);
            slope = binary_upper_bound_gradient(reduction.base, p[j], yj, s);
            break;
        }
        acc.add(value);
        grad[static_cast<std::size_t>(j)] = slope;
      }
      return acc.value();
    }
    case ReductionKind::pal:
    case ReductionKind::pal_n: {
      std::vector<double> w(static_cast<std::size_t>(l), 0.0);
      if (reduction.kind == ReductionKind::pal) {
        for (const std::int32_t i : y.indices())
          w[static_cast<std::size_t>(i)] =
              reduction.variant == Variant::vanilla ? 1.0 : 1.0 / p[i];
      } else {
        w = detail::normalized_reduction_weights(reduction, p, y);
      }
      const double lse = log_sum_exp(scores);
      KahanSum acc, weight_sum;
      for (const std::int32_t i : y.indices()) {
        const double wi = w[static_cast<std::size_t>(i)];
        acc.add(wi * (lse - scores[static_cast<std::size_t>(i)]));
        weight_sum.add(wi);
      }
      const double total_weight = weight_sum.value();
      for (std::int32_t j = 0; j < l; ++j) {
        const double soft = std::exp(scores[static_cast<std::size_t>(j)] - lse);
        grad[static_cast<std::size_t>(j)] =
            total_weight * soft - w[static_cast<std::size_t>(j)];
      }
      return acc.value();
    }
    case ReductionKind::ova_n: {
      const std::vector<double> w = detail::normalized_reduction_weights(reduction, p, y);
      KahanSum acc;
      for (std::int32_t j = 0; j < l; ++j) {
        const double s = scores[static_cast<std::size_t>(j)];
        const double neg = reduction.base.value_neg(s);
        const double neg_slope = reduction.base.grad_neg(s);
        acc.add(neg);
        double slope = neg_slope;
        const double wj = w[static_cast<std::size_t>(j)];
        if (wj != 0.0) {
          acc.add(wj * (reduction.base.value_pos(s) - neg));
          slope += wj * (reduction.base.grad_pos(s) - neg_slope);
        }
        grad[static_cast<std::size_t>(j)] = slope;
      }
      return acc.value();
    }
  }
  throw ParameterError("unknown reduction kind");
}

// ---------------------------------------------------------------------------
// Pairwise losses. The base g(a, b, s_i, s_j) scores the pair (i, j) under
// hypothetical labels (a, b); the clean loss sums g(y_i, y_j, s_i, s_j) over
// all i < j.

using PairwiseBase = std::function<double(int, int, double, double)>;

inline double pairwise_vanilla(const SparseLabels& y, const ScoreVector& scores,
                               const PairwiseBase& g) {
  check_score_length(scores, y.num_labels());
  const std::int32_t l = y.num_labels();
  const std::vector<double> ind = indicator_vector(y);
  KahanSum acc;
  for (std::int32_t i = 0; i < l; ++i)
    for (std::int32_t j = i + 1; j < l; ++j)
      acc.add(g(static_cast<int>(ind[static_cast<std::size_t>(i)]),
                static_cast<int>(ind[static_cast<std::size_t>(j)]),
                scores[static_cast<std::size_t>(i)], scores[static_cast<std::size_t>(j)]));
  return acc.value();
}

// Unbiased estimate of the clean pairwise loss from the observed labels. The
// pair (i, j) only needs the joint masking of two labels, so the correction
// stays a 4-term sum per pair:
//   (1/(p_i p_j)) * sum_{a,b in {0,1}} ((2a-1) y_i + p_i (1-a)) *
//                                      ((2b-1) y_j + p_j (1-b)) * g(a, b, s_i, s_j).
inline double pairwise_unbiased(const Propensities& p, const SparseLabels& y,
                                const ScoreVector& scores, const PairwiseBase& g) {
  check_same_label_space(y, p);
  check_score_length(scores, y.num_labels());
  const std::int32_t l = y.num_labels();
  const std::vector<double> ind = indicator_vector(y);
  KahanSum acc;
  for (std::int32_t i = 0; i < l; ++i) {
    const double yi = ind[static_cast<std::size_t>(i)];
    for (std::int32_t j = i + 1; j < l; ++j) {
      const double yj = ind[static_cast<std::size_t>(j)];
      const double inv = 1.0 / (p[i] * p[j]);
      for (int a = 0; a <= 1; ++a) {
        const double wi = (2.0 * a - 1.0) * yi + p[i] * (1.0 - a);
        for (int b = 0; b <= 1; ++b) {
          const double wj = (2.0 * b - 1.0) * yj + p[j] * (1.0 - b);
          if (wi == 0.0 || wj == 0.0) continue;
          acc.add(inv * wi * wj *
                  g(a, b, scores[static_cast<std::size_t>(i)],
                    scores[static_cast<std::size_t>(j)]));
        }
      }
    }
  }
  return acc.value();
}

// Ranking special case: g(0,0,...) = g(1,1,...) = 0 (ties in the labels carry
// no penalty), which collapses the 4-term correction to two terms per pair.
inline double kendall_tau_unbiased(const Propensities& p, const SparseLabels& y,
                                   const ScoreVector& scores, const PairwiseBase& g) {
  check_same_label_space(y, p);
  check_score_length(scores, y.num_labels());
  const std::int32_t l = y.num_labels();
  const std::vector<double> ind = indicator_vector(y);
  KahanSum acc;
  for (std::int32_t i = 0; i < l; ++i) {
    const double yi = ind[static_cast<std::size_t>(i)];
    for (std::int32_t j = i + 1; j < l; ++j) {
      const double yj = ind[static_cast<std::size_t>(j)];
      if (yi == 0.0 && yj == 0.0) continue;
      const double inv = 1.0 / (p[i] * p[j]);
      const double si = scores[static_cast<std::size_t>(i)];
      const double sj = scores[static_cast<std::size_t>(j)];
      if (yj != 0.0) acc.add(inv * (p[i] - yi) * yj * g(0, 1, si, sj));
      if (yi != 0.0) acc.add(inv * yi * (p[j] - yj) * g(1, 0, si, sj));
    }
  }
  return acc.value();
}

}  // namespace pslosses
