#pragma once

// Test-support oracles: brute-force references the fast estimators are
// checked against. Everything here trades speed for obvious correctness.
// Not pulled in by the umbrella header; include explicitly where needed.

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"

namespace pslosses::testing {

inline constexpr int kMaxEnumeratedTruth = 20;  // 2^20 mask outcomes
inline constexpr int kMaxCorruptionLabels = 12;

// Probability that masking `truth` yields exactly `kept` (kept must be a
// subset of truth; contributions are per-label independent).
inline double mask_probability(const SparseLabels& truth, const SparseLabels& kept,
                               const Propensities& p) {
  check_same_label_space(truth, p);
  double prob = 1.0;
  for (const std::int32_t j : truth.indices())
    prob *= kept.contains(j) ? p[j] : 1.0 - p[j];
  for (const std::int32_t j : kept.indices())
    if (!truth.contains(j))
      throw ParameterError("mask_probability: kept labels must be a subset of the truth");
  return prob;
}

// Exact expectation of `estimator` over every mask outcome of `truth`:
// sum over all 2^|truth| kept-subsets of P[subset] * estimator(subset).
// The estimator sees the observed labels; bind scores etc. in the closure.
inline double exact_expectation(const std::function<double(const SparseLabels&)>& estimator,
                                const SparseLabels& truth, const Propensities& p) {
  check_same_label_space(truth, p);
  const auto& idx = truth.indices();
  const int m = static_cast<int>(idx.size());
  if (m > kMaxEnumeratedTruth)
    throw CapacityError("exact_expectation: " + std::to_string(m) +
                        " positives exceed the enumeration limit of " +
                        std::to_string(kMaxEnumeratedTruth));
  KahanSum acc;
  std::vector<std::int32_t> kept;
  kept.reserve(idx.size());
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    kept.clear();
    double prob = 1.0;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) {
        kept.push_back(idx[static_cast<std::size_t>(i)]);
        prob *= p[idx[static_cast<std::size_t>(i)]];
      } else {
        prob *= 1.0 - p[idx[static_cast<std::size_t>(i)]];
      }
    }
    acc.add(prob * estimator(SparseLabels(kept, truth.num_labels())));
  }
  return acc.value();
}

namespace detail {

inline SparseLabels labels_from_mask(std::uint32_t mask, std::int32_t num_labels) {
  std::vector<std::int32_t> idx;
  for (std::int32_t j = 0; j < num_labels; ++j)
    if (mask & (1u << j)) idx.push_back(j);
  return SparseLabels(std::move(idx), num_labels);
}

}  // namespace detail

// Independent route to the unbiased estimate, via the corruption-matrix
// construction: enumerate the full 2^l state space, build the transition
// matrix T[observed, true] = prod_{i in observed} p_i * prod_{i in true\observed}
// (1 - p_i) * [observed subset of true], and solve the adjoint system
// T^T f = f_clean. The returned value is f at the observed state. Because
// labels are only ever dropped, T is triangular under bitmask order, so the
// solve is a forward substitution over submasks (the matrix is kept in the
// factored form prodP[mask] * prodQ[mask] rather than materialized).
inline double corruption_matrix_estimate(
    const std::function<double(const SparseLabels&)>& clean_loss,
    const SparseLabels& observed, const Propensities& p) {
  check_same_label_space(observed, p);
  const std::int32_t l = p.size();
  if (l > kMaxCorruptionLabels)
    throw CapacityError("corruption_matrix_estimate: " + std::to_string(l) +
                        " labels exceed the dense-solve limit of " +
                        std::to_string(kMaxCorruptionLabels));
  const std::uint32_t num_states = 1u << l;

  std::vector<double> prod_p(num_states, 1.0);   // prod over set bits of p_i
  std::vector<double> prod_q(num_states, 1.0);   // prod over set bits of (1 - p_i)
  for (std::uint32_t s = 1; s < num_states; ++s) {
    const int low = std::countr_zero(s);
    prod_p[s] = prod_p[s & (s - 1)] * p[low];
    prod_q[s] = prod_q[s & (s - 1)] * (1.0 - p[low]);
  }

  std::vector<double> f(num_states, 0.0);
  for (std::uint32_t s = 0; s < num_states; ++s) {
    // Row s of T^T: entries T[t, s] for observed states t subset of s.
    KahanSum acc;
    acc.add(clean_loss(detail::labels_from_mask(s, l)));
    if (s != 0) {
      for (std::uint32_t t = (s - 1) & s;; t = (t - 1) & s) {
        acc.add(-prod_p[t] * prod_q[s & ~t] * f[t]);
        if (t == 0) break;
      }
    }
    const double diag = prod_p[s];
    if (!(diag > 0.0)) throw Error("corruption_matrix_estimate: singular diagonal");
    f[s] = acc.value() / diag;
  }

  std::uint32_t observed_mask = 0;
  for (const std::int32_t j : observed.indices()) observed_mask |= 1u << j;
  return f[observed_mask];
}

// Central-difference gradient of f at `at`; per-coordinate step scales with
// the coordinate's magnitude so tiny and huge scores both get sane steps.
inline std::vector<double> finite_diff_gradient(
    const std::function<double(const ScoreVector&)>& f, const ScoreVector& at,
    double h = 1e-6) {
  std::vector<double> grad(at.size(), 0.0);
  ScoreVector probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(at[i]));
    probe[i] = at[i] + step;
    const double up = f(probe);
    probe[i] = at[i] - step;
    const double down = f(probe);
    probe[i] = at[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Scalar convenience for the binary losses.
inline double finite_diff_scalar(const std::function<double(double)>& f, double at,
                                 double h = 1e-6) {
  const double step = h * std::max(1.0, std::abs(at));
  return (f(at + step) - f(at - step)) / (2.0 * step);
}

}  // namespace pslosses::testing
