#pragma once

// Core value types: sparse label sets, per-label propensities, and the
// masking process that turns ground-truth labels into observed labels.

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "pslosses/common.hpp"

namespace pslosses {

// Dense per-label score vector; length must equal the label-space size at
// every use site (checked there).
using ScoreVector = std::vector<double>;

// A set of positive label indices over a label space of size num_labels.
// Indices are kept sorted and unique; absence means the label is negative.
class SparseLabels {
 public:
  SparseLabels() = default;

  SparseLabels(std::vector<std::int32_t> indices, std::int32_t num_labels)
      : indices_(std::move(indices)), num_labels_(num_labels) {
    if (num_labels_ < 0) throw DimensionError("SparseLabels: negative label-space size");
    std::int32_t prev = -1;
    for (const std::int32_t j : indices_) {
      if (j < 0 || j >= num_labels_)
        throw DimensionError("SparseLabels: index " + std::to_string(j) +
                             " outside [0, " + std::to_string(num_labels_) + ")");
      if (j <= prev)
        throw DimensionError("SparseLabels: indices must be strictly increasing");
      prev = j;
    }
  }

  // Accepts any order, sorts, and rejects duplicates.
  static SparseLabels from_unsorted(std::vector<std::int32_t> indices,
                                    std::int32_t num_labels) {
    std::sort(indices.begin(), indices.end());
    return SparseLabels(std::move(indices), num_labels);
  }

  std::int32_t num_labels() const { return num_labels_; }
  std::size_t count() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const std::vector<std::int32_t>& indices() const { return indices_; }

  bool contains(std::int32_t j) const {
    return std::binary_search(indices_.begin(), indices_.end(), j);
  }

  bool operator==(const SparseLabels& other) const {
    return num_labels_ == other.num_labels_ && indices_ == other.indices_;
  }

 private:
  std::vector<std::int32_t> indices_;
  std::int32_t num_labels_ = 0;
};

// Per-label observation propensities, each in (0, 1]. p[j] = 1 means label j
// is never dropped by the masking process.
class Propensities {
 public:
  explicit Propensities(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw DimensionError("Propensities: empty vector");
    for (std::size_t j = 0; j < values_.size(); ++j) {
      const double p = values_[j];
      if (!(p > 0.0) || !(p <= 1.0))
        throw ParameterError("Propensities: p[" + std::to_string(j) + "] = " +
                             format_double(p) + " outside (0, 1]");
    }
  }

  static Propensities uniform(std::int32_t num_labels, double p) {
    if (num_labels <= 0) throw DimensionError("Propensities: non-positive size");
    return Propensities(std::vector<double>(static_cast<std::size_t>(num_labels), p));
  }

  std::int32_t size() const { return static_cast<std::int32_t>(values_.size()); }
  double operator[](std::int32_t j) const { return values_[static_cast<std::size_t>(j)]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

inline void check_same_label_space(const SparseLabels& y, const Propensities& p) {
  if (y.num_labels() != p.size())
    throw DimensionError("label space mismatch: labels over " +
                         std::to_string(y.num_labels()) + " labels, propensities over " +
                         std::to_string(p.size()));
}

inline void check_score_length(const ScoreVector& scores, std::int32_t num_labels) {
  if (static_cast<std::int32_t>(scores.size()) != num_labels)
    throw DimensionError("score vector has length " + std::to_string(scores.size()) +
                         ", expected " + std::to_string(num_labels));
}

// One draw of the observation process: each true positive survives
// independently with its propensity; negatives never become positive. One
// uniform variate is consumed per positive, in index order.
inline SparseLabels apply_mask(const SparseLabels& truth, const Propensities& p, Rng& rng) {
  check_same_label_space(truth, p);
  std::vector<std::int32_t> kept;
  kept.reserve(truth.count());
  for (const std::int32_t j : truth.indices()) {
    if (canonical_double(rng) < p[j]) kept.push_back(j);
  }
  return SparseLabels(std::move(kept), truth.num_labels());
}

// Dense 0/1 view of a sparse label set.
inline std::vector<double> indicator_vector(const SparseLabels& y) {
  std::vector<double> dense(static_cast<std::size_t>(y.num_labels()), 0.0);
  for (const std::int32_t j : y.indices()) dense[static_cast<std::size_t>(j)] = 1.0;
  return dense;
}

}  // namespace pslosses
