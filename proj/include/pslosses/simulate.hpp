#pragma once

// Synthetic experiments: label-only instances for the recall variance study
// and a linear-teacher dataset generator for the training experiments.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"
#include "pslosses/data.hpp"
#include "pslosses/eval.hpp"
#include "pslosses/multilabel.hpp"

namespace pslosses {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Label-only instances: each label positive independently with label_prob.

struct SyntheticSpec {
  std::int32_t num_labels = 100;
  double label_prob = 0.1;
  std::size_t num_examples = 10000;
  std::uint64_t seed = 0;
};

inline std::vector<SparseLabels> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_labels < 1) throw ParameterError("generate_synthetic: need at least one label");
  if (!(spec.label_prob >= 0.0) || !(spec.label_prob <= 1.0))
    throw ParameterError("generate_synthetic: label_prob outside [0, 1]");
  Rng rng(derive_seed(spec.seed, 0));
  std::vector<SparseLabels> out;
  out.reserve(spec.num_examples);
  std::vector<std::int32_t> idx;
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    idx.clear();
    for (std::int32_t j = 0; j < spec.num_labels; ++j)
      if (canonical_double(rng) < spec.label_prob) idx.push_back(j);
    out.emplace_back(idx, spec.num_labels);
  }
  return out;
}

// The idealized predictor of the variance study: it names exactly one
// uniformly chosen true positive (nothing for empty truth).
inline SparseLabels oracle_prediction(const SparseLabels& truth, Rng& rng) {
  if (truth.empty()) return SparseLabels({}, truth.num_labels());
  const std::int32_t pick =
      truth.indices()[uniform_index(rng, truth.count())];
  return SparseLabels({pick}, truth.num_labels());
}

// ---------------------------------------------------------------------------
// Recall variance sweep: fix one synthetic dataset and one oracle prediction
// per example, then repeatedly mask the labels at each propensity level and
// average three per-example recall estimators over the dataset. Mean and
// standard deviation are taken across repetitions.

struct RecallSweepRow {
  double p = 1.0;
  std::string estimator;     // "vanilla" | "unbiased" | "upper_bound"
  double mean = 0.0;
  double stdev = 0.0;        // sample std over repetitions
  double true_recall = 0.0;  // clean-data recall of the fixed predictions
};

struct RecallSweepOptions {
  int repetitions = 100;
  bool skip_empty = false;       // drop empty-truth examples from the averages
  unsigned threads = 1;
  int subsample_rounds = 100;    // for instances over the enumeration cap
  int cap = kDefaultEnumerationCap;
};

namespace detail {

struct RecallAverages {
  double vanilla = 0.0;
  double unbiased = 0.0;
  double upper_bound = 0.0;
};

// One repetition: mask every example at uniform propensity p_value and
// average the three estimators over the dataset. `included` marks the
// examples that participate (skip-empty drops empty-truth ones).
inline RecallAverages recall_sweep_repetition(const std::vector<SparseLabels>& truth,
                                              const std::vector<SparseLabels>& predicted,
                                              const std::vector<char>& included,
                                              std::size_t included_count,
                                              const Propensities& p, double p_value,
                                              const RecallSweepOptions& opt, Rng& rng) {
  KahanSum vanilla, unbiased, upper;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!included[i]) continue;
    const SparseLabels observed = apply_mask(truth[i], p, rng);
    vanilla.add(vanilla_recall(observed, predicted[i]));
    if (static_cast<int>(observed.count()) <= opt.cap) {
      unbiased.add(ps_recall(p, observed, predicted[i], opt.cap));
    } else {
      unbiased.add(subsampled_ps_recall(p, observed, predicted[i], rng,
                                        opt.subsample_rounds, opt.cap));
    }
    // Upper-bound weights under a uniform propensity collapse to
    // 1/(p + m - 1) for each of the m observed positives; summing over the
    // predicted hits gives hits / (p + m - 1). At p = 1 this is exactly
    // hits / m, matching the other two estimators bit for bit.
    if (!observed.empty()) {
      std::size_t hits = 0;
      for (const std::int32_t j : observed.indices())
        if (predicted[i].contains(j)) ++hits;
      upper.add(static_cast<double>(hits) /
                (p_value + static_cast<double>(observed.count()) - 1.0));
    } else {
      upper.add(0.0);
    }
  }
  const double denom = static_cast<double>(included_count);
  return {vanilla.value() / denom, unbiased.value() / denom, upper.value() / denom};
}

inline void mean_std(const std::vector<double>& xs, double& mean, double& stdev) {
  KahanSum total;
  for (const double x : xs) total.add(x);
  mean = total.value() / static_cast<double>(xs.size());
  stdev = 0.0;
  if (xs.size() > 1) {
    KahanSum sq;
    for (const double x : xs) sq.add((x - mean) * (x - mean));
    stdev = std::sqrt(sq.value() / static_cast<double>(xs.size() - 1));
  }
}

}  // namespace detail

inline std::vector<RecallSweepRow> recall_variance_sweep(const SyntheticSpec& spec,
                                                         const std::vector<double>& p_grid,
                                                         const RecallSweepOptions& opt) {
  if (p_grid.empty()) throw ParameterError("recall_variance_sweep: empty propensity grid");
  for (const double p : p_grid) check_propensity_scalar(p);
  if (opt.repetitions < 1)
    throw ParameterError("recall_variance_sweep: repetitions must be positive");

  const std::vector<SparseLabels> truth = generate_synthetic(spec);
  Rng pred_rng(derive_seed(spec.seed, 1));
  std::vector<SparseLabels> predicted;
  predicted.reserve(truth.size());
  for (const SparseLabels& y : truth) predicted.push_back(oracle_prediction(y, pred_rng));

  std::vector<char> included(truth.size(), 1);
  std::size_t included_count = truth.size();
  if (opt.skip_empty) {
    included_count = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      included[i] = truth[i].empty() ? 0 : 1;
      included_count += included[i];
    }
  }
  if (included_count == 0)
    throw ParameterError("recall_variance_sweep: no examples left after skipping empty truth");

  KahanSum clean;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (included[i]) clean.add(vanilla_recall(truth[i], predicted[i]));
  const double true_recall = clean.value() / static_cast<double>(included_count);

  // One job per (grid point, repetition), each with a derived seed; results
  // land in preallocated slots so the aggregation is scheduling-independent.
  const std::size_t reps = static_cast<std::size_t>(opt.repetitions);
  std::vector<detail::RecallAverages> cells(p_grid.size() * reps);
  parallel_for(cells.size(), opt.threads, [&](std::size_t job) {
    const std::size_t pi = job / reps;
    const Propensities p = Propensities::uniform(spec.num_labels, p_grid[pi]);
    Rng rng(derive_seed(spec.seed, 2 + job));
    cells[job] = detail::recall_sweep_repetition(truth, predicted, included, included_count,
                                                 p, p_grid[pi], opt, rng);
  });

  std::vector<RecallSweepRow> rows;
  rows.reserve(p_grid.size() * 3);
  std::vector<double> vals(reps);
  for (std::size_t pi = 0; pi < p_grid.size(); ++pi) {
    const char* names[3] = {"vanilla", "unbiased", "upper_bound"};
    for (int e = 0; e < 3; ++e) {
      for (std::size_t r = 0; r < reps; ++r) {
        const detail::RecallAverages& c = cells[pi * reps + r];
        vals[r] = e == 0 ? c.vanilla : (e == 1 ? c.unbiased : c.upper_bound);
      }
      RecallSweepRow row;
      row.p = p_grid[pi];
      row.estimator = names[e];
      row.true_recall = true_recall;
      detail::mean_std(vals, row.mean, row.stdev);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Linear-teacher dataset: Gaussian features, labels drawn through a sigmoid
// of a hidden linear model, intercepts spaced so label frequencies fall from
// head_rate (label 0) to tail_rate (last label). Learnable but noisy, with a
// frequency gradient that makes rank-based propensities meaningful.

struct TeacherSpec {
  std::size_t num_examples = 2000;
  std::int32_t num_features = 50;
  std::int32_t num_labels = 20;
  std::uint64_t seed = 0;
  double sharpness = 2.0;   // scale of the teacher scores
  double head_rate = 0.4;   // target marginal of label 0
  double tail_rate = 0.05;  // target marginal of the last label
};

inline SparseDataset synthetic_classification_dataset(const TeacherSpec& spec) {
  if (spec.num_features < 1 || spec.num_labels < 2 || spec.num_examples < 1)
    throw ParameterError("synthetic_classification_dataset: degenerate sizes");
  if (!(spec.head_rate > 0.0) || !(spec.tail_rate > 0.0) || spec.head_rate >= 1.0 ||
      spec.tail_rate > spec.head_rate)
    throw ParameterError("synthetic_classification_dataset: need 0 < tail_rate <= head_rate < 1");

  const std::size_t fcount = static_cast<std::size_t>(spec.num_features);
  const std::size_t lcount = static_cast<std::size_t>(spec.num_labels);

  Rng teacher_rng(derive_seed(spec.seed, 0));
  std::vector<double> teacher(fcount * lcount);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.num_features));
  for (double& w : teacher) w = gaussian(teacher_rng) * scale;

  std::vector<double> intercept(lcount);
  for (std::size_t j = 0; j < lcount; ++j) {
    const double t = lcount == 1 ? 0.0
                                 : static_cast<double>(j) / static_cast<double>(lcount - 1);
    const double rate = spec.head_rate * std::pow(spec.tail_rate / spec.head_rate, t);
    intercept[j] = std::log(rate / (1.0 - rate));
  }

  Rng data_rng(derive_seed(spec.seed, 1));
  SparseDataset ds;
  ds.num_features = spec.num_features;
  ds.num_labels = spec.num_labels;
  std::vector<std::int32_t> fidx(fcount);
  for (std::size_t j = 0; j < fcount; ++j) fidx[j] = static_cast<std::int32_t>(j);
  std::vector<double> x(fcount);
  std::vector<std::int32_t> lidx;
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    for (double& v : x) v = gaussian(data_rng);
    lidx.clear();
    for (std::size_t j = 0; j < lcount; ++j) {
      double s = 0.0;
      for (std::size_t fpos = 0; fpos < fcount; ++fpos)
        s += x[fpos] * teacher[fpos * lcount + j];
      const double rate = sigmoid(spec.sharpness * s + intercept[j]);
      if (canonical_double(data_rng) < rate) lidx.push_back(static_cast<std::int32_t>(j));
    }
    ds.append_row(fidx, x, SparseLabels(lidx, spec.num_labels));
  }
  return ds;
}

}  // namespace pslosses
