#pragma once

// Linear multilabel model trained with Adam on any of the reduced losses.
// The schedule is two-phase (a larger then a smaller learning rate), batches
// are reshuffled per epoch from the seed, and a divergence guard aborts on
// non-finite or absurd batch objectives (the unbiased log loss is unbounded
// below, so runaway runs are a real failure mode, not a curiosity).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"
#include "pslosses/data.hpp"
#include "pslosses/eval.hpp"
#include "pslosses/multilabel.hpp"
#include "pslosses/simulate.hpp"

namespace pslosses {

enum class Link { sigmoid, identity };

inline const char* to_string(Link link) {
  return link == Link::sigmoid ? "sigmoid" : "identity";
}

// Scores in (0, 1) for probability-type losses, clamped away from the
// endpoints so the log loss stays finite.
inline constexpr double kLinkEpsilon = 1e-12;

struct LinearModel {
  std::int32_t num_features = 0;
  std::int32_t num_labels = 0;
  std::vector<double> weights;  // row-major [feature][label]
  std::vector<double> bias;     // [label]

  static LinearModel init(std::int32_t num_features, std::int32_t num_labels,
                          std::uint64_t seed) {
    if (num_features < 1 || num_labels < 1)
      throw ParameterError("LinearModel: degenerate shape");
    LinearModel m;
    m.num_features = num_features;
    m.num_labels = num_labels;
    m.weights.resize(static_cast<std::size_t>(num_features) *
                     static_cast<std::size_t>(num_labels));
    m.bias.assign(static_cast<std::size_t>(num_labels), 0.0);
    Rng rng(seed);
    const double half_width = 1.0 / std::sqrt(static_cast<double>(num_features));
    for (double& w : m.weights) w = (2.0 * canonical_double(rng) - 1.0) * half_width;
    return m;
  }

  // raw scores W^T x + b for one sparse row
  void raw_scores(std::span<const std::int32_t> idx, std::span<const double> val,
                  ScoreVector& out) const {
    const std::size_t l = static_cast<std::size_t>(num_labels);
    out.assign(bias.begin(), bias.end());
    for (std::size_t t = 0; t < idx.size(); ++t) {
      const double* wrow = weights.data() + static_cast<std::size_t>(idx[t]) * l;
      const double x = val[t];
      for (std::size_t k = 0; k < l; ++k) out[k] += x * wrow[k];
    }
  }
};

inline void apply_link(Link link, const ScoreVector& raw, ScoreVector& out) {
  out.resize(raw.size());
  if (link == Link::identity) {
    out = raw;
    return;
  }
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const double z = sigmoid(raw[k]);
    out[k] = std::min(std::max(z, kLinkEpsilon), 1.0 - kLinkEpsilon);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format, little-endian:
//   magic "PSLM" | u32 version = 1 | u32 num_features | u32 num_labels |
//   f64 weights (row-major, num_features x num_labels) | f64 bias[num_labels]

inline void save_model(const LinearModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out.write("PSLM", 4);
  detail::put_le<std::uint32_t>(out, 1);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.num_features));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.num_labels));
  for (const double w : m.weights) detail::put_le<double>(out, w);
  for (const double b : m.bias) detail::put_le<double>(out, b);
  if (!out) throw ParseError("write failed for '" + path + "'");
}

inline LinearModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PSLM", 4) != 0)
    throw ParseError("'" + path + "' is not a model checkpoint (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != 1)
    throw ParseError("'" + path + "': unsupported checkpoint version " +
                     std::to_string(version));
  LinearModel m;
  m.num_features = static_cast<std::int32_t>(detail::get_le<std::uint32_t>(in, "num_features"));
  m.num_labels = static_cast<std::int32_t>(detail::get_le<std::uint32_t>(in, "num_labels"));
  if (m.num_features < 1 || m.num_labels < 1)
    throw ParseError("'" + path + "': degenerate checkpoint shape");
  m.weights.resize(static_cast<std::size_t>(m.num_features) *
                   static_cast<std::size_t>(m.num_labels));
  for (double& w : m.weights) w = detail::get_le<double>(in, "weights");
  m.bias.resize(static_cast<std::size_t>(m.num_labels));
  for (double& b : m.bias) b = detail::get_le<double>(in, "bias");
  return m;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  Reduction loss{};
  Link link = Link::sigmoid;
  double l2 = 0.0;
  int epochs_phase1 = 15;
  double lr_phase1 = 1e-4;
  int epochs_phase2 = 5;
  double lr_phase2 = 1e-5;
  int batch_size = 512;
  std::uint64_t seed = 0;
  double divergence_threshold = 1e12;
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_objective = 0.0;  // example-weighted mean of the batch objectives
};

struct TrainResult {
  LinearModel model;
  std::vector<EpochLog> epochs;
};

namespace detail {

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace detail

// Batch objective (mean loss over the batch plus l2 * ||W||^2) and its
// gradient with respect to all parameters (weights then bias, flat). Returns
// the objective. Exposed for the finite-difference gradient tests.
inline double batch_objective_gradient(const LinearModel& model, const TrainConfig& cfg,
                                       const Propensities& p, const SparseDataset& data,
                                       std::span<const std::size_t> batch,
                                       std::vector<double>& grad_weights,
                                       std::vector<double>& grad_bias) {
  const std::size_t l = static_cast<std::size_t>(model.num_labels);
  grad_weights.assign(model.weights.size(), 0.0);
  grad_bias.assign(l, 0.0);
  if (batch.empty()) throw ParameterError("empty batch");

  ScoreVector raw, linked;
  std::vector<double> score_grad;
  KahanSum loss_sum;
  for (const std::size_t i : batch) {
    const auto idx = data.row_indices(i);
    const auto val = data.row_values(i);
    model.raw_scores(idx, val, raw);
    for (const double s : raw)
      if (!std::isfinite(s))
        throw DivergenceError("non-finite score while training " + cfg.loss.name());
    apply_link(cfg.link, raw, linked);
    loss_sum.add(reduction_loss_gradient(cfg.loss, p, data.labels[i], linked, score_grad));
    if (cfg.link == Link::sigmoid) {
      for (std::size_t k = 0; k < l; ++k) {
        const double z = sigmoid(raw[k]);
        score_grad[k] *= z * (1.0 - z);
      }
    }
    for (std::size_t k = 0; k < l; ++k) grad_bias[k] += score_grad[k];
    for (std::size_t t = 0; t < idx.size(); ++t) {
      double* grow = grad_weights.data() + static_cast<std::size_t>(idx[t]) * l;
      const double x = val[t];
      for (std::size_t k = 0; k < l; ++k) grow[k] += x * score_grad[k];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad_weights) g *= inv_n;
  for (double& g : grad_bias) g *= inv_n;

  double penalty = 0.0;
  if (cfg.l2 != 0.0) {
    KahanSum sq;
    for (const double w : model.weights) sq.add(w * w);
    penalty = cfg.l2 * sq.value();
    for (std::size_t i = 0; i < model.weights.size(); ++i)
      grad_weights[i] += 2.0 * cfg.l2 * model.weights[i];
  }
  return loss_sum.value() * inv_n + penalty;
}

// Fits a linear model with two-phase Adam. When `warm_start` is given the
// optimization continues from that model (fresh Adam state and epoch count)
// instead of the seeded random initialization — used for vanilla pre-training
// followed by an unbiased fine-tuning pass.
inline TrainResult train_linear(const SparseDataset& data, const Propensities& p,
                                const TrainConfig& cfg,
                                const LinearModel* warm_start = nullptr) {
  if (data.num_examples() == 0) throw ParameterError("train_linear: empty dataset");
  if (p.size() != data.num_labels)
    throw DimensionError("train_linear: propensity length != num_labels");
  if (cfg.batch_size < 1) throw ParameterError("train_linear: batch_size must be positive");
  if (cfg.epochs_phase1 < 0 || cfg.epochs_phase2 < 0 ||
      cfg.epochs_phase1 + cfg.epochs_phase2 < 1)
    throw ParameterError("train_linear: need at least one epoch");
  if (!(cfg.lr_phase1 > 0.0) || !(cfg.lr_phase2 > 0.0))
    throw ParameterError("train_linear: learning rates must be positive");
  if (cfg.l2 < 0.0) throw ParameterError("train_linear: l2 must be non-negative");
  if (cfg.link == Link::sigmoid && cfg.loss.kind != ReductionKind::ova &&
      cfg.loss.kind != ReductionKind::ova_n)
    throw ParameterError("train_linear: sigmoid link only applies to ova-type reductions");

  TrainResult result;
  if (warm_start != nullptr) {
    if (warm_start->num_features != data.num_features ||
        warm_start->num_labels != data.num_labels)
      throw DimensionError("train_linear: warm-start model dimensions do not match the data");
    result.model = *warm_start;
  } else {
    result.model = LinearModel::init(data.num_features, data.num_labels,
                                     derive_seed(cfg.seed, 0));
  }
  LinearModel& model = result.model;

  detail::AdamState adam_w(model.weights.size());
  detail::AdamState adam_b(model.bias.size());
  Rng order_rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(data.num_examples());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> grad_w, grad_b;
  const int total_epochs = cfg.epochs_phase1 + cfg.epochs_phase2;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const double lr = epoch < cfg.epochs_phase1 ? cfg.lr_phase1 : cfg.lr_phase2;
    shuffle_in_place(order, order_rng);
    KahanSum epoch_loss;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double objective =
          batch_objective_gradient(model, cfg, p, data, batch, grad_w, grad_b);
      if (!std::isfinite(objective) || std::abs(objective) > cfg.divergence_threshold)
        throw DivergenceError("training diverged: " + cfg.loss.name() + " objective " +
                              format_double(objective) + " at epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      adam_w.step(model.weights, grad_w, lr);
      adam_b.step(model.bias, grad_b, lr);
      epoch_loss.add(objective * static_cast<double>(batch.size()));
      ++batch_index;
    }
    result.epochs.push_back(
        {epoch, lr, epoch_loss.value() / static_cast<double>(order.size())});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Split evaluation, the regularization-sweep protocol, and the decomposition
// of the generalization gap.

struct SplitMetrics {
  double loss = 0.0;                 // mean reduced loss (no l2 penalty)
  std::map<int, double> precision;   // k -> P@k (propensity-scored on noisy splits)
  std::map<int, double> recall;      // k -> R@k
};

// Mean loss and top-k metrics of a model on one split. With `ps_estimators`
// the loss uses the unbiased variant and the metrics their inverse-propensity
// forms (for masked splits); otherwise everything is vanilla (clean splits).
inline SplitMetrics evaluate_split(const LinearModel& model, const TrainConfig& cfg,
                                   const Propensities& p, const SparseDataset& ds,
                                   bool ps_estimators, const std::vector<int>& ks,
                                   Rng& rng, int subsample_rounds = 100) {
  if (ds.num_examples() == 0) throw ParameterError("evaluate_split: empty split");
  Reduction reduction = cfg.loss;
  reduction.variant = ps_estimators ? Variant::unbiased : Variant::vanilla;
  for (const int k : ks)
    if (k < 1 || k > ds.num_labels)
      throw ParameterError("evaluate_split: k = " + std::to_string(k) + " outside [1, " +
                           std::to_string(ds.num_labels) + "]");

  SplitMetrics out;
  KahanSum loss_sum;
  std::map<int, KahanSum> prec_sum, rec_sum;
  ScoreVector raw, linked;
  for (std::size_t i = 0; i < ds.num_examples(); ++i) {
    model.raw_scores(ds.row_indices(i), ds.row_values(i), raw);
    apply_link(cfg.link, raw, linked);
    loss_sum.add(reduction_loss(reduction, p, ds.labels[i], linked));
    for (const int k : ks) {
      if (ps_estimators) {
        prec_sum[k].add(ps_precision_at_k(p, ds.labels[i], raw, k));
        rec_sum[k].add(ps_recall_at_k(p, ds.labels[i], raw, k, rng, subsample_rounds,
                                      reduction.cap));
      } else {
        prec_sum[k].add(precision_at_k(ds.labels[i], raw, k));
        rec_sum[k].add(recall_at_k(ds.labels[i], raw, k));
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(ds.num_examples());
  out.loss = loss_sum.value() * inv_n;
  for (const int k : ks) {
    out.precision[k] = prec_sum[k].value() * inv_n;
    out.recall[k] = rec_sum[k].value() * inv_n;
  }
  return out;
}

// The splits of one masked-training experiment. clean_* and noisy_* pairs
// cover the same examples; clean_test may be empty (no test rows then).
struct ExperimentSplits {
  SparseDataset clean_train, noisy_train;
  SparseDataset clean_val, noisy_val;
  SparseDataset clean_test;
};

// Builds the splits: seeded shuffle split of `clean`, then an independent
// mask per side (noise is injected after splitting, so validation noise is
// independent of training noise).
inline ExperimentSplits make_experiment_splits(const SparseDataset& clean,
                                               double val_fraction, const Propensities& p,
                                               std::uint64_t split_seed,
                                               std::uint64_t mask_seed,
                                               SparseDataset clean_test = {}) {
  ExperimentSplits out;
  SplitResult sr = split_dataset(clean, val_fraction, split_seed);
  out.clean_train = std::move(sr.train);
  out.clean_val = std::move(sr.val);
  Rng train_rng(derive_seed(mask_seed, 0));
  Rng val_rng(derive_seed(mask_seed, 1));
  out.noisy_train = mask_dataset(out.clean_train, p, train_rng);
  out.noisy_val = mask_dataset(out.clean_val, p, val_rng);
  out.clean_test = std::move(clean_test);
  return out;
}

struct SweepRow {
  double l2 = 0.0;
  std::string split;  // "noisy-train" | "clean-train" | "noisy-val" | "clean-test"
  SplitMetrics metrics;
};

struct SweepOptions {
  std::vector<double> l2_grid;
  bool train_on_clean = false;  // baseline runs: fit the clean labels instead
  std::vector<int> ks = {1, 3, 5};
  int subsample_rounds = 100;
  std::uint64_t eval_seed = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<LinearModel> models;        // one per grid point
  std::vector<double> validation_loss;    // noisy-val unbiased loss per grid point
  double best_l2 = 0.0;                   // argmin of validation_loss (first on ties)
};

// Trains one model per l2 value and evaluates every split with the matching
// estimator: unbiased loss / PS metrics on the masked splits, vanilla on the
// clean ones. Model selection uses the noisy-validation unbiased loss — the
// setting assumes no clean data is available at all.
inline SweepResult regularization_sweep(const ExperimentSplits& splits,
                                        const Propensities& p, const TrainConfig& base_cfg,
                                        const SweepOptions& opt) {
  if (opt.l2_grid.empty()) throw ParameterError("regularization_sweep: empty l2 grid");
  SweepResult result;
  for (std::size_t gi = 0; gi < opt.l2_grid.size(); ++gi) {
    TrainConfig cfg = base_cfg;
    cfg.l2 = opt.l2_grid[gi];
    const SparseDataset& train_data =
        opt.train_on_clean ? splits.clean_train : splits.noisy_train;
    TrainResult trained = train_linear(train_data, p, cfg);

    Rng eval_rng(derive_seed(opt.eval_seed, gi));
    const struct {
      const char* name;
      const SparseDataset* data;
      bool ps;
    } jobs[] = {
        {"noisy-train", &splits.noisy_train, true},
        {"clean-train", &splits.clean_train, false},
        {"noisy-val", &splits.noisy_val, true},
        {"clean-test", &splits.clean_test, false},
    };
    double val_loss = 0.0;
    for (const auto& job : jobs) {
      if (job.data->num_examples() == 0) continue;  // clean_test is optional
      SweepRow row;
      row.l2 = cfg.l2;
      row.split = job.name;
      row.metrics = evaluate_split(trained.model, cfg, p, *job.data, job.ps, opt.ks,
                                   eval_rng, opt.subsample_rounds);
      if (row.split == "noisy-val") val_loss = row.metrics.loss;
      result.rows.push_back(std::move(row));
    }
    result.validation_loss.push_back(val_loss);
    result.models.push_back(std::move(trained.model));
  }
  std::size_t best = 0;
  for (std::size_t gi = 1; gi < opt.l2_grid.size(); ++gi)
    if (result.validation_loss[gi] < result.validation_loss[best]) best = gi;
  result.best_l2 = opt.l2_grid[best];
  return result;
}

// Decomposition of the generalization gap of a trained model:
//   finite_sample = (clean-test loss)  - (clean-train loss)
//   noise_pattern = (clean-train loss) - (unbiased estimate on the masked train labels)
// clean_train and noisy_train must cover the same examples; total is the sum
// by construction. With p = 1 and noisy == clean the noise term is exactly 0.
struct GapDecomposition {
  double finite_sample = 0.0;
  double noise_pattern = 0.0;
  double total = 0.0;
};

inline GapDecomposition noise_pattern_gap(const LinearModel& model, const TrainConfig& cfg,
                                          const Propensities& p,
                                          const SparseDataset& clean_test,
                                          const SparseDataset& clean_train,
                                          const SparseDataset& noisy_train) {
  if (clean_train.num_examples() != noisy_train.num_examples())
    throw DimensionError("noise_pattern_gap: clean and noisy train must cover the same examples");
  Rng unused(0);  // k-metrics are not requested, so no randomness is consumed
  const std::vector<int> no_ks;
  const double test_loss =
      evaluate_split(model, cfg, p, clean_test, false, no_ks, unused).loss;
  const double clean_loss =
      evaluate_split(model, cfg, p, clean_train, false, no_ks, unused).loss;
  const double noisy_estimate =
      evaluate_split(model, cfg, p, noisy_train, true, no_ks, unused).loss;
  GapDecomposition out;
  out.finite_sample = test_loss - clean_loss;
  out.noise_pattern = clean_loss - noisy_estimate;
  out.total = out.finite_sample + out.noise_pattern;
  return out;
}

// ---------------------------------------------------------------------------
// Config-file parsing (key = value lines, '#' comments). Keys mirror
// TrainConfig; unknown keys are errors. Values given on the command line
// override the file, which overrides the defaults.

inline ReductionKind parse_reduction_kind(const std::string& s) {
  if (s == "ova") return ReductionKind::ova;
  if (s == "pal") return ReductionKind::pal;
  if (s == "ova-n" || s == "ova_n") return ReductionKind::ova_n;
  if (s == "pal-n" || s == "pal_n") return ReductionKind::pal_n;
  throw ParameterError("unknown reduction '" + s + "' (ova, pal, ova-n, pal-n)");
}

inline BinaryLossKind parse_binary_loss(const std::string& s) {
  if (s == "squared-error" || s == "squared_error") return BinaryLossKind::squared_error;
  if (s == "bce") return BinaryLossKind::bce;
  if (s == "squared-hinge" || s == "squared_hinge") return BinaryLossKind::squared_hinge;
  if (s == "zero-one" || s == "zero_one") return BinaryLossKind::zero_one;
  throw ParameterError("unknown base loss '" + s +
                       "' (squared-error, bce, squared-hinge, zero-one)");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "vanilla") return Variant::vanilla;
  if (s == "unbiased") return Variant::unbiased;
  if (s == "upper-bound" || s == "upper_bound") return Variant::upper_bound;
  throw ParameterError("unknown variant '" + s + "' (vanilla, unbiased, upper-bound)");
}

inline Link parse_link(const std::string& s) {
  if (s == "sigmoid") return Link::sigmoid;
  if (s == "identity") return Link::identity;
  throw ParameterError("unknown link '" + s + "' (sigmoid, identity)");
}

inline TrainConfig parse_train_config(std::istream& in, const std::string& name,
                                      TrainConfig cfg = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto trim = [](std::string s) {
      const std::size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const std::size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw detail::parse_error(name, line_no, "expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty())
      throw detail::parse_error(name, line_no, "expected 'key = value'");

    try {
      if (key == "reduction") {
        cfg.loss.kind = parse_reduction_kind(value);
      } else if (key == "base") {
        cfg.loss.base.kind = parse_binary_loss(value);
      } else if (key == "variant") {
        cfg.loss.variant = parse_variant(value);
      } else if (key == "link") {
        cfg.link = parse_link(value);
      } else if (key == "tilde-self") {
        if (value != "true" && value != "false")
          throw ParameterError("tilde-self must be true or false");
        cfg.loss.tilde_includes_self = value == "true";
      } else if (key == "cap") {
        cfg.loss.cap = std::stoi(value);
      } else if (key == "l2") {
        cfg.l2 = std::stod(value);
      } else if (key == "epochs-phase1") {
        cfg.epochs_phase1 = std::stoi(value);
      } else if (key == "lr-phase1") {
        cfg.lr_phase1 = std::stod(value);
      } else if (key == "epochs-phase2") {
        cfg.epochs_phase2 = std::stoi(value);
      } else if (key == "lr-phase2") {
        cfg.lr_phase2 = std::stod(value);
      } else if (key == "batch-size") {
        cfg.batch_size = std::stoi(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else {
        throw ParameterError("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw detail::parse_error(name, line_no, "bad value '" + value + "' for " + key);
    } catch (const std::out_of_range&) {
      throw detail::parse_error(name, line_no, "value out of range for " + key);
    } catch (const ParameterError& e) {
      throw detail::parse_error(name, line_no, e.what());
    }
  }
  return cfg;
}

}  // namespace pslosses
