// Command-line driver: propensity models, synthetic recall sweeps, metric
// reports, linear-model training, regularization sweeps and generalization-
// gap decomposition for sparse multilabel data with missing labels.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numerical failure (training divergence).
//
// Every run writes exactly one manifest (<out>.manifest.json) next to its
// primary output: command, effective configuration, seed, library version,
// output paths and wall-clock time. Outputs themselves carry no timestamps,
// so identical argv + seed reproduce them byte for byte.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pslosses/pslosses.hpp"

namespace {

using namespace pslosses;
using Clock = std::chrono::steady_clock;

// Command-line values that fail semantic validation (usage errors, exit 1),
// as opposed to bad data encountered while running (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// JSON emission. All numbers go through format_double (17 significant
// digits); non-finite values become null. Key order is fixed by the caller.

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(c));
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string jstr(const std::string& s) { return "\"" + json_escape(s) + "\""; }

std::string jnum(double v) { return std::isfinite(v) ? format_double(v) : "null"; }

std::string jbool(bool b) { return b ? "true" : "false"; }

using JsonFields = std::vector<std::pair<std::string, std::string>>;

std::string json_inline_object(const JsonFields& fields) {
  std::string out = "{";
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ", ";
    out += jstr(fields[i].first) + ": " + fields[i].second;
  }
  out += "}";
  return out;
}

std::string json_inline_array(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += items[i];
  }
  out += "]";
  return out;
}

std::string json_int_array(const std::vector<int>& values) {
  std::vector<std::string> items;
  items.reserve(values.size());
  for (const int v : values) items.push_back(std::to_string(v));
  return json_inline_array(items);
}

std::string json_double_array(const std::vector<double>& values) {
  std::vector<std::string> items;
  items.reserve(values.size());
  for (const double v : values) items.push_back(jnum(v));
  return json_inline_array(items);
}

std::string epoch_log_json(const std::vector<EpochLog>& log) {
  std::vector<std::string> items;
  items.reserve(log.size());
  for (const EpochLog& e : log)
    items.push_back(json_inline_object({{"epoch", std::to_string(e.epoch)},
                                        {"learning_rate", jnum(e.learning_rate)},
                                        {"mean_objective", jnum(e.mean_objective)}}));
  return json_inline_array(items);
}

// ---------------------------------------------------------------------------
// Run manifests.

std::string iso8601_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;    // the run's primary seed (0 for seedless commands)
  JsonFields config;         // effective configuration, key -> rendered JSON
  JsonFields results;        // extra top-level fields (epoch logs, best l2, ...)
  std::vector<std::string> outputs;  // files written, primary output first
};

void write_manifest(const Manifest& m, Clock::time_point start) {
  const double wall =
      std::chrono::duration_cast<std::chrono::duration<double>>(Clock::now() - start).count();
  const std::string path = m.outputs.front() + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "{\n";
  out << "  \"command\": " << jstr(m.command) << ",\n";
  out << "  \"version\": " << jstr(kVersion) << ",\n";
  out << "  \"seed\": " << m.seed << ",\n";
  out << "  \"config\": {";
  for (std::size_t i = 0; i < m.config.size(); ++i) {
    out << (i > 0 ? ",\n    " : "\n    ");
    out << jstr(m.config[i].first) << ": " << m.config[i].second;
  }
  out << (m.config.empty() ? "},\n" : "\n  },\n");
  for (const auto& [key, value] : m.results)
    out << "  " << jstr(key) << ": " << value << ",\n";
  std::vector<std::string> quoted;
  quoted.reserve(m.outputs.size());
  for (const std::string& o : m.outputs) quoted.push_back(jstr(o));
  out << "  \"outputs\": " << json_inline_array(quoted) << ",\n";
  out << "  \"wall_clock_seconds\": " << jnum(wall) << ",\n";
  out << "  \"timestamp_utc\": " << jstr(iso8601_utc_now()) << "\n";
  out << "}\n";
  if (!out) throw ParseError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Training configuration: defaults, then the config file, then command-line
// flags. Flag values reuse the config-file parser, so both spell values the
// same way and flags always win.

struct TrainFlagValues {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;  // key -> value
};

void add_train_options(CLI::App* cmd, TrainFlagValues& tf, bool include_l2) {
  cmd->add_option("--config", tf.config_path,
                  "training config file ('key = value' lines, '#' comments)");
  const auto add = [cmd, &tf](const std::string& flag, const std::string& key,
                              const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&tf, key](const std::string& v) { tf.overrides.emplace_back(key, v); }, desc);
  };
  add("--reduction", "reduction", "multilabel reduction: ova, pal, ova-n, pal-n");
  add("--base", "base", "base binary loss: squared-error, bce, squared-hinge, zero-one");
  add("--variant", "variant", "estimator variant: vanilla, unbiased, upper-bound");
  add("--link", "link", "score link for ova-type losses: sigmoid, identity");
  add("--tilde-self", "tilde-self",
      "include the weighted label itself in the normalized upper-bound denominator "
      "(true/false)");
  add("--cap", "cap", "observed-positive cap for subset enumeration");
  if (include_l2) add("--l2", "l2", "L2 regularization strength");
  add("--epochs-phase1", "epochs-phase1", "epochs at the phase-1 learning rate");
  add("--lr-phase1", "lr-phase1", "phase-1 learning rate");
  add("--epochs-phase2", "epochs-phase2", "epochs at the phase-2 learning rate");
  add("--lr-phase2", "lr-phase2", "phase-2 learning rate");
  add("--batch-size", "batch-size", "minibatch size");
  add("--seed", "seed", "training seed (weight initialization and batch order)");
}

TrainConfig resolve_train_config(const TrainFlagValues& tf) {
  TrainConfig cfg;
  if (!tf.config_path.empty()) {
    std::ifstream in(tf.config_path);
    if (!in) throw ParseError("cannot open '" + tf.config_path + "'");
    cfg = parse_train_config(in, tf.config_path, cfg);
  }
  if (!tf.overrides.empty()) {
    std::stringstream synth;
    for (const auto& [key, value] : tf.overrides) synth << key << " = " << value << '\n';
    try {
      cfg = parse_train_config(synth, "flags", cfg);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  return cfg;
}

void append_train_config_fields(JsonFields& f, const TrainConfig& cfg, bool include_l2) {
  f.emplace_back("reduction", jstr(to_string(cfg.loss.kind)));
  f.emplace_back("base", jstr(to_string(cfg.loss.base.kind)));
  f.emplace_back("variant", jstr(to_string(cfg.loss.variant)));
  f.emplace_back("link", jstr(to_string(cfg.link)));
  f.emplace_back("tilde-self", jbool(cfg.loss.tilde_includes_self));
  f.emplace_back("cap", std::to_string(cfg.loss.cap));
  if (include_l2) f.emplace_back("l2", jnum(cfg.l2));
  f.emplace_back("epochs-phase1", std::to_string(cfg.epochs_phase1));
  f.emplace_back("lr-phase1", jnum(cfg.lr_phase1));
  f.emplace_back("epochs-phase2", std::to_string(cfg.epochs_phase2));
  f.emplace_back("lr-phase2", jnum(cfg.lr_phase2));
  f.emplace_back("batch-size", std::to_string(cfg.batch_size));
  f.emplace_back("seed", std::to_string(cfg.seed));
}

// ---------------------------------------------------------------------------
// Input helpers.

SparseDataset load_features(const std::string& path, bool tfidf, bool idf_smooth) {
  SparseDataset ds = load_dataset_auto(path);
  if (tfidf) ds = tfidf_transform(ds, idf_smooth);
  return ds;
}

// Score file: a header line "num_examples num_labels", then one line per
// example of whitespace-separated "label:score" pairs. Labels absent from a
// line score -inf (never ranked ahead of a scored label). Duplicate labels
// and NaN scores are rejected.
std::vector<ScoreVector> load_scores(const std::string& path, std::size_t want_examples,
                                     std::int32_t want_labels) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  const auto fail = [&path](std::size_t line_no, const std::string& what) {
    return ParseError(path + ":" + std::to_string(line_no) + ": " + what);
  };
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw fail(1, "missing 'num_examples num_labels' header");
  ++line_no;
  std::istringstream head(line);
  std::int64_t n = 0, l = 0;
  std::string extra;
  if (!(head >> n >> l) || (head >> extra) || n < 0 || l < 0)
    throw fail(line_no, "expected header 'num_examples num_labels'");
  if (static_cast<std::size_t>(n) != want_examples)
    throw DimensionError(path + ": header says " + std::to_string(n) + " examples, truth has " +
                         std::to_string(want_examples));
  if (l != want_labels)
    throw DimensionError(path + ": header says " + std::to_string(l) + " labels, truth has " +
                         std::to_string(want_labels));

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<ScoreVector> out;
  out.reserve(want_examples);
  std::vector<char> seen(static_cast<std::size_t>(want_labels), 0);
  std::vector<std::int32_t> touched;
  for (std::size_t i = 0; i < want_examples; ++i) {
    if (!std::getline(in, line))
      throw fail(line_no + 1, "expected " + std::to_string(want_examples) + " score rows, got " +
                                  std::to_string(i));
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ScoreVector s(static_cast<std::size_t>(want_labels), neg_inf);
    touched.clear();
    std::istringstream row(line);
    std::string tok;
    while (row >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
        throw fail(line_no, "expected 'label:score', got '" + tok + "'");
      std::int64_t idx = 0;
      double value = 0.0;
      if (!detail::parse_int(std::string_view(tok).substr(0, colon), idx))
        throw fail(line_no, "bad label index in '" + tok + "'");
      if (!detail::parse_double(std::string_view(tok).substr(colon + 1), value))
        throw fail(line_no, "bad score in '" + tok + "'");
      if (idx < 0 || idx >= want_labels)
        throw fail(line_no, "label index " + std::to_string(idx) + " outside [0, " +
                                std::to_string(want_labels) + ")");
      if (std::isnan(value)) throw fail(line_no, "NaN score in '" + tok + "'");
      if (seen[static_cast<std::size_t>(idx)])
        throw fail(line_no, "duplicate label " + std::to_string(idx));
      seen[static_cast<std::size_t>(idx)] = 1;
      touched.push_back(static_cast<std::int32_t>(idx));
      s[static_cast<std::size_t>(idx)] = value;
    }
    for (const std::int32_t j : touched) seen[static_cast<std::size_t>(j)] = 0;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> parse_sweep_grid(const std::string& s) {
  const std::string prefix = "l2=";
  if (s.rfind(prefix, 0) != 0)
    throw UsageError("--sweep expects 'l2=v1,v2,...', got '" + s + "'");
  std::vector<double> grid;
  std::stringstream rest(s.substr(prefix.size()));
  std::string tok;
  while (std::getline(rest, tok, ',')) {
    double v = 0.0;
    if (!detail::parse_double(tok, v) || !std::isfinite(v) || v < 0.0)
      throw UsageError("--sweep: bad l2 value '" + tok + "'");
    grid.push_back(v);
  }
  if (grid.empty()) throw UsageError("--sweep: empty l2 grid");
  return grid;
}

// ---------------------------------------------------------------------------
// propensity: label counts -> propensity TSV.

struct PropensityArgs {
  std::string data, model = "jain", out;
  double a = 0.55, b = 1.5;       // count model parameters
  double top = 2.0, bottom = 10.0;  // linear-inverse schedule endpoints
};

void run_propensity(const PropensityArgs& a) {
  const auto t0 = Clock::now();
  const SparseDataset ds = load_dataset_auto(a.data);
  const std::vector<std::int64_t> counts = label_counts(ds);
  const Propensities p =
      a.model == "jain"
          ? jain_propensities(counts, static_cast<std::int64_t>(ds.num_examples()),
                              JainModelParams{a.a, a.b})
          : frequency_ranked_linear_inverse(counts, a.top, a.bottom);
  save_propensities_tsv(p, a.out);

  Manifest m;
  m.command = "propensity";
  m.config.emplace_back("data", jstr(a.data));
  m.config.emplace_back("model", jstr(a.model));
  if (a.model == "jain") {
    m.config.emplace_back("a", jnum(a.a));
    m.config.emplace_back("b", jnum(a.b));
  } else {
    m.config.emplace_back("top", jnum(a.top));
    m.config.emplace_back("bottom", jnum(a.bottom));
  }
  m.config.emplace_back("num-examples", std::to_string(ds.num_examples()));
  m.config.emplace_back("num-labels", std::to_string(ds.num_labels));
  m.outputs = {a.out};
  write_manifest(m, t0);
  std::cout << "wrote " << a.out << " (" << ds.num_labels << " labels)\n";
}

// ---------------------------------------------------------------------------
// simulate-recall: synthetic recall estimators across a propensity grid.

struct SimulateArgs {
  std::int32_t labels = 100;
  double label_prob = 0.1;
  std::size_t examples = 10000;
  std::vector<double> p_grid{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int reps = 100;
  std::uint64_t seed = 0;
  bool skip_empty = false;
  int subsample_rounds = 100;
  int cap = kDefaultEnumerationCap;
  int threads = 0;
  std::string out;
};

void run_simulate(const SimulateArgs& a) {
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.num_labels = a.labels;
  spec.label_prob = a.label_prob;
  spec.num_examples = a.examples;
  spec.seed = a.seed;
  RecallSweepOptions opt;
  opt.repetitions = a.reps;
  opt.skip_empty = a.skip_empty;
  opt.threads = resolve_threads(a.threads);
  opt.subsample_rounds = a.subsample_rounds;
  opt.cap = a.cap;
  const std::vector<RecallSweepRow> rows = recall_variance_sweep(spec, a.p_grid, opt);

  std::ofstream out(a.out);
  if (!out) throw ParseError("cannot open '" + a.out + "' for writing");
  out << "p,estimator,mean,std,true_recall\n";
  for (const RecallSweepRow& r : rows)
    out << format_double(r.p) << ',' << r.estimator << ',' << format_double(r.mean) << ','
        << format_double(r.stdev) << ',' << format_double(r.true_recall) << '\n';
  if (!out) throw ParseError("write failed for '" + a.out + "'");

  Manifest m;
  m.command = "simulate-recall";
  m.seed = a.seed;
  m.config.emplace_back("labels", std::to_string(a.labels));
  m.config.emplace_back("label-prob", jnum(a.label_prob));
  m.config.emplace_back("examples", std::to_string(a.examples));
  m.config.emplace_back("p-grid", json_double_array(a.p_grid));
  m.config.emplace_back("reps", std::to_string(a.reps));
  m.config.emplace_back("seed", std::to_string(a.seed));
  m.config.emplace_back("skip-empty", jbool(a.skip_empty));
  m.config.emplace_back("subsample-rounds", std::to_string(a.subsample_rounds));
  m.config.emplace_back("cap", std::to_string(a.cap));
  m.config.emplace_back("threads", std::to_string(opt.threads));
  m.outputs = {a.out};
  write_manifest(m, t0);
  std::cout << "wrote " << a.out << " (" << rows.size() << " rows)\n";
}

// ---------------------------------------------------------------------------
// evaluate: top-k metric report over a score file.

struct EvaluateArgs {
  std::string truth, scores, propensities, out;
  std::vector<int> ks{1, 3, 5};
  bool ps = false;
  double filter_q = 0.01;
  std::uint64_t seed = 0;
  int subsample_rounds = 100;
  int cap = kDefaultEnumerationCap;
  int threads = 0;
};

void run_evaluate(const EvaluateArgs& a) {
  const auto t0 = Clock::now();
  const SparseDataset truth = load_dataset_auto(a.truth);
  if (truth.num_examples() == 0)
    throw ParameterError("evaluate: '" + a.truth + "' has no examples");
  if (a.ks.empty()) throw UsageError("evaluate: --k must list at least one cutoff");
  for (const int k : a.ks)
    if (k < 1 || k > truth.num_labels)
      throw ParameterError("evaluate: k = " + std::to_string(k) + " outside [1, " +
                           std::to_string(truth.num_labels) + "]");
  const std::vector<ScoreVector> scores =
      load_scores(a.scores, truth.num_examples(), truth.num_labels);
  std::optional<Propensities> p;
  if (a.ps) p.emplace(load_propensities_tsv(a.propensities));

  std::vector<std::string> keys;
  std::vector<std::string> families{"p", "r"};
  if (a.ps) {
    families.push_back("psp");
    families.push_back("psr");
  }
  for (const std::string& fam : families)
    for (const int k : a.ks) keys.push_back(fam + "@" + std::to_string(k));

  const std::size_t n = truth.num_examples();
  std::vector<std::vector<double>> values(keys.size(), std::vector<double>(n, 0.0));
  const unsigned threads = resolve_threads(a.threads);
  parallel_for(n, threads, [&](std::size_t i) {
    const SparseLabels& y = truth.labels[i];
    const ScoreVector& s = scores[i];
    std::size_t slot = 0;
    for (const int k : a.ks) values[slot++][i] = precision_at_k(y, s, k);
    for (const int k : a.ks) values[slot++][i] = recall_at_k(y, s, k);
    if (a.ps) {
      Rng rng(derive_seed(a.seed, i));
      for (const int k : a.ks) values[slot++][i] = ps_precision_at_k(*p, y, s, k);
      for (const int k : a.ks)
        values[slot++][i] = ps_recall_at_k(*p, y, s, k, rng, a.subsample_rounds, a.cap);
    }
  });

  const auto summary_json = [](const MetricSummary& s, bool with_fraction) {
    JsonFields f{{"mean", jnum(s.mean)},
                 {"stdev", jnum(s.stdev)},
                 {"count", std::to_string(s.count)}};
    if (with_fraction) f.emplace_back("filtered_fraction", jnum(s.filtered_fraction));
    return json_inline_object(f);
  };

  std::ofstream out(a.out);
  if (!out) throw ParseError("cannot open '" + a.out + "' for writing");
  out << "{\n";
  out << "  \"command\": \"evaluate\",\n";
  out << "  \"examples\": " << n << ",\n";
  out << "  \"ks\": " << json_int_array(a.ks) << ",\n";
  out << "  \"propensity_scored\": " << jbool(a.ps) << ",\n";
  out << "  \"filter_lower_quantile\": " << jnum(a.filter_q) << ",\n";
  out << "  \"filter_upper_quantile\": " << jnum(a.filter_q) << ",\n";
  out << "  \"metrics\": {\n";
  for (std::size_t idx = 0; idx < keys.size(); ++idx) {
    const MetricSummary raw = summarize_values(values[idx]);
    const MetricSummary filtered = summarize_filtered(values[idx], a.filter_q, a.filter_q);
    out << "    " << jstr(keys[idx]) << ": "
        << json_inline_object({{"raw", summary_json(raw, false)},
                               {"filtered", summary_json(filtered, true)}})
        << (idx + 1 < keys.size() ? ",\n" : "\n");
  }
  out << "  }\n";
  out << "}\n";
  if (!out) throw ParseError("write failed for '" + a.out + "'");

  Manifest m;
  m.command = "evaluate";
  m.seed = a.seed;
  m.config.emplace_back("truth", jstr(a.truth));
  m.config.emplace_back("scores", jstr(a.scores));
  m.config.emplace_back("propensities", a.ps ? jstr(a.propensities) : "null");
  m.config.emplace_back("k", json_int_array(a.ks));
  m.config.emplace_back("ps", jbool(a.ps));
  m.config.emplace_back("filter-q", jnum(a.filter_q));
  m.config.emplace_back("seed", std::to_string(a.seed));
  m.config.emplace_back("subsample-rounds", std::to_string(a.subsample_rounds));
  m.config.emplace_back("cap", std::to_string(a.cap));
  m.config.emplace_back("threads", std::to_string(threads));
  m.outputs = {a.out};
  write_manifest(m, t0);
  std::cout << "wrote " << a.out << " (" << n << " examples, " << keys.size() << " metrics)\n";
}

// ---------------------------------------------------------------------------
// train: fit a linear model and save a checkpoint.

struct TrainArgs {
  std::string data, propensities, out;
  bool tfidf = false, idf_smooth = false;
  int warm_start = 0;  // vanilla pre-training epochs before the main run
  TrainFlagValues tf;
};

void run_train(const TrainArgs& a) {
  const auto t0 = Clock::now();
  const TrainConfig cfg = resolve_train_config(a.tf);
  const SparseDataset data = load_features(a.data, a.tfidf, a.idf_smooth);
  const Propensities p = a.propensities.empty()
                             ? Propensities::uniform(data.num_labels, 1.0)
                             : load_propensities_tsv(a.propensities);

  TrainResult warm;
  const LinearModel* start = nullptr;
  if (a.warm_start > 0) {
    TrainConfig pre = cfg;
    pre.loss.variant = Variant::vanilla;
    pre.epochs_phase1 = a.warm_start;
    pre.epochs_phase2 = 0;
    warm = train_linear(data, p, pre);
    start = &warm.model;
  }
  const TrainResult result = train_linear(data, p, cfg, start);
  save_model(result.model, a.out);

  Manifest m;
  m.command = "train";
  m.seed = cfg.seed;
  m.config.emplace_back("data", jstr(a.data));
  m.config.emplace_back("propensities", a.propensities.empty() ? "null" : jstr(a.propensities));
  m.config.emplace_back("tfidf", jbool(a.tfidf));
  m.config.emplace_back("idf-smooth", jbool(a.idf_smooth));
  m.config.emplace_back("warm-start", std::to_string(a.warm_start));
  append_train_config_fields(m.config, cfg, true);
  if (a.warm_start > 0) m.results.emplace_back("warm_epoch_log", epoch_log_json(warm.epochs));
  m.results.emplace_back("epoch_log", epoch_log_json(result.epochs));
  m.results.emplace_back("final_objective", jnum(result.epochs.back().mean_objective));
  m.outputs = {a.out};
  write_manifest(m, t0);
  std::cout << "final objective " << format_double(result.epochs.back().mean_objective)
            << "; wrote " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// sweep: l2 grid over the four-way split protocol.

struct SweepArgs {
  std::string data, test_data, propensities, sweep, out;
  bool tfidf = false, idf_smooth = false;
  double val_fraction = 0.3;
  std::uint64_t split_seed = 0, mask_seed = 0, eval_seed = 0;
  bool train_on_clean = false;
  std::vector<int> ks{1, 3, 5};
  int subsample_rounds = 100;
  TrainFlagValues tf;
};

void run_sweep(const SweepArgs& a) {
  const auto t0 = Clock::now();
  const TrainConfig cfg = resolve_train_config(a.tf);
  const std::vector<double> grid = parse_sweep_grid(a.sweep);
  const SparseDataset data = load_features(a.data, a.tfidf, a.idf_smooth);
  SparseDataset test;
  if (!a.test_data.empty()) test = load_features(a.test_data, a.tfidf, a.idf_smooth);
  const Propensities p = load_propensities_tsv(a.propensities);

  const ExperimentSplits splits =
      make_experiment_splits(data, a.val_fraction, p, a.split_seed, a.mask_seed, test);
  SweepOptions opt;
  opt.l2_grid = grid;
  opt.train_on_clean = a.train_on_clean;
  opt.ks = a.ks;
  opt.subsample_rounds = a.subsample_rounds;
  opt.eval_seed = a.eval_seed;
  const SweepResult res = regularization_sweep(splits, p, cfg, opt);

  std::ofstream out(a.out);
  if (!out) throw ParseError("cannot open '" + a.out + "' for writing");
  out << "l2,split,loss";
  for (const int k : a.ks) out << ",p@" << k;
  for (const int k : a.ks) out << ",r@" << k;
  out << '\n';
  for (const SweepRow& row : res.rows) {
    out << format_double(row.l2) << ',' << row.split << ',' << format_double(row.metrics.loss);
    for (const int k : a.ks) out << ',' << format_double(row.metrics.precision.at(k));
    for (const int k : a.ks) out << ',' << format_double(row.metrics.recall.at(k));
    out << '\n';
  }
  if (!out) throw ParseError("write failed for '" + a.out + "'");

  Manifest m;
  m.command = "sweep";
  m.seed = cfg.seed;
  m.config.emplace_back("data", jstr(a.data));
  m.config.emplace_back("test-data", a.test_data.empty() ? "null" : jstr(a.test_data));
  m.config.emplace_back("propensities", jstr(a.propensities));
  m.config.emplace_back("tfidf", jbool(a.tfidf));
  m.config.emplace_back("idf-smooth", jbool(a.idf_smooth));
  m.config.emplace_back("l2-grid", json_double_array(grid));
  m.config.emplace_back("val-fraction", jnum(a.val_fraction));
  m.config.emplace_back("split-seed", std::to_string(a.split_seed));
  m.config.emplace_back("mask-seed", std::to_string(a.mask_seed));
  m.config.emplace_back("eval-seed", std::to_string(a.eval_seed));
  m.config.emplace_back("train-on-clean", jbool(a.train_on_clean));
  m.config.emplace_back("k", json_int_array(a.ks));
  m.config.emplace_back("subsample-rounds", std::to_string(a.subsample_rounds));
  append_train_config_fields(m.config, cfg, false);
  m.results.emplace_back("best_l2", jnum(res.best_l2));
  m.results.emplace_back("validation_loss", json_double_array(res.validation_loss));
  m.outputs = {a.out};
  write_manifest(m, t0);
  std::cout << "best l2 " << format_double(res.best_l2) << " by noisy-validation loss; wrote "
            << a.out << " (" << res.rows.size() << " rows)\n";
}

// ---------------------------------------------------------------------------
// gap-analysis: finite-sample vs noise-pattern generalization gap.

struct GapArgs {
  std::string data, test_data, propensities, model_path, out;
  bool tfidf = false, idf_smooth = false;
  std::uint64_t mask_seed = 0;
  TrainFlagValues tf;
};

void run_gap(const GapArgs& a) {
  const auto t0 = Clock::now();
  const TrainConfig cfg = resolve_train_config(a.tf);
  const SparseDataset clean_train = load_features(a.data, a.tfidf, a.idf_smooth);
  const SparseDataset clean_test = load_features(a.test_data, a.tfidf, a.idf_smooth);
  const Propensities p = load_propensities_tsv(a.propensities);
  Rng mask_rng(a.mask_seed);
  const SparseDataset noisy_train = mask_dataset(clean_train, p, mask_rng);

  TrainResult trained;
  LinearModel model;
  const bool trains = a.model_path.empty();
  if (trains) {
    trained = train_linear(noisy_train, p, cfg);
    model = trained.model;
  } else {
    model = load_model(a.model_path);
  }
  const GapDecomposition g =
      noise_pattern_gap(model, cfg, p, clean_test, clean_train, noisy_train);

  std::ofstream out(a.out);
  if (!out) throw ParseError("cannot open '" + a.out + "' for writing");
  out << "{\n";
  out << "  \"command\": \"gap-analysis\",\n";
  out << "  \"finite_sample_gap\": " << jnum(g.finite_sample) << ",\n";
  out << "  \"noise_pattern_gap\": " << jnum(g.noise_pattern) << ",\n";
  out << "  \"total_gap\": " << jnum(g.total) << "\n";
  out << "}\n";
  if (!out) throw ParseError("write failed for '" + a.out + "'");

  Manifest m;
  m.command = "gap-analysis";
  m.seed = cfg.seed;
  m.config.emplace_back("data", jstr(a.data));
  m.config.emplace_back("test-data", jstr(a.test_data));
  m.config.emplace_back("propensities", jstr(a.propensities));
  m.config.emplace_back("tfidf", jbool(a.tfidf));
  m.config.emplace_back("idf-smooth", jbool(a.idf_smooth));
  m.config.emplace_back("mask-seed", std::to_string(a.mask_seed));
  m.config.emplace_back("model", trains ? "null" : jstr(a.model_path));
  append_train_config_fields(m.config, cfg, true);
  if (trains) m.results.emplace_back("epoch_log", epoch_log_json(trained.epochs));
  m.outputs = {a.out};
  write_manifest(m, t0);
  std::cout << "finite-sample gap " << format_double(g.finite_sample) << ", noise-pattern gap "
            << format_double(g.noise_pattern) << ", total " << format_double(g.total)
            << "; wrote " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbiased and upper-bound loss estimation, training and evaluation for "
               "multilabel data with missing labels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  PropensityArgs prop;
  CLI::App* cmd_prop =
      app.add_subcommand("propensity", "derive a propensity file from dataset label counts");
  cmd_prop->add_option("--data", prop.data, "dataset file (text or cache format)")->required();
  cmd_prop->add_option("--model", prop.model, "propensity model: jain, linear-inverse")
      ->check(CLI::IsMember({"jain", "linear-inverse"}));
  cmd_prop->add_option("--a", prop.a, "count-model exponent (jain)");
  cmd_prop->add_option("--b", prop.b, "count-model shift (jain)");
  cmd_prop->add_option("--top", prop.top,
                       "inverse propensity of the most frequent label (linear-inverse)");
  cmd_prop->add_option("--bottom", prop.bottom,
                       "inverse propensity of the rarest label (linear-inverse)");
  cmd_prop->add_option("--out", prop.out, "output propensity TSV")->required();

  SimulateArgs sim;
  CLI::App* cmd_sim = app.add_subcommand(
      "simulate-recall", "recall estimators on synthetic data across a propensity grid");
  cmd_sim->add_option("--labels", sim.labels, "number of labels");
  cmd_sim->add_option("--label-prob", sim.label_prob, "per-label positive probability");
  cmd_sim->add_option("--examples", sim.examples, "number of examples");
  cmd_sim->add_option("--p-grid", sim.p_grid, "comma-separated propensity grid")
      ->delimiter(',');
  cmd_sim->add_option("--reps", sim.reps, "mask repetitions per grid point");
  cmd_sim->add_option("--seed", sim.seed, "seed for data, predictions and masks");
  cmd_sim->add_flag("--skip-empty", sim.skip_empty,
                    "drop examples whose observed label set is empty from the averages");
  cmd_sim->add_option("--subsample-rounds", sim.subsample_rounds,
                      "subsampling rounds for over-cap examples");
  cmd_sim->add_option("--cap", sim.cap, "observed-positive cap for subset enumeration");
  cmd_sim->add_option("--threads", sim.threads,
                      "worker threads (0 = PSLOSSES_THREADS env, then all cores)");
  cmd_sim->add_option("--out", sim.out, "output CSV")->required();

  EvaluateArgs ev;
  CLI::App* cmd_eval =
      app.add_subcommand("evaluate", "top-k metric report for a score file against truth labels");
  cmd_eval->add_option("--truth", ev.truth, "dataset file with the reference labels")->required();
  cmd_eval->add_option("--scores", ev.scores, "score file (header + sparse label:score rows)")
      ->required();
  CLI::Option* eval_props =
      cmd_eval->add_option("--propensities", ev.propensities, "propensity TSV (needed by --ps)");
  cmd_eval->add_option("--k", ev.ks, "comma-separated cutoffs")->delimiter(',');
  CLI::Option* eval_ps = cmd_eval->add_flag(
      "--ps", ev.ps, "also report propensity-scored precision/recall (psp@k, psr@k)");
  eval_ps->needs(eval_props);
  cmd_eval->add_option("--filter-q", ev.filter_q,
                       "two-sided quantile for the filtered summaries (reported alongside raw)");
  cmd_eval->add_option("--seed", ev.seed, "seed for subsampled over-cap recall");
  cmd_eval->add_option("--subsample-rounds", ev.subsample_rounds,
                       "subsampling rounds for over-cap examples");
  cmd_eval->add_option("--cap", ev.cap, "observed-positive cap for subset enumeration");
  cmd_eval->add_option("--threads", ev.threads,
                       "worker threads (0 = PSLOSSES_THREADS env, then all cores)");
  cmd_eval->add_option("--out", ev.out, "output JSON report")->required();

  TrainArgs tr;
  CLI::App* cmd_train =
      app.add_subcommand("train", "fit a linear model and save a binary checkpoint");
  cmd_train->add_option("--data", tr.data, "training dataset file")->required();
  cmd_train->add_option("--propensities", tr.propensities,
                        "propensity TSV (omit for all-ones propensities)");
  cmd_train->add_flag("--tfidf", tr.tfidf, "apply a tf-idf transform to the features");
  cmd_train->add_flag("--idf-smooth", tr.idf_smooth, "use the smoothed idf convention (+1)");
  cmd_train->add_option("--warm-start", tr.warm_start,
                        "vanilla pre-training epochs before the configured variant");
  add_train_options(cmd_train, tr.tf, true);
  cmd_train->add_option("--out", tr.out, "output model checkpoint")->required();

  SweepArgs sw;
  CLI::App* cmd_sweep = app.add_subcommand(
      "sweep", "train across an l2 grid on the noisy/clean split protocol and report metrics");
  cmd_sweep->add_option("--data", sw.data, "clean training dataset file")->required();
  cmd_sweep->add_option("--test-data", sw.test_data, "clean test dataset file (optional)");
  cmd_sweep->add_option("--propensities", sw.propensities, "propensity TSV")->required();
  cmd_sweep->add_flag("--tfidf", sw.tfidf, "apply a tf-idf transform to the features");
  cmd_sweep->add_flag("--idf-smooth", sw.idf_smooth, "use the smoothed idf convention (+1)");
  cmd_sweep->add_option("--sweep", sw.sweep, "l2 grid, e.g. 'l2=1e-4,1e-3,1e-2'")->required();
  cmd_sweep->add_option("--val-fraction", sw.val_fraction, "validation fraction of the split");
  cmd_sweep->add_option("--split-seed", sw.split_seed, "train/validation shuffle seed");
  cmd_sweep->add_option("--mask-seed", sw.mask_seed, "label masking seed");
  cmd_sweep->add_option("--eval-seed", sw.eval_seed, "seed for subsampled over-cap recall");
  cmd_sweep->add_flag("--train-on-clean", sw.train_on_clean,
                      "fit the clean labels instead of the masked ones (baseline)");
  cmd_sweep->add_option("--k", sw.ks, "comma-separated metric cutoffs")->delimiter(',');
  cmd_sweep->add_option("--subsample-rounds", sw.subsample_rounds,
                        "subsampling rounds for over-cap examples");
  add_train_options(cmd_sweep, sw.tf, false);
  cmd_sweep->add_option("--out", sw.out, "output CSV")->required();

  GapArgs gp;
  CLI::App* cmd_gap = app.add_subcommand(
      "gap-analysis", "finite-sample vs noise-pattern decomposition of the generalization gap");
  cmd_gap->add_option("--data", gp.data, "clean training dataset file")->required();
  cmd_gap->add_option("--test-data", gp.test_data, "clean test dataset file")->required();
  cmd_gap->add_option("--propensities", gp.propensities, "propensity TSV")->required();
  cmd_gap->add_flag("--tfidf", gp.tfidf, "apply a tf-idf transform to the features");
  cmd_gap->add_flag("--idf-smooth", gp.idf_smooth, "use the smoothed idf convention (+1)");
  cmd_gap->add_option("--mask-seed", gp.mask_seed, "label masking seed");
  cmd_gap->add_option("--model", gp.model_path,
                      "model checkpoint to analyze (omit to train on the masked data)");
  add_train_options(cmd_gap, gp.tf, true);
  cmd_gap->add_option("--out", gp.out, "output JSON report")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help / --version
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*cmd_prop) run_propensity(prop);
    else if (*cmd_sim) run_simulate(sim);
    else if (*cmd_eval) run_evaluate(ev);
    else if (*cmd_train) run_train(tr);
    else if (*cmd_sweep) run_sweep(sw);
    else if (*cmd_gap) run_gap(gp);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
