#pragma once

// Propensity models: the empirical count-based model of Jain et al. and a
// synthetic linear-inverse schedule used by the controlled experiments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"

namespace pslosses {

struct JainModelParams {
  double a = 0.55;
  double b = 1.5;
};

// p_j = 1 / (1 + c * (n_j + b)^(-a)) with c = (ln n - 1) * (b + 1)^a, where
// n_j is label j's positive count and n the number of examples. Monotone in
// n_j: frequent labels are observed more reliably. Requires ln n > 1 so that
// c > 0 and the result stays inside (0, 1).
inline double jain_propensity(std::int64_t label_count, std::int64_t num_examples,
                              const JainModelParams& params) {
  if (num_examples < 3)
    throw ParameterError("jain_propensity: need at least 3 examples (log n - 1 must be positive)");
  if (!(params.a > 0.0))
    throw ParameterError("jain_propensity: a must be positive, got " + format_double(params.a));
  if (params.b <= -1.0)
    throw ParameterError("jain_propensity: b must exceed -1");
  const double shifted = static_cast<double>(label_count) + params.b;
  if (shifted <= 0.0)
    throw ParameterError("jain_propensity: label count " + std::to_string(label_count) +
                         " with b = " + format_double(params.b) +
                         " makes log(n_j + b) singular");
  const double c = (std::log(static_cast<double>(num_examples)) - 1.0) *
                   std::pow(params.b + 1.0, params.a);
  return 1.0 / (1.0 + c * std::exp(-params.a * std::log(shifted)));
}

inline Propensities jain_propensities(const std::vector<std::int64_t>& label_counts,
                                      std::int64_t num_examples,
                                      const JainModelParams& params) {
  std::vector<double> p;
  p.reserve(label_counts.size());
  for (const std::int64_t n_j : label_counts)
    p.push_back(jain_propensity(n_j, num_examples, params));
  return Propensities(std::move(p));
}

// Synthetic schedule: the inverse propensity grows linearly with label rank,
// from `top` at rank 0 to `bottom` at the last rank. Ranks are whatever order
// the caller assigned (by convention: decreasing label frequency).
inline Propensities linear_inverse_propensities(std::int32_t num_labels, double top,
                                                double bottom) {
  if (num_labels < 2)
    throw ParameterError("linear_inverse_propensities: need at least 2 labels");
  if (!(top >= 1.0) || !(bottom >= top))
    throw ParameterError("linear_inverse_propensities: require 1 <= top <= bottom, got top = " +
                         format_double(top) + ", bottom = " + format_double(bottom));
  std::vector<double> p(static_cast<std::size_t>(num_labels));
  const double step = (bottom - top) / static_cast<double>(num_labels - 1);
  for (std::int32_t r = 0; r < num_labels; ++r)
    p[static_cast<std::size_t>(r)] = 1.0 / (top + static_cast<double>(r) * step);
  return Propensities(std::move(p));
}

// Maps the linear-inverse schedule onto concrete labels by frequency rank:
// the most frequent label gets the rank-0 (largest) propensity and the rarest
// the rank-(l-1) (smallest) one. Ties are broken by lower label index.
inline Propensities frequency_ranked_linear_inverse(const std::vector<std::int64_t>& label_counts,
                                                    double top, double bottom) {
  const std::int32_t l = static_cast<std::int32_t>(label_counts.size());
  const std::vector<double> ranked = linear_inverse_propensities(l, top, bottom).values();
  std::vector<std::int32_t> order(label_counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    return label_counts[static_cast<std::size_t>(a)] > label_counts[static_cast<std::size_t>(b)];
  });
  std::vector<double> by_label(label_counts.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    by_label[static_cast<std::size_t>(order[rank])] = ranked[rank];
  return Propensities(std::move(by_label));
}

// ---------------------------------------------------------------------------
// Propensity file format: one "label<TAB>propensity" line per label, every
// label in [0, l) present exactly once.

inline void save_propensities_tsv(const Propensities& p, std::ostream& out) {
  for (std::int32_t j = 0; j < p.size(); ++j)
    out << j << '\t' << format_double(p[j]) << '\n';
}

inline void save_propensities_tsv(const Propensities& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  save_propensities_tsv(p, out);
  if (!out) throw ParseError("write failed for '" + path + "'");
}

inline Propensities load_propensities_tsv(std::istream& in, const std::string& name) {
  std::vector<double> values;
  std::vector<char> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(name + ":" + std::to_string(line_no) + ": expected 'label<TAB>propensity'");
    std::size_t pos = 0;
    long long label = -1;
    double value = 0.0;
    try {
      label = std::stoll(line.substr(0, tab), &pos);
      if (pos != tab) throw std::invalid_argument("");
      value = std::stod(line.substr(tab + 1), &pos);
      if (tab + 1 + pos != line.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(name + ":" + std::to_string(line_no) + ": bad 'label<TAB>propensity' line");
    }
    if (label < 0 || label > 100000000)
      throw ParseError(name + ":" + std::to_string(line_no) + ": label index out of range");
    const std::size_t j = static_cast<std::size_t>(label);
    if (j >= values.size()) {
      values.resize(j + 1, 0.0);
      seen.resize(j + 1, 0);
    }
    if (seen[j])
      throw ParseError(name + ":" + std::to_string(line_no) + ": duplicate label " +
                       std::to_string(label));
    seen[j] = 1;
    values[j] = value;
  }
  if (values.empty()) throw ParseError(name + ": no propensity entries");
  for (std::size_t j = 0; j < seen.size(); ++j)
    if (!seen[j])
      throw ParseError(name + ": missing entry for label " + std::to_string(j));
  try {
    return Propensities(std::move(values));
  } catch (const ParameterError& e) {
    throw ParseError(name + ": " + e.what());
  }
}

inline Propensities load_propensities_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return load_propensities_tsv(in, path);
}

}  // namespace pslosses
