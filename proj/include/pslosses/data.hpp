#pragma once

// Dataset container and I/O. The text format is the extreme-classification
// convention: a header "num_examples num_features num_labels", then one line
// per example, "l1,l2,...<space>f1:v1 f2:v2 ..." with an empty label field
// allowed (line starts with the separating space). A binary cache format is
// provided for fast reload.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"

namespace pslosses {

struct SparseDataset {
  std::int32_t num_features = 0;
  std::int32_t num_labels = 0;
  std::vector<std::size_t> offsets{0};     // CSR row offsets, size num_examples + 1
  std::vector<std::int32_t> feature_index; // flat, sorted within each row
  std::vector<double> feature_value;
  std::vector<SparseLabels> labels;        // one set per example

  std::size_t num_examples() const { return labels.size(); }

  std::span<const std::int32_t> row_indices(std::size_t i) const {
    return {feature_index.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::span<const double> row_values(std::size_t i) const {
    return {feature_value.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }

  void append_row(std::vector<std::int32_t> idx, std::vector<double> val,
                  SparseLabels row_labels) {
    feature_index.insert(feature_index.end(), idx.begin(), idx.end());
    feature_value.insert(feature_value.end(), val.begin(), val.end());
    offsets.push_back(feature_index.size());
    labels.push_back(std::move(row_labels));
  }
};

namespace detail {

inline ParseError parse_error(const std::string& name, std::size_t line, const std::string& what) {
  return ParseError(name + ":" + std::to_string(line) + ": " + what);
}

inline bool parse_int(std::string_view text, std::int64_t& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool parse_double(std::string_view text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace detail

// Parses the text format; errors carry `name` and the 1-based line number.
inline SparseDataset load_xmc(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw detail::parse_error(name, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::int64_t n = 0, f = 0, l = 0;
  {
    std::size_t a = line.find(' ');
    std::size_t b = a == std::string::npos ? std::string::npos : line.find(' ', a + 1);
    if (a == std::string::npos || b == std::string::npos ||
        !detail::parse_int(std::string_view(line).substr(0, a), n) ||
        !detail::parse_int(std::string_view(line).substr(a + 1, b - a - 1), f) ||
        !detail::parse_int(std::string_view(line).substr(b + 1), l))
      throw detail::parse_error(name, 1, "header must be 'num_examples num_features num_labels'");
  }
  if (n < 1 || f < 1 || l < 1)
    throw detail::parse_error(name, 1, "header counts must be positive");

  SparseDataset ds;
  ds.num_features = static_cast<std::int32_t>(f);
  ds.num_labels = static_cast<std::int32_t>(l);
  ds.labels.reserve(static_cast<std::size_t>(n));

  std::size_t line_no = 1;
  std::vector<std::int32_t> fidx;
  std::vector<double> fval;
  std::vector<std::int32_t> lidx;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<std::int64_t>(ds.num_examples()) >= n) {
      if (line.empty()) continue;  // tolerate a trailing blank line
      throw detail::parse_error(name, line_no, "more data lines than the header announced");
    }
    fidx.clear();
    fval.clear();
    lidx.clear();

    std::string_view rest(line);
    // Label field: everything before the first space, unless it is already a
    // feature token (contains ':'), which means the label field was empty.
    std::string_view label_field;
    const std::size_t space = rest.find(' ');
    std::string_view head = rest.substr(0, space);
    if (head.find(':') == std::string_view::npos) {
      label_field = head;
      rest = space == std::string_view::npos ? std::string_view() : rest.substr(space + 1);
    }
    while (!label_field.empty()) {
      const std::size_t comma = label_field.find(',');
      const std::string_view token = label_field.substr(0, comma);
      std::int64_t id = 0;
      if (!detail::parse_int(token, id))
        throw detail::parse_error(name, line_no, "bad label '" + std::string(token) + "'");
      if (id < 0 || id >= l)
        throw detail::parse_error(name, line_no, "label " + std::to_string(id) +
                                                     " outside [0, " + std::to_string(l) + ")");
      lidx.push_back(static_cast<std::int32_t>(id));
      if (comma == std::string_view::npos) break;
      label_field = label_field.substr(comma + 1);
    }

    while (!rest.empty()) {
      const std::size_t sp = rest.find(' ');
      const std::string_view token = rest.substr(0, sp);
      rest = sp == std::string_view::npos ? std::string_view() : rest.substr(sp + 1);
      if (token.empty()) continue;  // collapse repeated spaces
      const std::size_t colon = token.find(':');
      if (colon == std::string_view::npos)
        throw detail::parse_error(name, line_no,
                                  "feature token '" + std::string(token) + "' lacks ':'");
      std::int64_t id = 0;
      double value = 0.0;
      if (!detail::parse_int(token.substr(0, colon), id) ||
          !detail::parse_double(token.substr(colon + 1), value))
        throw detail::parse_error(name, line_no, "bad feature token '" + std::string(token) + "'");
      if (id < 0 || id >= f)
        throw detail::parse_error(name, line_no, "feature " + std::to_string(id) +
                                                     " outside [0, " + std::to_string(f) + ")");
      if (!std::isfinite(value))
        throw detail::parse_error(name, line_no, "non-finite feature value");
      fidx.push_back(static_cast<std::int32_t>(id));
      fval.push_back(value);
    }

    // Sort features by index, reject duplicates.
    std::vector<std::size_t> order(fidx.size());
    for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return fidx[a] < fidx[b]; });
    std::vector<std::int32_t> sidx(fidx.size());
    std::vector<double> sval(fidx.size());
    for (std::size_t t = 0; t < order.size(); ++t) {
      sidx[t] = fidx[order[t]];
      sval[t] = fval[order[t]];
      if (t > 0 && sidx[t] == sidx[t - 1])
        throw detail::parse_error(name, line_no,
                                  "duplicate feature " + std::to_string(sidx[t]));
    }

    SparseLabels row_labels = [&]() {
      try {
        return SparseLabels::from_unsorted(lidx, ds.num_labels);
      } catch (const DimensionError& e) {
        throw detail::parse_error(name, line_no, e.what());
      }
    }();
    ds.append_row(std::move(sidx), std::move(sval), std::move(row_labels));
  }
  if (static_cast<std::int64_t>(ds.num_examples()) != n)
    throw ParseError(name + ": header announced " + std::to_string(n) + " examples, file has " +
                     std::to_string(ds.num_examples()));
  return ds;
}

inline SparseDataset load_xmc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return load_xmc(in, path);
}

inline void write_xmc(const SparseDataset& ds, std::ostream& out) {
  out << ds.num_examples() << ' ' << ds.num_features << ' ' << ds.num_labels << '\n';
  for (std::size_t i = 0; i < ds.num_examples(); ++i) {
    const auto& lab = ds.labels[i].indices();
    for (std::size_t t = 0; t < lab.size(); ++t) {
      if (t) out << ',';
      out << lab[t];
    }
    const auto idx = ds.row_indices(i);
    const auto val = ds.row_values(i);
    for (std::size_t t = 0; t < idx.size(); ++t)
      out << ' ' << idx[t] << ':' << format_double(val[t]);
    out << '\n';
  }
}

inline void write_xmc(const SparseDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  write_xmc(ds, out);
}

// ---------------------------------------------------------------------------
// Transforms.

// tf-idf reweighting with per-row L2 normalization afterwards. tf is the
// stored value (raw counts for text data); df counts rows holding an entry
// for the feature. Plain mode: idf = ln(N / df); smooth mode uses the +1
// convention idf = ln((1 + N) / (1 + df)) + 1, which never vanishes.
inline SparseDataset tfidf_transform(const SparseDataset& ds, bool smooth = false) {
  const double n = static_cast<double>(ds.num_examples());
  std::vector<std::int64_t> df(static_cast<std::size_t>(ds.num_features), 0);
  for (std::size_t i = 0; i < ds.num_examples(); ++i)
    for (const std::int32_t j : ds.row_indices(i)) df[static_cast<std::size_t>(j)] += 1;

  std::vector<double> idf(df.size(), 0.0);
  for (std::size_t j = 0; j < df.size(); ++j) {
    if (df[j] == 0) continue;
    idf[j] = smooth ? std::log((1.0 + n) / (1.0 + static_cast<double>(df[j]))) + 1.0
                    : std::log(n / static_cast<double>(df[j]));
  }

  SparseDataset out = ds;
  for (std::size_t i = 0; i < out.num_examples(); ++i) {
    const std::size_t begin = out.offsets[i], end = out.offsets[i + 1];
    double norm_sq = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      out.feature_value[t] *= idf[static_cast<std::size_t>(out.feature_index[t])];
      norm_sq += out.feature_value[t] * out.feature_value[t];
    }
    if (norm_sq > 0.0) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (std::size_t t = begin; t < end; ++t) out.feature_value[t] *= inv;
    }
  }
  return out;
}

inline SparseDataset take_rows(const SparseDataset& ds, const std::vector<std::size_t>& rows) {
  SparseDataset out;
  out.num_features = ds.num_features;
  out.num_labels = ds.num_labels;
  out.labels.reserve(rows.size());
  for (const std::size_t i : rows) {
    const auto idx = ds.row_indices(i);
    const auto val = ds.row_values(i);
    out.append_row({idx.begin(), idx.end()}, {val.begin(), val.end()}, ds.labels[i]);
  }
  return out;
}

struct SplitResult {
  SparseDataset train;
  SparseDataset val;
};

// Seeded shuffle split; the validation side gets floor(N * val_fraction)
// examples, training the rest. Each side keeps the original example order.
inline SplitResult split_dataset(const SparseDataset& ds, double val_fraction,
                                 std::uint64_t seed) {
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw ParameterError("split_dataset: val_fraction must lie in (0, 1)");
  const std::size_t n = ds.num_examples();
  const std::size_t val_size =
      static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
  if (val_size == 0 || val_size == n)
    throw ParameterError("split_dataset: split leaves an empty side (n = " +
                         std::to_string(n) + ", val_fraction = " +
                         format_double(val_fraction) + ")");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  shuffle_in_place(perm, rng);
  std::vector<std::size_t> val_rows(perm.begin(), perm.begin() + val_size);
  std::vector<std::size_t> train_rows(perm.begin() + val_size, perm.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {take_rows(ds, train_rows), take_rows(ds, val_rows)};
}

inline std::vector<std::int64_t> label_counts(const SparseDataset& ds) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(ds.num_labels), 0);
  for (const SparseLabels& y : ds.labels)
    for (const std::int32_t j : y.indices()) counts[static_cast<std::size_t>(j)] += 1;
  return counts;
}

struct RelabelResult {
  SparseDataset data;
  std::vector<std::int32_t> selected;  // selected[new_id] = old_id, by frequency rank
};

// Keeps the n most frequent labels (ties to the lower old index) and relabels
// them 0..n-1 by frequency rank. Examples that lose all their labels are kept
// unless drop_unlabeled is set.
inline RelabelResult top_n_labels(const SparseDataset& ds, std::int32_t n,
                                  bool drop_unlabeled = false) {
  if (n < 1 || n > ds.num_labels)
    throw ParameterError("top_n_labels: n = " + std::to_string(n) + " outside [1, " +
                         std::to_string(ds.num_labels) + "]");
  const std::vector<std::int64_t> counts = label_counts(ds);
  std::vector<std::int32_t> order(static_cast<std::size_t>(ds.num_labels));
  for (std::int32_t j = 0; j < ds.num_labels; ++j) order[static_cast<std::size_t>(j)] = j;
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (counts[static_cast<std::size_t>(a)] != counts[static_cast<std::size_t>(b)])
      return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    return a < b;
  });
  order.resize(static_cast<std::size_t>(n));

  std::vector<std::int32_t> new_id(static_cast<std::size_t>(ds.num_labels), -1);
  for (std::int32_t r = 0; r < n; ++r)
    new_id[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;

  RelabelResult out;
  out.selected = order;
  out.data.num_features = ds.num_features;
  out.data.num_labels = n;
  for (std::size_t i = 0; i < ds.num_examples(); ++i) {
    std::vector<std::int32_t> remapped;
    for (const std::int32_t j : ds.labels[i].indices()) {
      const std::int32_t r = new_id[static_cast<std::size_t>(j)];
      if (r >= 0) remapped.push_back(r);
    }
    if (remapped.empty() && drop_unlabeled) continue;
    const auto idx = ds.row_indices(i);
    const auto val = ds.row_values(i);
    out.data.append_row({idx.begin(), idx.end()}, {val.begin(), val.end()},
                        SparseLabels::from_unsorted(std::move(remapped), n));
  }
  if (out.data.num_examples() == 0)
    throw ParameterError("top_n_labels: no examples left after dropping unlabeled rows");
  return out;
}

// One observation draw over a whole dataset: features are shared, labels are
// masked example by example (example order, label order within an example).
inline SparseDataset mask_dataset(const SparseDataset& ds, const Propensities& p, Rng& rng) {
  if (p.size() != ds.num_labels)
    throw DimensionError("mask_dataset: propensity vector length " +
                         std::to_string(p.size()) + " != num_labels " +
                         std::to_string(ds.num_labels));
  SparseDataset out = ds;
  for (SparseLabels& y : out.labels) y = apply_mask(y, p, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Binary cache: little-endian, header then blocks.
//   magic "PSLC" | u32 version = 1 | u64 num_examples | u32 num_features |
//   u32 num_labels | u64 row_offsets[num_examples+1] | i32 feature_index[nnz] |
//   f64 feature_value[nnz] | u64 label_offsets[num_examples+1] | i32 label_ids[...]

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));  // assumes little-endian host (x86/arm64)
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw ParseError("cache truncated while reading " + what);
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_cache(const SparseDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out.write("PSLC", 4);
  detail::put_le<std::uint32_t>(out, 1);
  detail::put_le<std::uint64_t>(out, ds.num_examples());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_features));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_labels));
  for (const std::size_t o : ds.offsets) detail::put_le<std::uint64_t>(out, o);
  for (const std::int32_t j : ds.feature_index) detail::put_le<std::int32_t>(out, j);
  for (const double v : ds.feature_value) detail::put_le<double>(out, v);
  std::uint64_t off = 0;
  detail::put_le<std::uint64_t>(out, off);
  for (const SparseLabels& y : ds.labels) {
    off += y.count();
    detail::put_le<std::uint64_t>(out, off);
  }
  for (const SparseLabels& y : ds.labels)
    for (const std::int32_t j : y.indices()) detail::put_le<std::int32_t>(out, j);
  if (!out) throw ParseError("write failed for '" + path + "'");
}

inline SparseDataset load_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PSLC", 4) != 0)
    throw ParseError("'" + path + "' is not a dataset cache (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != 1)
    throw ParseError("'" + path + "': unsupported cache version " + std::to_string(version));
  const auto n = detail::get_le<std::uint64_t>(in, "num_examples");
  SparseDataset ds;
  ds.num_features = static_cast<std::int32_t>(detail::get_le<std::uint32_t>(in, "num_features"));
  ds.num_labels = static_cast<std::int32_t>(detail::get_le<std::uint32_t>(in, "num_labels"));
  ds.offsets.assign(n + 1, 0);
  for (auto& o : ds.offsets) o = detail::get_le<std::uint64_t>(in, "row offsets");
  const std::size_t nnz = ds.offsets.back();
  ds.feature_index.resize(nnz);
  for (auto& j : ds.feature_index) j = detail::get_le<std::int32_t>(in, "feature indices");
  ds.feature_value.resize(nnz);
  for (auto& v : ds.feature_value) v = detail::get_le<double>(in, "feature values");
  std::vector<std::uint64_t> label_offsets(n + 1);
  for (auto& o : label_offsets) o = detail::get_le<std::uint64_t>(in, "label offsets");
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int32_t> idx(label_offsets[i + 1] - label_offsets[i]);
    for (auto& j : idx) j = detail::get_le<std::int32_t>(in, "label ids");
    ds.labels.emplace_back(std::move(idx), ds.num_labels);
  }
  return ds;
}

// Text or cache, detected by the magic bytes.
inline SparseDataset load_dataset_auto(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ParseError("cannot open '" + path + "'");
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::memcmp(magic, "PSLC", 4) == 0) return load_cache(path);
  return load_xmc(path);
}

}  // namespace pslosses
