// Copyright 2026 The SupReMix Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "supremix/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "supremix/random.hpp"

namespace supremix {

namespace {

Dataset select_rows(const Dataset& data, const std::vector<Index>& keep) {
  Dataset out;
  out.inputs.resize(static_cast<Index>(keep.size()), data.inputs.cols());
  out.group_names = data.group_names;
  out.feature_names = data.feature_names;
  if (data.groups) out.groups.emplace();
  for (size_t r = 0; r < keep.size(); ++r) {
    const auto i = static_cast<size_t>(keep[r]);
    out.inputs.row(static_cast<Index>(r)) = data.inputs.row(keep[r]);
    out.labels.push_back(data.labels[i]);
    out.split.push_back(data.split[i]);
    if (data.groups) out.groups->push_back((*data.groups)[i]);
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_cell(const std::string& cell, size_t row, size_t col) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty()) {
    throw ParseError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                     ", column " + std::to_string(col));
  }
  return v;
}

Split parse_split(const std::string& cell, size_t row) {
  if (cell == "train") return Split::kTrain;
  if (cell == "val") return Split::kVal;
  if (cell == "test") return Split::kTest;
  throw ParseError("invalid split '" + cell + "' at row " + std::to_string(row));
}

// Uniform random permutation of [0, n) via Fisher-Yates.
std::vector<size_t> random_permutation(size_t n, Rng& rng) {
  std::vector<size_t> p(n);
  for (size_t i = 0; i < n; ++i) p[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

void SyntheticSpec::validate() const {
  if (n < 10) throw InvalidArgument("SyntheticSpec: n must be >= 10");
  if (input_dim < 3) throw InvalidArgument("SyntheticSpec: input_dim must be >= 3");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidArgument("SyntheticSpec: noise_sigma must be >= 0");
  }
  if (label_grid < 2) throw InvalidArgument("SyntheticSpec: label_grid must be >= 2");
}

std::vector<Index> Dataset::indices(Split s) const {
  std::vector<Index> out;
  for (size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(static_cast<Index>(i));
  return out;
}

Matrix Dataset::inputs_of(Split s) const {
  const auto idx = indices(s);
  Matrix out(static_cast<Index>(idx.size()), inputs.cols());
  for (size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = inputs.row(idx[r]);
  return out;
}

std::vector<Label> Dataset::labels_of(Split s) const {
  std::vector<Label> out;
  for (Index i : indices(s)) out.push_back(labels[static_cast<size_t>(i)]);
  return out;
}

std::optional<std::vector<int>> Dataset::groups_of(Split s) const {
  if (!groups) return std::nullopt;
  std::vector<int> out;
  for (Index i : indices(s)) out.push_back((*groups)[static_cast<size_t>(i)]);
  return out;
}

void Dataset::validate() const {
  const auto n = static_cast<size_t>(inputs.rows());
  if (labels.size() != n || split.size() != n || (groups && groups->size() != n)) {
    throw InvalidArgument("Dataset: column lengths disagree");
  }
  if (!inputs.allFinite()) throw InvalidArgument("Dataset: non-finite input");
  for (Label m : labels)
    if (!std::isfinite(m)) throw InvalidArgument("Dataset: non-finite label");
  const auto train = labels_of(Split::kTrain);
  if (std::set<Label>(train.begin(), train.end()).size() < 2) {
    throw InvalidArgument("Dataset: train split needs at least 2 distinct labels");
  }
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Index n = spec.n, dim = spec.input_dim;
  Dataset data;
  Rng label_rng = make_stream(spec.seed, {1});
  for (Index i = 0; i < n; ++i) {
    data.labels.push_back(
        static_cast<double>(uniform_index(label_rng, static_cast<std::uint64_t>(spec.label_grid))) /
        static_cast<double>(spec.label_grid - 1));
  }

  Rng map_rng = make_stream(spec.seed, {2});
  std::normal_distribution<double> normal(0.0, 1.0);
  data.inputs.resize(n, dim);
  const double two_pi = 2.0 * std::numbers::pi;
  if (spec.kind == SyntheticKind::kHelix) {
    Matrix g(dim, 3);
    for (Index r = 0; r < dim; ++r)
      for (Index c = 0; c < 3; ++c) g(r, c) = normal(map_rng);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(dim, 3);
    for (Index i = 0; i < n; ++i) {
      const double m = data.labels[static_cast<size_t>(i)];
      const Eigen::Vector3d base(std::cos(2.0 * two_pi * m), std::sin(2.0 * two_pi * m), m);
      data.inputs.row(i) = (q * base).transpose();
    }
  } else {
    Matrix amp(dim, 5), freq(dim, 5), phase(dim, 5);
    for (Index c = 0; c < dim; ++c) {
      for (Index k = 0; k < 5; ++k) {
        amp(c, k) = normal(map_rng) / std::sqrt(5.0);
        freq(c, k) = 0.5 + 2.5 * uniform01(map_rng);
        phase(c, k) = two_pi * uniform01(map_rng);
      }
    }
    for (Index i = 0; i < n; ++i) {
      const double m = data.labels[static_cast<size_t>(i)];
      for (Index c = 0; c < dim; ++c) {
        double v = 0.0;
        for (Index k = 0; k < 5; ++k) v += amp(c, k) * std::sin(two_pi * freq(c, k) * m + phase(c, k));
        data.inputs(i, c) = v;
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    Rng noise_rng = make_stream(spec.seed, {3});
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < dim; ++c) data.inputs(i, c) += spec.noise_sigma * normal(noise_rng);
  }

  Rng split_rng = make_stream(spec.seed, {4});
  const auto order = random_permutation(static_cast<size_t>(n), split_rng);
  const auto n_train = static_cast<size_t>(n * 8 / 10);
  const auto n_val = static_cast<size_t>(n / 10);
  data.split.assign(static_cast<size_t>(n), Split::kTest);
  for (size_t r = 0; r < order.size(); ++r) {
    if (r < n_train) {
      data.split[order[r]] = Split::kTrain;
    } else if (r < n_train + n_val) {
      data.split[order[r]] = Split::kVal;
    }
  }
  for (Index c = 0; c < dim; ++c) data.feature_names.push_back("x" + std::to_string(c + 1));
  data.validate();
  return data;
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::optional<std::string>& group_column,
                 std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header row");
  const auto header = split_fields(line);
  auto find = [&](const std::string& name) -> std::optional<size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<size_t>(it - header.begin());
  };
  const auto label_col = find(label_column);
  if (!label_col) throw ParseError(path + ": missing label column '" + label_column + "'");
  std::optional<size_t> group_col;
  if (group_column) {
    group_col = find(*group_column);
    if (!group_col) throw ParseError(path + ": missing group column '" + *group_column + "'");
  }
  const auto split_col = find("split");

  Dataset data;
  std::vector<size_t> feature_cols;
  for (size_t c = 0; c < header.size(); ++c) {
    if (c == *label_col || c == group_col || c == split_col) continue;
    feature_cols.push_back(c);
    data.feature_names.push_back(header[c]);
  }
  if (feature_cols.empty()) throw ParseError(path + ": no feature columns");

  std::vector<std::vector<double>> rows;
  std::map<std::string, int> group_ids;
  if (group_col) data.groups.emplace();
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(f.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    std::vector<double> values;
    for (size_t c : feature_cols) values.push_back(parse_cell(f[c], row, c + 1));
    rows.push_back(std::move(values));
    data.labels.push_back(parse_cell(f[*label_col], row, *label_col + 1));
    if (split_col) {
      data.split.push_back(parse_split(f[*split_col], row));
    } else {
      Rng rng(derive_seed(split_seed, {static_cast<std::uint64_t>(rows.size() - 1)}));
      const double u = uniform01(rng);
      data.split.push_back(u < 0.8 ? Split::kTrain : (u < 0.9 ? Split::kVal : Split::kTest));
    }
    if (group_col) {
      const auto [it, inserted] =
          group_ids.emplace(f[*group_col], static_cast<int>(data.group_names.size()));
      if (inserted) data.group_names.push_back(f[*group_col]);
      data.groups->push_back(it->second);
    }
  }
  data.inputs.resize(static_cast<Index>(rows.size()), static_cast<Index>(feature_cols.size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < feature_cols.size(); ++c)
      data.inputs(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& name : data.feature_names) out << name << ',';
  out << "y,split";
  if (data.groups) out << ",group";
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    const auto s = static_cast<size_t>(i);
    for (Index c = 0; c < data.inputs.cols(); ++c) out << data.inputs(i, c) << ',';
    out << data.labels[s] << ',' << split_name(data.split[s]);
    if (data.groups) out << ',' << data.group_names[static_cast<size_t>((*data.groups)[s])];
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

Matrix load_matrix_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header row");
  const auto names = split_fields(line);
  std::vector<double> values;
  size_t row = 1, rows = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_fields(line);
    if (f.size() != names.size()) {
      throw ParseError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(f.size()) + " fields, expected " +
                       std::to_string(names.size()));
    }
    for (size_t c = 0; c < f.size(); ++c) values.push_back(parse_cell(f[c], row, c + 1));
    ++rows;
  }
  if (header) *header = names;
  Matrix m(static_cast<Index>(rows), static_cast<Index>(names.size()));
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < names.size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = values[r * names.size() + c];
  return m;
}

Dataset permute_labels(const Dataset& data, std::uint64_t seed) {
  std::vector<Label> unique(data.labels.begin(), data.labels.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() < 2) throw InvalidArgument("permute_labels: need at least 2 distinct labels");

  std::vector<size_t> perm;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = make_stream(seed, {attempt});
    perm = random_permutation(unique.size(), rng);
    if (!std::is_sorted(perm.begin(), perm.end())) break;
  }
  std::map<Label, Label> mapping;
  for (size_t i = 0; i < unique.size(); ++i) mapping[unique[i]] = unique[perm[i]];
  Dataset out = data;
  for (auto& m : out.labels) m = mapping.at(m);
  return out;
}

Dataset subsample(const Dataset& data, Index n_train, std::uint64_t seed) {
  const auto train = data.indices(Split::kTrain);
  if (n_train < 2 || n_train > static_cast<Index>(train.size())) {
    throw InvalidArgument("subsample: n_train must lie in [2, train size]");
  }
  if (n_train == static_cast<Index>(train.size())) return data;
  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    Rng rng = make_stream(seed, {attempt});
    const auto perm = random_permutation(train.size(), rng);
    std::set<Label> distinct;
    std::vector<Index> keep;
    for (Index i = 0; i < n_train; ++i) {
      keep.push_back(train[perm[static_cast<size_t>(i)]]);
      distinct.insert(data.labels[static_cast<size_t>(keep.back())]);
    }
    if (distinct.size() < 2) continue;
    for (Index i = 0; i < data.size(); ++i)
      if (data.split[static_cast<size_t>(i)] != Split::kTrain) keep.push_back(i);
    std::sort(keep.begin(), keep.end());
    return select_rows(data, keep);
  }
  throw InvalidArgument("subsample: could not draw 2 distinct train labels in 10 attempts");
}

Dataset filter_label_range(const Dataset& data,
                           const std::vector<LabelInterval>& excluded,
                           Index* removed) {
  for (const auto& iv : excluded) {
    if (!(iv.lo <= iv.hi)) throw InvalidArgument("filter_label_range: interval with lo > hi");
  }
  std::vector<Index> keep;
  Index dropped = 0;
  bool train_left = false;
  for (Index i = 0; i < data.size(); ++i) {
    const auto s = static_cast<size_t>(i);
    const bool hit = data.split[s] == Split::kTrain &&
                     std::any_of(excluded.begin(), excluded.end(), [&](const LabelInterval& iv) {
                       return iv.lo <= data.labels[s] && data.labels[s] <= iv.hi;
                     });
    if (hit) {
      ++dropped;
      continue;
    }
    if (data.split[s] == Split::kTrain) train_left = true;
    keep.push_back(i);
  }
  if (!train_left) throw InvalidArgument("filter_label_range: train split would be empty");
  if (removed) *removed = dropped;
  return select_rows(data, keep);
}

}  // namespace supremix
