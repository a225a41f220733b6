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

// Datasets: synthetic ordinal manifolds, CSV ingestion, and the label
// perturbations used by the experiments (permutation, subsampling, range
// exclusion).

#ifndef SUPREMIX_DATA_HPP
#define SUPREMIX_DATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "supremix/core.hpp"

namespace supremix {

enum class SyntheticKind { kHelix, kSmoothRandom };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kHelix;
  Index n = 2000;
  Index input_dim = 16;
  double noise_sigma = 0.05;
  /// Number of equispaced label values in [0, 1].
  Index label_grid = 41;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split : std::uint8_t { kTrain, kVal, kTest };

const char* split_name(Split s);

struct Dataset {
  Matrix inputs;
  std::vector<Label> labels;
  std::vector<Split> split;
  /// Optional categorical group per sample, as an index into group_names.
  std::optional<std::vector<int>> groups;
  std::vector<std::string> group_names;
  std::vector<std::string> feature_names;

  Index size() const { return inputs.rows(); }
  std::vector<Index> indices(Split s) const;
  Matrix inputs_of(Split s) const;
  std::vector<Label> labels_of(Split s) const;
  std::optional<std::vector<int>> groups_of(Split s) const;

  /// Shapes agree and the train split holds at least two distinct labels.
  void validate() const;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

/// Every column other than the label, group and "split" columns is a feature.
/// Without a split column, rows are assigned 80/10/10 by a seeded hash.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::optional<std::string>& group_column = std::nullopt,
                 std::uint64_t split_seed = 0);

/// Header: features, then "y", "split" and (when present) "group".
void write_csv(const Dataset& data, const std::string& path);

/// All-numeric CSV with a header row. Column names go to `header`.
Matrix load_matrix_csv(const std::string& path,
                       std::vector<std::string>* header = nullptr);

/// Applies a seeded non-identity bijection of the unique label values to all
/// samples.
Dataset permute_labels(const Dataset& data, std::uint64_t seed);

/// Keeps n_train seeded-uniform train samples; val and test are untouched.
Dataset subsample(const Dataset& data, Index n_train, std::uint64_t seed);

/// Closed interval [lo, hi].
struct LabelInterval {
  Label lo = 0.0;
  Label hi = 0.0;
};

/// Drops train samples whose label falls inside any interval.
Dataset filter_label_range(const Dataset& data,
                           const std::vector<LabelInterval>& excluded,
                           Index* removed = nullptr);

}  // namespace supremix

#endif  // SUPREMIX_DATA_HPP
