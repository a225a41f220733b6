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

#ifndef SUPREMIX_CORE_HPP
#define SUPREMIX_CORE_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "supremix/error.hpp"

namespace supremix {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Regression target, in whatever units the task uses.
using Label = double;

/// Rows below this norm cannot be projected onto the unit sphere.
inline constexpr double kMinRowNorm = 1e-12;

/// N embeddings (one per row) with their scalar labels.
///
/// When `normalized` is set every row has unit Euclidean norm (within 1e-9).
/// Use `make` to construct a validated batch.
struct LabeledBatch {
  Matrix embeddings;
  std::vector<Label> labels;
  bool normalized = false;

  Index size() const { return embeddings.rows(); }
  Index dim() const { return embeddings.cols(); }

  /// Validates N >= 2, d >= 2, finite entries and (if requested) unit rows.
  static LabeledBatch make(Matrix embeddings, std::vector<Label> labels,
                           bool normalized);
};

/// Label grouping rule. A zero bin width groups by exact equality; a positive
/// width maps each label to the centre of its floor bin.
struct QuantizationRule {
  double bin_width = 0.0;

  Label quantize(Label value) const;
};

/// Samples partitioned by (quantized) label, groups in ascending label order.
///
/// Within a group indices keep their order of appearance in the input.
struct LabelGroups {
  std::vector<Label> unique_labels;
  std::vector<std::vector<Index>> group_indices;
  std::vector<Index> rank_of_sample;
  QuantizationRule rule;

  Index num_groups() const { return static_cast<Index>(unique_labels.size()); }
  Index num_samples() const {
    return static_cast<Index>(rank_of_sample.size());
  }
  Index group_size(Index rank) const {
    return static_cast<Index>(group_indices[static_cast<size_t>(rank)].size());
  }
  Index rank_of(Index sample) const {
    return rank_of_sample[static_cast<size_t>(sample)];
  }
};

/// Global label extent of a training split. Fixed once computed.
struct LabelRange {
  Label min = 0.0;
  Label max = 1.0;

  double width() const { return max - min; }

  /// Throws DegenerateRange unless max > min and both are finite.
  static LabelRange make(Label min, Label max);
};

LabelGroups group_by_label(std::span<const Label> labels,
                           QuantizationRule rule = {});

/// Divides each row by its Euclidean norm.
/// Throws DegenerateEmbedding naming the first row with norm <= 1e-12.
Matrix normalize_embeddings(const Matrix& raw);

/// Pulls a gradient taken w.r.t. unit-normalized rows back to the raw rows:
/// row i becomes (I - z_i z_i^T) g_i / |x_i|.
Matrix normalize_embeddings_backward(const Matrix& raw,
                                     const Matrix& normalized,
                                     const Matrix& grad_normalized);

LabelRange label_range(std::span<const Label> train_labels);

}  // namespace supremix

#endif  // SUPREMIX_CORE_HPP
