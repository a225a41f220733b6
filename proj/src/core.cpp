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

#include "supremix/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace supremix {

LabeledBatch LabeledBatch::make(Matrix embeddings, std::vector<Label> labels,
                                bool normalized) {
  if (embeddings.rows() < 2) {
    throw InvalidArgument("LabeledBatch: need at least 2 samples");
  }
  if (embeddings.cols() < 2) {
    throw InvalidArgument("LabeledBatch: embedding dimension must be >= 2");
  }
  if (static_cast<Index>(labels.size()) != embeddings.rows()) {
    throw InvalidArgument("LabeledBatch: label count does not match rows");
  }
  if (!embeddings.allFinite()) {
    throw InvalidArgument("LabeledBatch: non-finite embedding entry");
  }
  for (Label l : labels) {
    if (!std::isfinite(l)) {
      throw InvalidArgument("LabeledBatch: non-finite label");
    }
  }
  if (normalized) {
    for (Index i = 0; i < embeddings.rows(); ++i) {
      if (std::abs(embeddings.row(i).norm() - 1.0) > 1e-9) {
        throw InvalidArgument("LabeledBatch: row " + std::to_string(i) +
                              " is flagged normalized but is not unit norm");
      }
    }
  }
  return LabeledBatch{std::move(embeddings), std::move(labels), normalized};
}

Label QuantizationRule::quantize(Label value) const {
  if (bin_width <= 0.0) return value;
  return std::floor(value / bin_width) * bin_width + 0.5 * bin_width;
}

LabelRange LabelRange::make(Label min, Label max) {
  if (!std::isfinite(min) || !std::isfinite(max) || !(max > min)) {
    throw DegenerateRange("label range requires max > min (got [" +
                          std::to_string(min) + ", " + std::to_string(max) +
                          "])");
  }
  return LabelRange{min, max};
}

LabelGroups group_by_label(std::span<const Label> labels,
                           QuantizationRule rule) {
  if (labels.empty()) {
    throw InvalidArgument("group_by_label: empty label vector");
  }
  if (rule.bin_width < 0.0 || !std::isfinite(rule.bin_width)) {
    throw InvalidArgument("group_by_label: bin width must be >= 0");
  }
  std::map<Label, std::vector<Index>> by_value;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(labels[i])) {
      throw InvalidArgument("group_by_label: non-finite label at index " +
                            std::to_string(i));
    }
    by_value[rule.quantize(labels[i])].push_back(static_cast<Index>(i));
  }

  LabelGroups groups;
  groups.rule = rule;
  groups.rank_of_sample.assign(labels.size(), 0);
  for (auto& [value, members] : by_value) {
    const auto rank = static_cast<Index>(groups.unique_labels.size());
    for (Index s : members) groups.rank_of_sample[static_cast<size_t>(s)] = rank;
    groups.unique_labels.push_back(value);
    groups.group_indices.push_back(std::move(members));
  }
  return groups;
}

Matrix normalize_embeddings(const Matrix& raw) {
  Matrix out(raw.rows(), raw.cols());
  for (Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    if (!(n > kMinRowNorm)) {
      throw DegenerateEmbedding(
          i, "degenerate embedding: row " + std::to_string(i) +
                 " has norm " + std::to_string(n));
    }
    out.row(i) = raw.row(i) / n;
  }
  return out;
}

Matrix normalize_embeddings_backward(const Matrix& raw,
                                     const Matrix& normalized,
                                     const Matrix& grad_normalized) {
  Matrix out(raw.rows(), raw.cols());
  for (Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    const auto z = normalized.row(i);
    const auto g = grad_normalized.row(i);
    out.row(i) = (g - z * z.dot(g)) / n;
  }
  return out;
}

LabelRange label_range(std::span<const Label> train_labels) {
  if (train_labels.empty()) {
    throw DegenerateRange("label_range: empty training labels");
  }
  const auto [lo, hi] =
      std::minmax_element(train_labels.begin(), train_labels.end());
  if (!(*hi > *lo)) {
    throw DegenerateRange("label_range: all training labels are equal");
  }
  return LabelRange::make(*lo, *hi);
}

}  // namespace supremix
