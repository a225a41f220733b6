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

// Label-wise supervised contrastive regression loss with distance-magnifying
// weights and embedding-level mixtures.
//
// For an anchor a with label m, real group size k_m, positives P (real
// same-label samples plus Mix-pos) and contrast elements E (all positives and
// negatives, anchor excluded):
//
//   term(a) = -(1/k_m) * sum_{p in P} log( exp(s_ap/tau) /
//                                          sum_{e in E} w(m, m_e) exp(s_ae/tau) )
//
// with s the inner product of unit-norm embeddings and
// w(m, m') = (1 + |m - m'|) / (m_max - m_min). Every positive gets
// w = 1 / (m_max - m_min). The loss is the sum of all anchor terms.

#ifndef SUPREMIX_LOSS_HPP
#define SUPREMIX_LOSS_HPP

#include <vector>

#include "supremix/core.hpp"
#include "supremix/mixgen.hpp"

namespace supremix {

struct LossConfig {
  double tau = 0.5;
  bool use_dm = true;
  bool use_mix_neg = true;
  bool use_mix_pos = true;
  LabelRange range;
  /// Number of hardest real negative logits kept as a diagnostic.
  Index top_k = 1000;

  void validate() const;

  /// All toggles off: plain supervised contrastive loss.
  static LossConfig supcon(double tau);
};

struct LossOutput {
  double loss = 0.0;
  /// d loss / d pre-normalization embeddings (N x d).
  Matrix grad;
  std::vector<double> per_anchor_terms;
  /// Mean inner product over real positive pairs (0 when there are none).
  double avg_pos_logit = 0.0;
  /// Largest real negative inner products, descending.
  std::vector<double> top_k_neg_logits;
};

/// Distance-magnifying weight (1 + |m - m_bar|) / (m_max - m_min).
double dm_weight(Label m, Label m_bar, const LabelRange& range);

/// Loss value, analytic gradient and logit diagnostics. `batch.embeddings`
/// are taken as pre-normalization rows; they are projected onto the unit
/// sphere internally and mixtures are rebuilt from the stored lambdas.
LossOutput supremix_loss(const LabeledBatch& batch,
                         const std::vector<AnchorContrastSet>& sets,
                         const LossConfig& config);

/// Same as supremix_loss without the gradient.
double supremix_loss_value(const LabeledBatch& batch,
                           const std::vector<AnchorContrastSet>& sets,
                           const LossConfig& config);

/// Logits of one anchor against its contrast elements, in evaluation order
/// (real positives, Mix-pos, real negatives, Mix-neg; disabled kinds absent).
struct AnchorLogits {
  std::vector<double> dots;
  std::vector<double> weights;
  std::vector<Label> labels;
  std::vector<bool> positive;
  Index k_m = 1;

  Index num_positive() const;
};

/// `z` must hold unit-norm rows.
AnchorLogits anchor_logits(const LabeledBatch& batch, const Matrix& z,
                           const AnchorContrastSet& set,
                           const LossConfig& config);

/// One anchor's loss term as a function of its logits.
double anchor_term(const AnchorLogits& logits, double tau);

/// Contrast sets holding only real pairs.
std::vector<AnchorContrastSet> real_contrast_sets(const LabelGroups& groups);

LossOutput supcon_baseline_loss(const LabeledBatch& batch,
                                const LabelGroups& groups, double tau);

/// Closed-form lower bound
///   L* = sum_m (1/k_m) sum_i P_i log(P_i / W)
/// where P_i counts the anchor's positives (real + Mix-pos) and W is the label
/// range width. Anchors with no positives contribute 0.
double loss_lower_bound(const std::vector<AnchorContrastSet>& sets,
                        const LabelGroups& groups, const LabelRange& range);

/// Bound matching a specific loss configuration: Mix-pos are counted only
/// when enabled and W is 1 when distance weighting is off.
double loss_lower_bound(const std::vector<AnchorContrastSet>& sets,
                        const LabelGroups& groups, const LossConfig& config);

/// Central differences of supremix_loss_value w.r.t. every pre-normalization
/// coordinate, with mixtures rebuilt from the same lambdas.
Matrix finite_difference_gradient(const LabeledBatch& batch,
                                  const std::vector<AnchorContrastSet>& sets,
                                  const LossConfig& config, double h = 1e-4);

/// max|a - b| / max(max|b|, floor): the gradient agreement measure used by
/// every finite-difference check.
double max_relative_error(const Matrix& analytic, const Matrix& reference,
                          double floor = 1e-8);

}  // namespace supremix

#endif  // SUPREMIX_LOSS_HPP
