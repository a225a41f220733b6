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

// Executable checks of the loss's analytic properties: distance magnifying
// of negative-pair gradients, the lower bound, its approach on ordered
// embeddings, and the epsilon-ordered predicate.

#ifndef SUPREMIX_THEORY_HPP
#define SUPREMIX_THEORY_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "supremix/core.hpp"
#include "supremix/loss.hpp"
#include "supremix/mixgen.hpp"
#include "supremix/random.hpp"

namespace supremix {

struct DmCheckReport {
  Index trials = 0;
  Index positivity_failures = 0;
  Index ratio_failures = 0;
  /// Closed-form dL/ds disagreeing with a logit perturbation by >= 1e-4.
  Index derivative_failures = 0;
  /// Draws rejected because the two negatives were equidistant from the anchor.
  Index skipped_draws = 0;
  /// min over trials of ratio_with_w / ratio_without_w - 1.
  double min_ratio_margin = 0.0;
  double max_derivative_rel_err = 0.0;

  bool passed() const {
    return positivity_failures == 0 && ratio_failures == 0 &&
           derivative_failures == 0 && trials > 0;
  }
};

/// Draws `trials` (anchor, farther negative, nearer negative) triples and
/// checks that both negative-logit gradients are positive and that distance
/// weights raise the farther/nearer gradient ratio. Uses DM weights from
/// config.range regardless of config.use_dm.
DmCheckReport check_distance_magnifying(
    const LabeledBatch& batch, const std::vector<AnchorContrastSet>& sets,
    const LossConfig& config, Index trials, Rng& rng);

/// Identical rows per label on the line (1, (m - m_min)/(m_max - m_min)) in
/// the first two coordinates, unit-normalized.
LabeledBatch construct_ordered_embeddings(const std::vector<Label>& labels,
                                          Index dim);

struct InfimumReport {
  std::vector<double> taus;
  std::vector<double> losses;
  double lower_bound = 0.0;
  std::vector<double> gaps;
  /// Smallest angle (radians) between distinct-label embeddings.
  double theta0 = 0.0;
  /// max over Mix-pos of 1 - <anchor, mixture>: how far normalization moves
  /// a Mix-pos off its anchor.
  double max_mix_pos_deviation = 0.0;
};

/// Loss minus bound on the ordered construction along a descending
/// temperature schedule. All loss toggles are on.
InfimumReport infimum_gap(const std::vector<Label>& labels, Index dim,
                          const std::vector<double>& taus,
                          const MixNegConfig& neg_cfg,
                          const MixPosConfig& pos_cfg, std::uint64_t seed);

enum class OrderViolationKind { kGroupSpread, kCrossLabel };

struct OrderViolation {
  OrderViolationKind kind = OrderViolationKind::kGroupSpread;
  Index i = 0;
  /// Second sample for kCrossLabel; group rank for kGroupSpread.
  Index j = 0;
  double value = 0.0;
};

struct EpsilonOrderedResult {
  bool ordered = true;
  std::vector<OrderViolation> violations;
};

/// True iff every sample lies within eps of its group's renormalized
/// centroid and every cross-label pair has |<z_i, z_j>| < 1 - eps.
EpsilonOrderedResult check_epsilon_ordered(const LabeledBatch& batch,
                                           const LabelGroups& groups,
                                           double eps);

}  // namespace supremix

#endif  // SUPREMIX_THEORY_HPP
