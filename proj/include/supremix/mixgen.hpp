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

// Embedding-level mixtures used as hard contrastive pairs.
//
// Mix-neg (anchor-inclusive): lambda * z_anchor + (1 - lambda) * z_neg with
// lambda ~ Beta(alpha, beta), one per real negative of the anchor.
//
// Mix-pos (anchor-exclusive): lambda * z_lo + (1 - lambda) * z_hi where z_lo
// sits below the anchor's label and z_hi above it, both within a window, and
// lambda is chosen so the mixed label equals the anchor's label.
//
// Every mixture is renormalized to unit length. Mixtures only enter the loss
// term of the anchor they were built for.

#ifndef SUPREMIX_MIXGEN_HPP
#define SUPREMIX_MIXGEN_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "supremix/core.hpp"
#include "supremix/random.hpp"

namespace supremix {

struct MixNegConfig {
  double alpha = 2.0;
  double beta = 8.0;

  void validate() const;
};

enum class WindowMode { kRank, kLabelDistance };

struct MixPosConfig {
  double gamma = 1.0;
  WindowMode window_mode = WindowMode::kRank;
  Index max_pos_per_anchor = 32;

  void validate() const;
};

enum class MixKind { kMixNeg, kMixPos };

/// A renormalized convex combination of two real embeddings.
///
/// `vector` is lambda * z[source_a] + (1 - lambda) * z[source_b] scaled to
/// unit norm; `mixed_label` the same combination of the source labels.
/// For Mix-neg, source_a is the anchor.
struct MixedEmbedding {
  RowVector vector;
  Label mixed_label = 0.0;
  MixKind kind = MixKind::kMixNeg;
  Index source_a = 0;
  Index source_b = 0;
  double lambda = 0.5;
};

/// Everything one anchor contrasts against.
struct AnchorContrastSet {
  Index anchor_index = 0;
  std::vector<Index> positive_real;
  std::vector<MixedEmbedding> positive_mix;
  std::vector<Index> negative_real;
  std::vector<MixedEmbedding> negative_mix;
  /// Mix-neg draws dropped after the single resample (label collision or a
  /// near-zero mixture).
  Index dropped_mix_neg = 0;
  /// Mix-pos candidates dropped because the mixture had near-zero norm.
  Index dropped_mix_pos = 0;
  /// Window-product candidate count before capping.
  Index mix_pos_candidates = 0;
};

/// Beta draw clamped to [1e-6, 1 - 1e-6].
double sample_lambda1(const MixNegConfig& config, Rng& rng);

/// Mix-neg mixtures for one anchor, one per real negative. A draw whose mixed
/// label lands in the anchor's bin, or whose mixture is near zero, is redrawn
/// once and then dropped (counted in `dropped`). With `categories`, only
/// negatives sharing the anchor's category are mixed.
std::vector<MixedEmbedding> make_mix_neg(
    Index anchor, const LabeledBatch& batch, const LabelGroups& groups,
    const MixNegConfig& config, Rng& rng, Index* dropped = nullptr,
    const std::vector<int>* categories = nullptr);

/// lambda with lambda * m_lo + (1 - lambda) * m_hi == m.
double solve_lambda2(Label m, Label m_lo, Label m_hi);

/// Sample indices that fall in the anchor's lower and upper windows.
struct MixPosWindow {
  std::vector<Index> below;
  std::vector<Index> above;
  Index candidate_count() const {
    return static_cast<Index>(below.size() * above.size());
  }
};

MixPosWindow mix_pos_window(Index anchor, const LabeledBatch& batch,
                            const LabelGroups& groups,
                            const MixPosConfig& config,
                            const std::vector<int>* categories = nullptr);

/// Mix-pos mixtures for one anchor. When the window holds more pairs than
/// max_pos_per_anchor, a uniform subset is drawn from `rng`.
std::vector<MixedEmbedding> enumerate_mix_pos(
    Index anchor, const LabeledBatch& batch, const LabelGroups& groups,
    const MixPosConfig& config, Rng& rng, Index* dropped = nullptr,
    const std::vector<int>* categories = nullptr);

/// One contrast set per sample. Absent configs disable that mixture kind.
/// When `categories` is given, mixture sources share the anchor's category;
/// real positives and negatives are unrestricted. Anchor i draws from the
/// substream derive_seed(seed, {i, kind}), so output is independent of
/// thread scheduling.
std::vector<AnchorContrastSet> build_contrast_sets(
    const LabeledBatch& batch, const LabelGroups& groups,
    const std::optional<MixNegConfig>& neg_cfg,
    const std::optional<MixPosConfig>& pos_cfg,
    const std::optional<std::vector<int>>& categories, std::uint64_t seed);

/// Mixes rows a and b of a normalized batch. Returns nullopt when the
/// combination is too close to zero to renormalize.
std::optional<MixedEmbedding> make_mixture(const LabeledBatch& batch, Index a,
                                           Index b, double lambda,
                                           MixKind kind);

/// Recomputes a mixture's unnormalized vector from (possibly perturbed)
/// unit-norm embeddings.
inline RowVector mixture_raw(const Matrix& z, const MixedEmbedding& mix) {
  return mix.lambda * z.row(mix.source_a) +
         (1.0 - mix.lambda) * z.row(mix.source_b);
}

}  // namespace supremix

#endif  // SUPREMIX_MIXGEN_HPP
