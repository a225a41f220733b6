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

#include "supremix/mixgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace supremix {

namespace {

constexpr double kMinMixtureNorm = 1e-8;

void require_normalized(const LabeledBatch& batch, const char* who) {
  if (!batch.normalized) {
    throw InvalidArgument(std::string(who) + ": batch must be normalized");
  }
}

bool same_category(const std::vector<int>* categories, Index a, Index b) {
  return categories == nullptr ||
         (*categories)[static_cast<size_t>(a)] ==
             (*categories)[static_cast<size_t>(b)];
}

// k distinct values from [0, n), ascending (Floyd's algorithm).
std::vector<Index> sample_without_replacement(Index n, Index k, Rng& rng) {
  std::unordered_set<Index> chosen;
  chosen.reserve(static_cast<size_t>(k));
  for (Index j = n - k; j < n; ++j) {
    const auto t = static_cast<Index>(
        uniform_index(rng, static_cast<std::uint64_t>(j + 1)));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<Index> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void MixNegConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) ||
      !std::isfinite(beta)) {
    throw InvalidArgument("MixNegConfig: alpha and beta must be > 0");
  }
}

void MixPosConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("MixPosConfig: gamma must be > 0");
  }
  if (max_pos_per_anchor < 1) {
    throw InvalidArgument("MixPosConfig: max_pos_per_anchor must be >= 1");
  }
}

double sample_lambda1(const MixNegConfig& config, Rng& rng) {
  return std::clamp(sample_beta(config.alpha, config.beta, rng), 1e-6,
                    1.0 - 1e-6);
}

std::optional<MixedEmbedding> make_mixture(const LabeledBatch& batch, Index a,
                                           Index b, double lambda,
                                           MixKind kind) {
  const RowVector raw = lambda * batch.embeddings.row(a) +
                        (1.0 - lambda) * batch.embeddings.row(b);
  const double n = raw.norm();
  if (!(n > kMinMixtureNorm)) return std::nullopt;
  MixedEmbedding mix;
  mix.vector = raw / n;
  mix.mixed_label = lambda * batch.labels[static_cast<size_t>(a)] +
                    (1.0 - lambda) * batch.labels[static_cast<size_t>(b)];
  mix.kind = kind;
  mix.source_a = a;
  mix.source_b = b;
  mix.lambda = lambda;
  return mix;
}

std::vector<MixedEmbedding> make_mix_neg(Index anchor,
                                         const LabeledBatch& batch,
                                         const LabelGroups& groups,
                                         const MixNegConfig& config, Rng& rng,
                                         Index* dropped,
                                         const std::vector<int>* categories) {
  require_normalized(batch, "make_mix_neg");
  config.validate();
  const Index rank = groups.rank_of(anchor);
  const Label anchor_bin = groups.unique_labels[static_cast<size_t>(rank)];

  std::vector<MixedEmbedding> out;
  Index lost = 0;
  for (Index j = 0; j < batch.size(); ++j) {
    if (groups.rank_of(j) == rank || !same_category(categories, anchor, j)) {
      continue;
    }
    std::optional<MixedEmbedding> accepted;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const double lambda = sample_lambda1(config, rng);
      auto mix = make_mixture(batch, anchor, j, lambda, MixKind::kMixNeg);
      if (mix && groups.rule.quantize(mix->mixed_label) != anchor_bin) {
        accepted = std::move(mix);
      }
    }
    if (accepted) {
      out.push_back(std::move(*accepted));
    } else {
      ++lost;
    }
  }
  if (dropped) *dropped = lost;
  return out;
}

double solve_lambda2(Label m, Label m_lo, Label m_hi) {
  if (m_lo == m_hi) {
    throw InvalidArgument("solve_lambda2: m_lo == m_hi (division by zero)");
  }
  if (!(m_lo < m && m < m_hi)) {
    throw InvalidArgument(
        "solve_lambda2: label must lie strictly between m_lo and m_hi");
  }
  return (m - m_hi) / (m_lo - m_hi);
}

MixPosWindow mix_pos_window(Index anchor, const LabeledBatch& batch,
                            const LabelGroups& groups,
                            const MixPosConfig& config,
                            const std::vector<int>* categories) {
  config.validate();
  const Index rank = groups.rank_of(anchor);
  const Label m = batch.labels[static_cast<size_t>(anchor)];
  MixPosWindow w;
  if (config.window_mode == WindowMode::kRank) {
    const auto reach = static_cast<Index>(std::ceil(config.gamma));
    for (Index r = std::max<Index>(0, rank - reach); r < rank; ++r) {
      for (Index s : groups.group_indices[static_cast<size_t>(r)]) {
        if (same_category(categories, anchor, s)) w.below.push_back(s);
      }
    }
    const Index top = std::min(groups.num_groups() - 1, rank + reach);
    for (Index r = rank + 1; r <= top; ++r) {
      for (Index s : groups.group_indices[static_cast<size_t>(r)]) {
        if (same_category(categories, anchor, s)) w.above.push_back(s);
      }
    }
  } else {
    for (Index r = 0; r < groups.num_groups(); ++r) {
      if (r == rank) continue;
      for (Index s : groups.group_indices[static_cast<size_t>(r)]) {
        if (!same_category(categories, anchor, s)) continue;
        const double dist = std::abs(batch.labels[static_cast<size_t>(s)] - m);
        if (dist > config.gamma) continue;
        (r < rank ? w.below : w.above).push_back(s);
      }
    }
  }
  return w;
}

std::vector<MixedEmbedding> enumerate_mix_pos(
    Index anchor, const LabeledBatch& batch, const LabelGroups& groups,
    const MixPosConfig& config, Rng& rng, Index* dropped,
    const std::vector<int>* categories) {
  require_normalized(batch, "enumerate_mix_pos");
  const MixPosWindow w =
      mix_pos_window(anchor, batch, groups, config, categories);
  const Index total = w.candidate_count();
  const auto n_above = static_cast<Index>(w.above.size());

  std::vector<Index> picks;
  if (total > config.max_pos_per_anchor) {
    picks = sample_without_replacement(total, config.max_pos_per_anchor, rng);
  } else {
    picks.resize(static_cast<size_t>(total));
    for (Index c = 0; c < total; ++c) picks[static_cast<size_t>(c)] = c;
  }

  const Label m = batch.labels[static_cast<size_t>(anchor)];
  std::vector<MixedEmbedding> out;
  out.reserve(picks.size());
  Index lost = 0;
  for (Index c : picks) {
    const Index lo = w.below[static_cast<size_t>(c / n_above)];
    const Index hi = w.above[static_cast<size_t>(c % n_above)];
    const double lambda = solve_lambda2(m, batch.labels[static_cast<size_t>(lo)],
                                        batch.labels[static_cast<size_t>(hi)]);
    auto mix = make_mixture(batch, lo, hi, lambda, MixKind::kMixPos);
    if (mix) {
      out.push_back(std::move(*mix));
    } else {
      ++lost;
    }
  }
  if (dropped) *dropped = lost;
  return out;
}

std::vector<AnchorContrastSet> build_contrast_sets(
    const LabeledBatch& batch, const LabelGroups& groups,
    const std::optional<MixNegConfig>& neg_cfg,
    const std::optional<MixPosConfig>& pos_cfg,
    const std::optional<std::vector<int>>& categories, std::uint64_t seed) {
  require_normalized(batch, "build_contrast_sets");
  if (groups.num_samples() != batch.size()) {
    throw InvalidArgument("build_contrast_sets: groups do not match batch");
  }
  if (categories && static_cast<Index>(categories->size()) != batch.size()) {
    throw InvalidArgument(
        "build_contrast_sets: group constraint length must equal batch size");
  }
  if (neg_cfg) neg_cfg->validate();
  if (pos_cfg) pos_cfg->validate();
  const std::vector<int>* cats = categories ? &*categories : nullptr;

  std::vector<AnchorContrastSet> sets(static_cast<size_t>(batch.size()));
  parallel_for(sets.size(), [&](std::size_t i) {
    const auto a = static_cast<Index>(i);
    AnchorContrastSet& s = sets[i];
    s.anchor_index = a;
    const Index rank = groups.rank_of(a);
    for (Index j = 0; j < batch.size(); ++j) {
      if (j == a) continue;
      (groups.rank_of(j) == rank ? s.positive_real : s.negative_real)
          .push_back(j);
    }
    if (neg_cfg) {
      Rng rng = make_stream(seed, {static_cast<std::uint64_t>(a), 0});
      s.negative_mix =
          make_mix_neg(a, batch, groups, *neg_cfg, rng, &s.dropped_mix_neg,
                       cats);
    }
    if (pos_cfg) {
      Rng rng = make_stream(seed, {static_cast<std::uint64_t>(a), 1});
      s.mix_pos_candidates =
          mix_pos_window(a, batch, groups, *pos_cfg, cats).candidate_count();
      s.positive_mix = enumerate_mix_pos(a, batch, groups, *pos_cfg, rng,
                                         &s.dropped_mix_pos, cats);
    }
  });
  return sets;
}

}  // namespace supremix
