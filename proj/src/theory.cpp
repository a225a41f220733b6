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

#include "supremix/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace supremix {

namespace {

constexpr double kLogitStep = 1e-5;
constexpr double kDerivativeTolerance = 1e-4;

// Closed form dL/ds_e = (P/k_m) w_e exp(s_e/tau) / (C tau),
// C = sum_l w_l exp(s_l/tau).
double closed_form_logit_grad(const AnchorLogits& a, size_t e, double tau) {
  double peak = -std::numeric_limits<double>::infinity();
  for (size_t l = 0; l < a.dots.size(); ++l) {
    peak = std::max(peak, std::log(a.weights[l]) + a.dots[l] / tau);
  }
  double sum = 0.0;
  for (size_t l = 0; l < a.dots.size(); ++l) {
    sum += std::exp(std::log(a.weights[l]) + a.dots[l] / tau - peak);
  }
  const double log_c = peak + std::log(sum);
  const double b = static_cast<double>(a.num_positive()) /
                   static_cast<double>(a.k_m);
  return b * std::exp(std::log(a.weights[e]) + a.dots[e] / tau - log_c) / tau;
}

double perturbed_logit_grad(AnchorLogits a, size_t e, double tau) {
  const double s = a.dots[e];
  a.dots[e] = s + kLogitStep;
  const double up = anchor_term(a, tau);
  a.dots[e] = s - kLogitStep;
  const double down = anchor_term(a, tau);
  return (up - down) / (2.0 * kLogitStep);
}

}  // namespace

DmCheckReport check_distance_magnifying(
    const LabeledBatch& batch, const std::vector<AnchorContrastSet>& sets,
    const LossConfig& config, Index trials, Rng& rng) {
  config.validate();
  if (trials < 1) throw InvalidArgument("check_distance_magnifying: trials < 1");
  const std::set<Label> distinct(batch.labels.begin(), batch.labels.end());
  if (distinct.size() < 3) {
    throw InvalidArgument(
        "check_distance_magnifying: need at least 3 distinct labels");
  }
  const Matrix z = normalize_embeddings(batch.embeddings);
  LossConfig weighted = config;
  weighted.use_dm = true;
  LossConfig uniform = config;
  uniform.use_dm = false;

  struct Candidate {
    AnchorLogits with_w;
    AnchorLogits without_w;
    std::vector<size_t> negatives;
    Label label;
  };
  std::vector<Candidate> candidates;
  for (const auto& s : sets) {
    Candidate c{anchor_logits(batch, z, s, weighted),
                anchor_logits(batch, z, s, uniform), {},
                batch.labels[static_cast<size_t>(s.anchor_index)]};
    if (c.with_w.num_positive() == 0) continue;
    std::set<double> distances;
    for (size_t e = 0; e < c.with_w.positive.size(); ++e) {
      if (c.with_w.positive[e]) continue;
      c.negatives.push_back(e);
      distances.insert(std::abs(c.with_w.labels[e] - c.label));
    }
    if (distances.size() >= 2) candidates.push_back(std::move(c));
  }
  if (candidates.empty()) {
    throw InvalidArgument(
        "check_distance_magnifying: no anchor has positives and two "
        "negatives at different label distances");
  }

  DmCheckReport report;
  report.min_ratio_margin = std::numeric_limits<double>::infinity();
  const Index max_draws = trials * 1000;
  Index draws = 0;
  while (report.trials < trials && draws++ < max_draws) {
    const Candidate& c =
        candidates[uniform_index(rng, candidates.size())];
    size_t far = c.negatives[uniform_index(rng, c.negatives.size())];
    size_t near = c.negatives[uniform_index(rng, c.negatives.size())];
    double d_far = std::abs(c.with_w.labels[far] - c.label);
    double d_near = std::abs(c.with_w.labels[near] - c.label);
    if (d_far == d_near) {
      ++report.skipped_draws;
      continue;
    }
    if (d_far < d_near) {
      std::swap(far, near);
      std::swap(d_far, d_near);
    }
    ++report.trials;

    const double g_far = closed_form_logit_grad(c.with_w, far, config.tau);
    const double g_near = closed_form_logit_grad(c.with_w, near, config.tau);
    if (!(g_far > 0.0) || !(g_near > 0.0)) ++report.positivity_failures;

    for (size_t e : {far, near}) {
      const double closed = closed_form_logit_grad(c.with_w, e, config.tau);
      const double numeric = perturbed_logit_grad(c.with_w, e, config.tau);
      const double rel = std::abs(numeric - closed) / std::abs(closed);
      report.max_derivative_rel_err = std::max(report.max_derivative_rel_err, rel);
      if (!(rel < kDerivativeTolerance)) ++report.derivative_failures;
    }

    const double ratio_w = g_far / g_near;
    const double ratio_u =
        closed_form_logit_grad(c.without_w, far, config.tau) /
        closed_form_logit_grad(c.without_w, near, config.tau);
    if (!(ratio_w > ratio_u)) ++report.ratio_failures;
    report.min_ratio_margin =
        std::min(report.min_ratio_margin, ratio_w / ratio_u - 1.0);
  }
  if (report.trials == 0) report.min_ratio_margin = 0.0;
  return report;
}

LabeledBatch construct_ordered_embeddings(const std::vector<Label>& labels,
                                          Index dim) {
  if (dim < 2) {
    throw InvalidArgument("construct_ordered_embeddings: dimension must be >= 2");
  }
  const LabelRange range = label_range(labels);
  Matrix z = Matrix::Zero(static_cast<Index>(labels.size()), dim);
  for (size_t i = 0; i < labels.size(); ++i) {
    const double t = (labels[i] - range.min) / range.width();
    const double n = std::sqrt(1.0 + t * t);
    z(static_cast<Index>(i), 0) = 1.0 / n;
    z(static_cast<Index>(i), 1) = t / n;
  }
  return LabeledBatch::make(std::move(z), labels, true);
}

InfimumReport infimum_gap(const std::vector<Label>& labels, Index dim,
                          const std::vector<double>& taus,
                          const MixNegConfig& neg_cfg,
                          const MixPosConfig& pos_cfg, std::uint64_t seed) {
  if (taus.empty()) throw InvalidArgument("infimum_gap: empty schedule");
  for (size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0) || (i > 0 && !(taus[i] < taus[i - 1]))) {
      throw InvalidArgument(
          "infimum_gap: temperatures must be positive and strictly decreasing");
    }
  }
  const LabeledBatch batch = construct_ordered_embeddings(labels, dim);
  const LabelGroups groups = group_by_label(batch.labels);
  const auto sets =
      build_contrast_sets(batch, groups, neg_cfg, pos_cfg, std::nullopt, seed);

  InfimumReport report;
  report.taus = taus;
  LossConfig cfg;
  cfg.range = label_range(labels);
  report.lower_bound = loss_lower_bound(sets, groups, cfg);
  for (double tau : taus) {
    cfg.tau = tau;
    const double loss = supremix_loss_value(batch, sets, cfg);
    report.losses.push_back(loss);
    report.gaps.push_back(loss - report.lower_bound);
  }

  const Matrix& z = batch.embeddings;
  report.theta0 = std::numeric_limits<double>::infinity();
  for (Index a = 0; a < groups.num_groups(); ++a) {
    for (Index b = a + 1; b < groups.num_groups(); ++b) {
      const double c = z.row(groups.group_indices[a][0])
                           .dot(z.row(groups.group_indices[b][0]));
      report.theta0 = std::min(report.theta0, std::acos(std::clamp(c, -1.0, 1.0)));
    }
  }
  for (const auto& s : sets) {
    for (const auto& m : s.positive_mix) {
      report.max_mix_pos_deviation =
          std::max(report.max_mix_pos_deviation,
                   1.0 - z.row(s.anchor_index).dot(m.vector));
    }
  }
  return report;
}

EpsilonOrderedResult check_epsilon_ordered(const LabeledBatch& batch,
                                           const LabelGroups& groups,
                                           double eps) {
  if (!batch.normalized) {
    throw InvalidArgument("check_epsilon_ordered: batch must be normalized");
  }
  if (!(eps > 0.0)) throw InvalidArgument("check_epsilon_ordered: eps must be > 0");
  EpsilonOrderedResult out;
  const Matrix& z = batch.embeddings;
  for (Index r = 0; r < groups.num_groups(); ++r) {
    RowVector centroid = RowVector::Zero(z.cols());
    for (Index i : groups.group_indices[static_cast<size_t>(r)]) centroid += z.row(i);
    const double n = centroid.norm();
    for (Index i : groups.group_indices[static_cast<size_t>(r)]) {
      const double dist = n > kMinRowNorm
                              ? (z.row(i) - centroid / n).norm()
                              : std::numeric_limits<double>::infinity();
      if (!(dist < eps)) {
        out.violations.push_back({OrderViolationKind::kGroupSpread, i, r, dist});
      }
    }
  }
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = i + 1; j < z.rows(); ++j) {
      if (groups.rank_of(i) == groups.rank_of(j)) continue;
      const double c = std::abs(z.row(i).dot(z.row(j)));
      if (!(c < 1.0 - eps)) {
        out.violations.push_back({OrderViolationKind::kCrossLabel, i, j, c});
      }
    }
  }
  out.ordered = out.violations.empty();
  return out;
}

}  // namespace supremix
