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

#include "supremix/loss.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace supremix {

namespace {

// Contrast element of one anchor, in evaluation order: real positives,
// Mix-pos, real negatives, Mix-neg.
struct Element {
  const MixedEmbedding* mix = nullptr;  // null for a real sample
  Index row = 0;                        // real sample index
  double log_weight = 0.0;
  bool positive = false;
};

struct AnchorResult {
  double term = 0.0;
  // d term / d s_ae for every element (s = raw inner product).
  std::vector<double> coeff;
  std::vector<Element> elements;
  // Unit contrast vectors, one row per element.
  Matrix contrast;
  // Pre-normalization norm of each mixture element (1 for real rows).
  std::vector<double> mix_norm;
};

std::vector<Element> collect_elements(const LabeledBatch& batch,
                                      const AnchorContrastSet& set,
                                      const LossConfig& config) {
  const Label m = batch.labels[static_cast<size_t>(set.anchor_index)];
  const double log_pos_w =
      config.use_dm ? -std::log(config.range.width()) : 0.0;
  auto neg_w = [&](Label other) {
    return config.use_dm ? std::log(dm_weight(m, other, config.range)) : 0.0;
  };

  std::vector<Element> els;
  els.reserve(set.positive_real.size() + set.positive_mix.size() +
              set.negative_real.size() + set.negative_mix.size());
  for (Index j : set.positive_real) els.push_back({nullptr, j, log_pos_w, true});
  if (config.use_mix_pos) {
    for (const auto& mix : set.positive_mix) {
      els.push_back({&mix, 0, log_pos_w, true});
    }
  }
  for (Index j : set.negative_real) {
    els.push_back({nullptr, j, neg_w(batch.labels[static_cast<size_t>(j)]),
                   false});
  }
  if (config.use_mix_neg) {
    for (const auto& mix : set.negative_mix) {
      els.push_back({&mix, 0, neg_w(mix.mixed_label), false});
    }
  }
  return els;
}

AnchorResult evaluate_anchor(const LabeledBatch& batch, const Matrix& z,
                             const AnchorContrastSet& set, Index k_m,
                             const LossConfig& config) {
  AnchorResult r;
  r.elements = collect_elements(batch, set, config);
  Index n_pos = 0;
  for (const auto& e : r.elements) n_pos += e.positive ? 1 : 0;
  if (n_pos == 0) return r;

  const auto za = z.row(set.anchor_index);
  const size_t n = r.elements.size();
  r.contrast.resize(static_cast<Index>(n), z.cols());
  r.mix_norm.assign(n, 1.0);
  for (size_t e = 0; e < n; ++e) {
    const Element& el = r.elements[e];
    const auto row = static_cast<Index>(e);
    if (el.mix == nullptr) {
      r.contrast.row(row) = z.row(el.row);
    } else {
      r.contrast.row(row) = el.mix->lambda * z.row(el.mix->source_a) +
                            (1.0 - el.mix->lambda) * z.row(el.mix->source_b);
      r.mix_norm[e] = r.contrast.row(row).norm();
      r.contrast.row(row) /= r.mix_norm[e];
    }
  }
  const Vector dot_vec = r.contrast * za.transpose();
  std::vector<double> dots(dot_vec.data(), dot_vec.data() + n), logits(n);
  double peak = -std::numeric_limits<double>::infinity();
  for (size_t e = 0; e < n; ++e) {
    logits[e] = r.elements[e].log_weight + dots[e] / config.tau;
    peak = std::max(peak, logits[e]);
  }
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - peak);
  const double lse = peak + std::log(sum);

  const double inv_k = 1.0 / static_cast<double>(k_m);
  double pos_sum = 0.0;
  for (size_t e = 0; e < n; ++e) {
    if (r.elements[e].positive) pos_sum += dots[e] / config.tau;
  }
  r.term = inv_k * (static_cast<double>(n_pos) * lse - pos_sum);

  r.coeff.resize(n);
  for (size_t e = 0; e < n; ++e) {
    const double p = std::exp(logits[e] - lse);
    r.coeff[e] = inv_k *
                 (static_cast<double>(n_pos) * p -
                  (r.elements[e].positive ? 1.0 : 0.0)) /
                 config.tau;
  }
  if (!std::isfinite(r.term)) {
    throw NumericalError("supremix_loss: non-finite term for anchor " +
                         std::to_string(set.anchor_index));
  }
  return r;
}

void fill_diagnostics(const Matrix& z,
                      const std::vector<AnchorContrastSet>& sets, Index top_k,
                      LossOutput& out) {
  double pos_total = 0.0;
  Index pos_count = 0;
  std::vector<double> neg;
  for (const auto& s : sets) {
    const auto za = z.row(s.anchor_index);
    for (Index j : s.positive_real) {
      if (j <= s.anchor_index) continue;
      pos_total += za.dot(z.row(j));
      ++pos_count;
    }
    for (Index j : s.negative_real) {
      if (j > s.anchor_index) neg.push_back(za.dot(z.row(j)));
    }
  }
  out.avg_pos_logit = pos_count > 0 ? pos_total / static_cast<double>(pos_count)
                                    : 0.0;
  const auto keep = std::min<size_t>(neg.size(), static_cast<size_t>(top_k));
  std::partial_sort(neg.begin(), neg.begin() + static_cast<long>(keep),
                    neg.end(), std::greater<>());
  neg.resize(keep);
  out.top_k_neg_logits = std::move(neg);
}

LossOutput evaluate(const LabeledBatch& batch,
                    const std::vector<AnchorContrastSet>& sets,
                    const LossConfig& config, bool want_grad) {
  config.validate();
  const Matrix z = normalize_embeddings(batch.embeddings);

  // k_m: real samples sharing the anchor's label, i.e. its real positives
  // plus itself.
  std::vector<AnchorResult> results(sets.size());
  parallel_for(sets.size(), [&](std::size_t i) {
    const auto& s = sets[i];
    const auto k_m = static_cast<Index>(s.positive_real.size()) + 1;
    results[i] = evaluate_anchor(batch, z, s, k_m, config);
  });

  LossOutput out;
  out.per_anchor_terms.reserve(sets.size());
  for (const auto& r : results) {
    out.loss += r.term;
    out.per_anchor_terms.push_back(r.term);
  }
  if (!std::isfinite(out.loss)) {
    throw NumericalError("supremix_loss: non-finite total loss");
  }
  fill_diagnostics(z, sets, config.top_k, out);
  if (!want_grad) return out;

  Matrix gz = Matrix::Zero(z.rows(), z.cols());
  for (size_t i = 0; i < sets.size(); ++i) {
    const AnchorResult& r = results[i];
    if (r.coeff.empty()) continue;
    const Index a = sets[i].anchor_index;
    const RowVector za = z.row(a);
    const Eigen::Map<const Vector> coeff(r.coeff.data(), static_cast<Index>(r.coeff.size()));
    gz.row(a) += coeff.transpose() * r.contrast;
    for (size_t e = 0; e < r.elements.size(); ++e) {
      const Element& el = r.elements[e];
      const double g = r.coeff[e];
      if (el.mix == nullptr) {
        gz.row(el.row) += g * za;
        continue;
      }
      const auto v = r.contrast.row(static_cast<Index>(e));
      // d(za . u/|u|)/du = (za - v (v . za)) / |u|
      const double scale = g / r.mix_norm[e];
      const double vz = v.dot(za);
      gz.row(el.mix->source_a) += (el.mix->lambda * scale) * (za - vz * v);
      gz.row(el.mix->source_b) += ((1.0 - el.mix->lambda) * scale) * (za - vz * v);
    }
  }
  out.grad = normalize_embeddings_backward(batch.embeddings, z, gz);
  if (!out.grad.allFinite()) {
    throw NumericalError("supremix_loss: non-finite gradient");
  }
  return out;
}

}  // namespace

Index AnchorLogits::num_positive() const {
  return static_cast<Index>(std::count(positive.begin(), positive.end(), true));
}

AnchorLogits anchor_logits(const LabeledBatch& batch, const Matrix& z,
                           const AnchorContrastSet& set,
                           const LossConfig& config) {
  AnchorLogits out;
  out.k_m = static_cast<Index>(set.positive_real.size()) + 1;
  const auto za = z.row(set.anchor_index);
  for (const Element& el : collect_elements(batch, set, config)) {
    if (el.mix == nullptr) {
      out.dots.push_back(za.dot(z.row(el.row)));
      out.labels.push_back(batch.labels[static_cast<size_t>(el.row)]);
    } else {
      const RowVector u = mixture_raw(z, *el.mix);
      out.dots.push_back(za.dot(u) / u.norm());
      out.labels.push_back(el.mix->mixed_label);
    }
    out.weights.push_back(std::exp(el.log_weight));
    out.positive.push_back(el.positive);
  }
  return out;
}

double anchor_term(const AnchorLogits& logits, double tau) {
  const Index n_pos = logits.num_positive();
  if (n_pos == 0) return 0.0;
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> l(logits.dots.size());
  for (size_t e = 0; e < l.size(); ++e) {
    l[e] = std::log(logits.weights[e]) + logits.dots[e] / tau;
    peak = std::max(peak, l[e]);
  }
  double sum = 0.0;
  for (double v : l) sum += std::exp(v - peak);
  const double lse = peak + std::log(sum);
  double pos = 0.0;
  for (size_t e = 0; e < l.size(); ++e) {
    if (logits.positive[e]) pos += logits.dots[e] / tau;
  }
  return (static_cast<double>(n_pos) * lse - pos) /
         static_cast<double>(logits.k_m);
}

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("LossConfig: tau must be > 0");
  }
  if (!(range.max > range.min)) {
    throw DegenerateRange("LossConfig: label range must satisfy max > min");
  }
  if (top_k < 0) throw InvalidArgument("LossConfig: top_k must be >= 0");
}

LossConfig LossConfig::supcon(double tau) {
  LossConfig c;
  c.tau = tau;
  c.use_dm = false;
  c.use_mix_neg = false;
  c.use_mix_pos = false;
  return c;
}

double dm_weight(Label m, Label m_bar, const LabelRange& range) {
  if (!(range.max > range.min)) {
    throw DegenerateRange("dm_weight: degenerate label range");
  }
  return (1.0 + std::abs(m - m_bar)) / range.width();
}

LossOutput supremix_loss(const LabeledBatch& batch,
                         const std::vector<AnchorContrastSet>& sets,
                         const LossConfig& config) {
  return evaluate(batch, sets, config, true);
}

double supremix_loss_value(const LabeledBatch& batch,
                           const std::vector<AnchorContrastSet>& sets,
                           const LossConfig& config) {
  return evaluate(batch, sets, config, false).loss;
}

std::vector<AnchorContrastSet> real_contrast_sets(const LabelGroups& groups) {
  const Index n = groups.num_samples();
  std::vector<AnchorContrastSet> sets(static_cast<size_t>(n));
  for (Index a = 0; a < n; ++a) {
    auto& s = sets[static_cast<size_t>(a)];
    s.anchor_index = a;
    for (Index j = 0; j < n; ++j) {
      if (j == a) continue;
      (groups.rank_of(j) == groups.rank_of(a) ? s.positive_real
                                              : s.negative_real)
          .push_back(j);
    }
  }
  return sets;
}

LossOutput supcon_baseline_loss(const LabeledBatch& batch,
                                const LabelGroups& groups, double tau) {
  return supremix_loss(batch, real_contrast_sets(groups),
                       LossConfig::supcon(tau));
}

double loss_lower_bound(const std::vector<AnchorContrastSet>& sets,
                        const LabelGroups& groups, const LabelRange& range) {
  LossConfig all_on;
  all_on.range = range;
  return loss_lower_bound(sets, groups, all_on);
}

double loss_lower_bound(const std::vector<AnchorContrastSet>& sets,
                        const LabelGroups& groups, const LossConfig& config) {
  const double width = config.use_dm ? config.range.width() : 1.0;
  double bound = 0.0;
  for (const auto& s : sets) {
    const Index k_m = groups.group_size(groups.rank_of(s.anchor_index));
    auto p = static_cast<double>(s.positive_real.size());
    if (config.use_mix_pos) p += static_cast<double>(s.positive_mix.size());
    if (p <= 0.0) continue;
    bound += p * std::log(p / width) / static_cast<double>(k_m);
  }
  return bound;
}

Matrix finite_difference_gradient(const LabeledBatch& batch,
                                  const std::vector<AnchorContrastSet>& sets,
                                  const LossConfig& config, double h) {
  if (!(h >= 1e-6 && h <= 1e-2)) {
    throw InvalidArgument("finite_difference_gradient: h must be in [1e-6, 1e-2]");
  }
  LabeledBatch probe = batch;
  probe.normalized = false;
  Matrix grad(batch.size(), batch.dim());
  for (Index i = 0; i < batch.size(); ++i) {
    for (Index c = 0; c < batch.dim(); ++c) {
      const double orig = batch.embeddings(i, c);
      probe.embeddings(i, c) = orig + h;
      const double up = supremix_loss_value(probe, sets, config);
      probe.embeddings(i, c) = orig - h;
      const double down = supremix_loss_value(probe, sets, config);
      probe.embeddings(i, c) = orig;
      grad(i, c) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

double max_relative_error(const Matrix& analytic, const Matrix& reference,
                          double floor) {
  const double scale = std::max(reference.cwiseAbs().maxCoeff(), floor);
  return (analytic - reference).cwiseAbs().maxCoeff() / scale;
}

}  // namespace supremix
