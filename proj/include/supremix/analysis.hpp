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

// Regression metrics and representation diagnostics: nearest-neighbour
// Lipschitz factors, Z-score gaps between two models, logit saturation and
// an ordinality score.

#ifndef SUPREMIX_ANALYSIS_HPP
#define SUPREMIX_ANALYSIS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "supremix/core.hpp"

namespace supremix {

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  /// exp(mean log(|e| + 1e-6)).
  double gm = 0.0;
  double pearson = 0.0;
  /// False when predictions or targets are constant; pearson is then 0.
  bool pearson_defined = true;
};

Metrics compute_metrics(std::span<const double> predictions,
                        std::span<const double> targets);

/// Pearson correlation; returns false when either input is constant.
bool pearson(std::span<const double> a, std::span<const double> b, double* out);

/// Spearman correlation with average ranks for ties.
bool spearman(std::span<const double> a, std::span<const double> b, double* out);

struct NlfdResult {
  /// One factor per retained query point, in query order.
  std::vector<double> factors;
  /// Query index behind each factor.
  std::vector<Index> query;
  /// Nearest neighbour of every query point (lowest index on ties).
  std::vector<Index> neighbor;
  double mean = 0.0;
  /// Sample standard deviation (n - 1).
  double std = 0.0;
  /// Adjusted Fisher-Pearson skewness; 0 with fewer than 3 factors.
  double skewness = 0.0;
  Index d = 0;
  /// Queries whose neighbour sits at distance 0.
  Index excluded_pairs = 0;
  /// Queries whose neighbour shares the exact target (factor 0).
  Index zero_factors = 0;
  std::string note;
};

/// Standardizes every coordinate over the set, finds each point's nearest
/// l2 neighbour, and reports |dT| / |d phi| * sqrt(d).
NlfdResult compute_nlfd(const Matrix& embeddings, std::span<const double> targets);

/// (mu_b - mu_a) / sqrt(sigma_a^2 + sigma_b^2); positive when a is smoother.
double z_gap(const NlfdResult& a, const NlfdResult& b);

struct ZGapReport {
  double z = 0.0;
  /// (NLFD z-gap, Pearson(a) - Pearson(b)) per resample.
  std::vector<std::pair<double, double>> pairs;
  double pearson_of_gaps = 0.0;
  bool pearson_defined = true;
  Index B = 0;
};

/// Resamples the evaluation set B times with replacement and correlates the
/// NLFD z-gap of model a against model b with their Pearson-score gap.
ZGapReport bootstrap_gap(const Matrix& embeddings_a,
                         std::span<const double> predictions_a,
                         const Matrix& embeddings_b,
                         std::span<const double> predictions_b,
                         std::span<const double> targets, Index B,
                         std::uint64_t seed);

struct LogitStats {
  double avg_pos_logit = 0.0;
  double mean_top_k_neg_logit = 0.0;
  Index positive_pairs = 0;
  Index negative_pairs_used = 0;
  /// False when the batch has no real positive pair.
  bool has_positive = true;
};

/// Statistics over unordered real pairs of a normalized batch.
LogitStats track_logits(const LabeledBatch& batch, const LabelGroups& groups,
                        Index k = 1000);

/// |Spearman| between labels and the projection of the embeddings onto
/// their first principal direction.
double ordinality_score(const Matrix& embeddings, std::span<const Label> labels);

}  // namespace supremix

#endif  // SUPREMIX_ANALYSIS_HPP
