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

#include "supremix/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

#include "supremix/random.hpp"

namespace supremix {

namespace {

constexpr double kGmOffset = 1e-6;

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

double adjusted_skewness(const std::vector<double>& x, double mean) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 3) return 0.0;
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double c = v - mean;
    m2 += c * c;
    m3 += c * c * c;
  }
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) return 0.0;
  return m3 / std::pow(m2, 1.5) * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

Matrix standardize_columns(const Matrix& x) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double sd =
        std::sqrt((x.col(c).array() - mean).square().mean());
    if (sd > 0.0) out.col(c) = (x.col(c).array() - mean) / sd;
  }
  return out;
}

}  // namespace

bool pearson(std::span<const double> a, std::span<const double> b, double* out) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("pearson: inputs must have equal length >= 2");
  }
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) {
    *out = 0.0;
    return false;
  }
  *out = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return true;
}

bool spearman(std::span<const double> a, std::span<const double> b, double* out) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb, out);
}

Metrics compute_metrics(std::span<const double> predictions,
                        std::span<const double> targets) {
  if (predictions.size() != targets.size() || targets.size() < 2) {
    throw InvalidArgument(
        "compute_metrics: predictions and targets need equal length >= 2");
  }
  Metrics m;
  double log_sum = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    const double e = std::abs(predictions[i] - targets[i]);
    m.mae += e;
    m.mse += e * e;
    log_sum += std::log(e + kGmOffset);
  }
  const auto n = static_cast<double>(targets.size());
  m.mae /= n;
  m.mse /= n;
  m.gm = std::exp(log_sum / n);
  m.pearson_defined = pearson(predictions, targets, &m.pearson);
  return m;
}

NlfdResult compute_nlfd(const Matrix& embeddings, std::span<const double> targets) {
  const Index n = embeddings.rows();
  if (n < 3) throw InvalidArgument("compute_nlfd: need at least 3 points");
  if (static_cast<Index>(targets.size()) != n) {
    throw InvalidArgument("compute_nlfd: targets length must equal row count");
  }
  const Matrix phi = standardize_columns(embeddings);

  std::vector<Index> nn(static_cast<size_t>(n));
  std::vector<double> dist(static_cast<size_t>(n));
  parallel_for(static_cast<size_t>(n), [&](size_t qi) {
    const auto q = static_cast<Index>(qi);
    double best = std::numeric_limits<double>::infinity();
    Index arg = -1;
    for (Index j = 0; j < n; ++j) {
      if (j == q) continue;
      const double d2 = (phi.row(q) - phi.row(j)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    nn[qi] = arg;
    dist[qi] = std::sqrt(best);
  });

  NlfdResult r;
  r.d = embeddings.cols();
  r.neighbor = nn;
  const double scale = std::sqrt(static_cast<double>(r.d));
  bool any_nonzero = false;
  for (Index q = 0; q < n; ++q) {
    const auto qi = static_cast<size_t>(q);
    if (!(dist[qi] > 0.0)) {
      ++r.excluded_pairs;
      continue;
    }
    any_nonzero = true;
    const double dt = std::abs(targets[qi] - targets[static_cast<size_t>(nn[qi])]);
    if (!(dt > 0.0)) {
      ++r.zero_factors;
      continue;
    }
    r.factors.push_back(dt / dist[qi] * scale);
    r.query.push_back(q);
  }
  if (!any_nonzero) {
    throw DegenerateEmbedding(-1, "compute_nlfd: all nearest-neighbour distances are zero");
  }
  if (r.factors.empty()) {
    r.note = "all neighbours excluded (zero distance or equal targets)";
    return r;
  }
  const auto m = static_cast<double>(r.factors.size());
  r.mean = std::accumulate(r.factors.begin(), r.factors.end(), 0.0) / m;
  if (r.factors.size() > 1) {
    double ss = 0.0;
    for (double f : r.factors) ss += (f - r.mean) * (f - r.mean);
    r.std = std::sqrt(ss / (m - 1.0));
  }
  r.skewness = adjusted_skewness(r.factors, r.mean);
  return r;
}

double z_gap(const NlfdResult& a, const NlfdResult& b) {
  if (a.factors.empty() || b.factors.empty()) {
    throw InvalidArgument("z_gap: empty factor distribution");
  }
  const double denom = std::sqrt(a.std * a.std + b.std * b.std);
  if (!(denom > 0.0)) throw InvalidArgument("z_gap: both standard deviations are zero");
  return (b.mean - a.mean) / denom;
}

ZGapReport bootstrap_gap(const Matrix& embeddings_a,
                         std::span<const double> predictions_a,
                         const Matrix& embeddings_b,
                         std::span<const double> predictions_b,
                         std::span<const double> targets, Index B,
                         std::uint64_t seed) {
  if (B < 2) throw InvalidArgument("bootstrap_gap: B must be >= 2");
  const Index n = static_cast<Index>(targets.size());
  if (embeddings_a.rows() != n || embeddings_b.rows() != n ||
      static_cast<Index>(predictions_a.size()) != n ||
      static_cast<Index>(predictions_b.size()) != n) {
    throw InvalidArgument("bootstrap_gap: inputs must share the sample count");
  }
  ZGapReport report;
  report.B = B;
  report.z = z_gap(compute_nlfd(embeddings_a, targets),
                   compute_nlfd(embeddings_b, targets));
  report.pairs.resize(static_cast<size_t>(B));
  parallel_for(static_cast<size_t>(B), [&](size_t b) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(b)});
    std::vector<Index> pick(static_cast<size_t>(n));
    for (auto& p : pick) p = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    Matrix ea(n, embeddings_a.cols()), eb(n, embeddings_b.cols());
    std::vector<double> pa(pick.size()), pb(pick.size()), t(pick.size());
    for (size_t i = 0; i < pick.size(); ++i) {
      const auto s = static_cast<size_t>(pick[i]);
      ea.row(static_cast<Index>(i)) = embeddings_a.row(pick[i]);
      eb.row(static_cast<Index>(i)) = embeddings_b.row(pick[i]);
      pa[i] = predictions_a[s];
      pb[i] = predictions_b[s];
      t[i] = targets[s];
    }
    const double z = z_gap(compute_nlfd(ea, t), compute_nlfd(eb, t));
    double ra = 0.0, rb = 0.0;
    pearson(pa, t, &ra);
    pearson(pb, t, &rb);
    report.pairs[b] = {z, ra - rb};
  });
  std::vector<double> zs, gaps;
  for (const auto& [z, g] : report.pairs) {
    zs.push_back(z);
    gaps.push_back(g);
  }
  report.pearson_defined = pearson(zs, gaps, &report.pearson_of_gaps);
  return report;
}

LogitStats track_logits(const LabeledBatch& batch, const LabelGroups& groups,
                        Index k) {
  if (!batch.normalized) throw InvalidArgument("track_logits: batch must be normalized");
  if (k < 1) throw InvalidArgument("track_logits: k must be >= 1");
  const Matrix gram = batch.embeddings * batch.embeddings.transpose();
  LogitStats s;
  std::vector<double> neg;
  double pos_sum = 0.0;
  for (Index i = 0; i < batch.size(); ++i) {
    for (Index j = i + 1; j < batch.size(); ++j) {
      if (groups.rank_of(i) == groups.rank_of(j)) {
        pos_sum += gram(i, j);
        ++s.positive_pairs;
      } else {
        neg.push_back(gram(i, j));
      }
    }
  }
  s.has_positive = s.positive_pairs > 0;
  if (s.has_positive) s.avg_pos_logit = pos_sum / static_cast<double>(s.positive_pairs);
  const auto keep = std::min<size_t>(static_cast<size_t>(k), neg.size());
  std::partial_sort(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(keep),
                    neg.end(), std::greater<>());
  s.negative_pairs_used = static_cast<Index>(keep);
  if (keep > 0) {
    s.mean_top_k_neg_logit =
        std::accumulate(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(keep), 0.0) /
        static_cast<double>(keep);
  }
  return s;
}

double ordinality_score(const Matrix& embeddings, std::span<const Label> labels) {
  const Index n = embeddings.rows();
  if (n < 3 || static_cast<Index>(labels.size()) != n) {
    throw InvalidArgument("ordinality_score: need >= 3 rows matching the labels");
  }
  if (std::set<Label>(labels.begin(), labels.end()).size() < 3) {
    throw InvalidArgument("ordinality_score: need at least 3 distinct labels");
  }
  const Matrix centered = embeddings.rowwise() - embeddings.colwise().mean();
  const Matrix cov = centered.transpose() * centered;
  if (!(cov.trace() > 0.0)) {
    throw NumericalError("ordinality_score: embeddings have zero variance");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector proj = centered * es.eigenvectors().col(cov.cols() - 1);
  double rho = 0.0;
  spearman(std::span<const double>(proj.data(), static_cast<size_t>(n)), labels, &rho);
  return std::abs(rho);
}

}  // namespace supremix
