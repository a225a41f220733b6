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

#include "supremix/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

namespace supremix {

namespace {

constexpr std::uint64_t kInitTag = 10;
constexpr std::uint64_t kShuffleTag = 11;
constexpr std::uint64_t kMixTag = 12;
constexpr std::uint64_t kProbeTag = 20;

std::vector<Index> shuffled(const std::vector<Index>& items, Rng rng) {
  std::vector<Index> out = items;
  for (size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[uniform_index(rng, i)]);
  return out;
}

// Consecutive chunks of at most `size`; a trailing singleton joins the
// previous chunk so every batch holds at least two samples.
std::vector<std::vector<Index>> make_batches(const std::vector<Index>& order, Index size) {
  std::vector<std::vector<Index>> out;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(size)) {
    const size_t end = std::min(order.size(), i + static_cast<size_t>(size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(rows[r]);
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<Index>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(v[static_cast<size_t>(i)]);
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void require_train_labels(const Dataset& data, const char* who) {
  const auto labels = data.labels_of(Split::kTrain);
  if (std::set<Label>(labels.begin(), labels.end()).size() < 2) {
    throw InvalidArgument(std::string(who) + ": train split needs at least 2 distinct labels");
  }
}

Metrics score(const Vector& pred, const std::vector<Label>& labels) {
  return compute_metrics(std::span<const double>(pred.data(), static_cast<size_t>(pred.size())),
                         labels);
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1) throw InvalidArgument("EncoderConfig: input_dim must be >= 1");
  for (Index h : hidden_dims)
    if (h < 1) throw InvalidArgument("EncoderConfig: hidden dims must be >= 1");
  if (embed_dim < 2) throw InvalidArgument("EncoderConfig: embed_dim must be >= 2");
}

MlpParams MlpParams::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  std::vector<Index> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.embed_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpParams p;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const double sd = std::sqrt(2.0 / static_cast<double>(dims[l]));
    Matrix w(dims[l], dims[l + 1]);
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = sd * normal(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(RowVector::Zero(dims[l + 1]));
  }
  return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& other) {
  MlpParams p;
  for (const auto& w : other.weights) p.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : other.biases) p.biases.push_back(RowVector::Zero(b.size()));
  return p;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
  }
  return true;
}

EncoderCache encoder_forward(const MlpParams& params, const Matrix& x) {
  if (params.weights.empty()) throw InvalidArgument("encoder_forward: empty network");
  if (x.cols() != params.input_dim()) {
    throw InvalidArgument("encoder_forward: input has " + std::to_string(x.cols()) +
                          " columns, expected " + std::to_string(params.input_dim()));
  }
  EncoderCache cache;
  Matrix h = x;
  for (size_t l = 0; l < params.num_layers(); ++l) {
    Matrix a = h * params.weights[l];
    a.rowwise() += params.biases[l];
    cache.layer_inputs.push_back(std::move(h));
    if (l + 1 < params.num_layers()) {
      h = a.cwiseMax(0.0);
      cache.hidden_pre.push_back(std::move(a));
    } else {
      cache.raw = std::move(a);
    }
  }
  cache.z = normalize_embeddings(cache.raw);
  return cache;
}

Matrix embed(const MlpParams& params, const Matrix& x) {
  return encoder_forward(params, x).z;
}

MlpParams encoder_backward(const MlpParams& params, const EncoderCache& cache,
                           const Matrix& grad_raw) {
  const size_t layers = params.num_layers();
  if (cache.layer_inputs.size() != layers || cache.hidden_pre.size() + 1 != layers ||
      grad_raw.rows() != cache.raw.rows() || grad_raw.cols() != cache.raw.cols() ||
      cache.raw.cols() != params.embed_dim()) {
    throw InvalidArgument("encoder_backward: cache does not match parameters");
  }
  MlpParams grads = MlpParams::zeros_like(params);
  Matrix g = grad_raw;
  for (size_t l = layers; l-- > 0;) {
    if (cache.layer_inputs[l].cols() != params.weights[l].rows()) {
      throw InvalidArgument("encoder_backward: stale cache");
    }
    grads.weights[l].noalias() = cache.layer_inputs[l].transpose() * g;
    grads.biases[l] = g.colwise().sum();
    if (l > 0) {
      Matrix up = g * params.weights[l].transpose();
      g = (cache.hidden_pre[l - 1].array() > 0.0).select(up, 0.0);
    }
  }
  return grads;
}

Vector probe_predict(const ProbeParams& probe, const Matrix& z) {
  if (z.cols() != probe.weight.size()) {
    throw InvalidArgument("probe_predict: embedding width does not match the probe");
  }
  return (z * probe.weight).array() + probe.bias;
}

double adam_step(std::span<const ParamSlot> slots, OptimState& state, double lr,
                 const AdamConfig& config) {
  if (state.m.size() != slots.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& s : slots) {
      state.m.push_back(Vector::Zero(s.size));
      state.v.push_back(Vector::Zero(s.size));
    }
  }
  double sq = 0.0;
  for (const auto& s : slots) {
    sq += Eigen::Map<const Vector>(s.grad, s.size).squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale = config.clip_norm > 0.0 && norm > config.clip_norm
                           ? config.clip_norm / norm
                           : 1.0;
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    Eigen::Map<Vector> p(s.value, s.size);
    const Vector g = scale * Eigen::Map<const Vector>(s.grad, s.size);
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g.cwiseAbs2();
    if (s.decay) p *= 1.0 - lr * config.weight_decay;
    p.array() -= lr * (state.m[k].array() / bc1) /
                 ((state.v[k].array() / bc2).sqrt() + state.eps);
  }
  return norm;
}

std::vector<ParamSlot> param_slots(MlpParams& params, const MlpParams& grads) {
  if (!params.same_shape(grads)) throw InvalidArgument("param_slots: shape mismatch");
  std::vector<ParamSlot> slots;
  for (size_t l = 0; l < params.num_layers(); ++l) {
    slots.push_back({params.weights[l].data(), grads.weights[l].data(),
                     params.weights[l].size(), true});
    slots.push_back({params.biases[l].data(), grads.biases[l].data(),
                     params.biases[l].size(), false});
  }
  return slots;
}

std::vector<ParamSlot> param_slots(RegressorParams& params, const RegressorParams& grads) {
  auto slots = param_slots(params.encoder, grads.encoder);
  if (params.head.weight.size() != grads.head.weight.size()) {
    throw InvalidArgument("param_slots: head shape mismatch");
  }
  slots.push_back({params.head.weight.data(), grads.head.weight.data(),
                   params.head.weight.size(), true});
  slots.push_back({&params.head.bias, &grads.head.bias, 1, false});
  return slots;
}

void TrainConfig::validate() const {
  if (pretrain_epochs < 1 || probe_epochs < 1 || batch_size < 2) {
    throw InvalidArgument("TrainConfig: epochs must be >= 1 and batch_size >= 2");
  }
  if (!(base_lr > 0.0) || !(probe_lr > 0.0) || !(min_lr >= 0.0) || min_lr > base_lr) {
    throw InvalidArgument("TrainConfig: learning rates must be positive, min_lr <= lr");
  }
  if (!(weight_decay >= 0.0) || !(clip_norm > 0.0)) {
    throw InvalidArgument("TrainConfig: weight_decay >= 0 and clip_norm > 0 required");
  }
  if (warmup_epochs < 0 || warmup_epochs >= pretrain_epochs) {
    throw InvalidArgument("TrainConfig: warmup_epochs must lie in [0, pretrain_epochs)");
  }
}

double lr_at(Index epoch, Index total, Index warmup, double base_lr, double min_lr) {
  if (epoch < 0 || epoch > total || warmup < 0 || warmup >= total) {
    throw InvalidArgument("lr_at: epoch outside [0, total] or warmup >= total");
  }
  if (epoch < warmup) {
    return base_lr * static_cast<double>(epoch) / static_cast<double>(warmup);
  }
  const double t = static_cast<double>(epoch - warmup);
  const double T = static_cast<double>(total - warmup);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(t * std::numbers::pi / T));
}

double lr_at(Index epoch, const TrainConfig& config) {
  return lr_at(epoch, config.pretrain_epochs, config.warmup_epochs, config.base_lr,
               config.min_lr);
}

PretrainResult pretrain(const Dataset& data, const EncoderConfig& encoder,
                        const TrainConfig& train, const PretrainSetup& setup,
                        const EpochCallback& on_epoch) {
  train.validate();
  require_train_labels(data, "pretrain");
  if (encoder.input_dim != data.inputs.cols()) {
    throw InvalidArgument("pretrain: encoder input_dim does not match the data");
  }
  if (setup.use_group_constraint && !data.groups) {
    throw InvalidArgument("pretrain: group constraint requested without a group column");
  }
  const auto train_idx = data.indices(Split::kTrain);
  const auto train_labels = data.labels_of(Split::kTrain);

  PretrainResult result;
  result.range = label_range(train_labels);
  LossConfig loss_cfg = setup.loss;
  loss_cfg.range = result.range;
  loss_cfg.validate();
  Rng init_rng = make_stream(train.seed, {kInitTag});
  result.params = MlpParams::init(encoder, init_rng);

  OptimState state;
  const AdamConfig adam{train.weight_decay, train.clip_norm};
  const std::optional<MixNegConfig> neg =
      loss_cfg.use_mix_neg ? std::optional(setup.mix_neg) : std::nullopt;
  const std::optional<MixPosConfig> pos =
      loss_cfg.use_mix_pos ? std::optional(setup.mix_pos) : std::nullopt;

  for (Index epoch = 0; epoch < train.pretrain_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at(epoch, train);
    const auto order = shuffled(
        train_idx, make_stream(train.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    const auto batches = make_batches(order, train.batch_size);
    double loss_sum = 0.0;
    Index samples = 0;
    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& rows = batches[b];
      const auto n = static_cast<double>(rows.size());
      const EncoderCache cache = encoder_forward(result.params, gather_rows(data.inputs, rows));
      const auto labels = gather(data.labels, rows);
      LabeledBatch raw{cache.raw, labels, false};
      const LabelGroups groups = group_by_label(labels, setup.rule);
      LossOutput out;
      if (setup.supcon_baseline) {
        out = supcon_baseline_loss(raw, groups, loss_cfg.tau);
      } else {
        const LabeledBatch unit{cache.z, labels, true};
        std::optional<std::vector<int>> cats;
        if (setup.use_group_constraint) cats = gather(*data.groups, rows);
        const auto sets = build_contrast_sets(
            unit, groups, neg, pos, cats,
            derive_seed(train.seed, {kMixTag, static_cast<std::uint64_t>(epoch), b}));
        out = supremix_loss(raw, sets, loss_cfg);
      }
      loss_sum += out.loss;
      samples += static_cast<Index>(rows.size());
      log.avg_pos_logit += out.avg_pos_logit;
      if (!out.top_k_neg_logits.empty()) {
        log.mean_top_k_neg_logit +=
            std::accumulate(out.top_k_neg_logits.begin(), out.top_k_neg_logits.end(), 0.0) /
            static_cast<double>(out.top_k_neg_logits.size());
      }
      MlpParams grads = encoder_backward(result.params, cache, out.grad / n);
      const auto slots = param_slots(result.params, grads);
      adam_step(slots, state, log.lr, adam);
    }
    const auto nb = static_cast<double>(batches.size());
    log.loss = loss_sum / static_cast<double>(samples);
    log.avg_pos_logit /= nb;
    log.mean_top_k_neg_logit /= nb;
    if (!std::isfinite(log.loss)) {
      throw NumericalError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

ProbeParams fit_probe(const Matrix& z, std::span<const Label> labels,
                      const TrainConfig& config) {
  config.validate();
  if (z.rows() != static_cast<Index>(labels.size()) || z.rows() < 1) {
    throw InvalidArgument("fit_probe: embeddings and labels disagree");
  }
  ProbeParams probe;
  probe.weight = Vector::Zero(z.cols());
  probe.bias = median(std::vector<double>(labels.begin(), labels.end()));
  ProbeParams grad;
  grad.weight = Vector::Zero(z.cols());
  std::vector<ParamSlot> slots{
      {probe.weight.data(), grad.weight.data(), probe.weight.size(), true},
      {&probe.bias, &grad.bias, 1, false}};
  OptimState state;
  const AdamConfig adam{config.weight_decay, config.clip_norm};
  std::vector<Index> all(static_cast<size_t>(z.rows()));
  std::iota(all.begin(), all.end(), Index{0});
  const Index warmup = std::min(config.warmup_epochs, config.probe_epochs - 1);
  for (Index epoch = 0; epoch < config.probe_epochs; ++epoch) {
    const double lr = lr_at(epoch, config.probe_epochs, warmup, config.probe_lr,
                            std::min(config.min_lr, config.probe_lr));
    const auto order = shuffled(
        all, make_stream(config.seed, {kProbeTag, static_cast<std::uint64_t>(epoch)}));
    for (const auto& rows : make_batches(order, config.batch_size)) {
      const auto n = static_cast<double>(rows.size());
      grad.weight.setZero();
      grad.bias = 0.0;
      for (Index r : rows) {
        const double e = z.row(r).dot(probe.weight) + probe.bias - labels[static_cast<size_t>(r)];
        const double s = static_cast<double>((e > 0.0) - (e < 0.0)) / n;
        grad.weight += s * z.row(r).transpose();
        grad.bias += s;
      }
      adam_step(slots, state, lr, adam);
    }
  }
  return probe;
}

ProbeResult linear_probe(const MlpParams& encoder, const Dataset& data,
                         const TrainConfig& config) {
  ProbeResult r;
  r.probe = fit_probe(embed(encoder, data.inputs_of(Split::kTrain)),
                      data.labels_of(Split::kTrain), config);
  const Vector val = probe_predict(r.probe, embed(encoder, data.inputs_of(Split::kVal)));
  const Vector test = probe_predict(r.probe, embed(encoder, data.inputs_of(Split::kTest)));
  r.val = score(val, data.labels_of(Split::kVal));
  r.test = score(test, data.labels_of(Split::kTest));
  r.test_predictions.assign(test.data(), test.data() + test.size());
  return r;
}

double vanilla_objective(const RegressorParams& params, const Matrix& x,
                         std::span<const Label> labels, RegressorParams* grad) {
  if (x.rows() != static_cast<Index>(labels.size()) || x.rows() < 1) {
    throw InvalidArgument("vanilla_objective: inputs and labels disagree");
  }
  const EncoderCache cache = encoder_forward(params.encoder, x);
  const Vector pred = probe_predict(params.head, cache.z);
  const auto n = static_cast<double>(x.rows());
  Vector dpred(x.rows());
  double loss = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    const double e = pred(i) - labels[static_cast<size_t>(i)];
    loss += std::abs(e);
    dpred(i) = static_cast<double>((e > 0.0) - (e < 0.0)) / n;
  }
  if (grad) {
    grad->head.weight = cache.z.transpose() * dpred;
    grad->head.bias = dpred.sum();
    const Matrix dz = dpred * params.head.weight.transpose();
    grad->encoder = encoder_backward(
        params.encoder, cache, normalize_embeddings_backward(cache.raw, cache.z, dz));
  }
  return loss / n;
}

VanillaResult vanilla_train(const Dataset& data, const EncoderConfig& encoder,
                            const TrainConfig& train, const EpochCallback& on_epoch) {
  train.validate();
  require_train_labels(data, "vanilla_train");
  if (encoder.input_dim != data.inputs.cols()) {
    throw InvalidArgument("vanilla_train: encoder input_dim does not match the data");
  }
  const auto train_idx = data.indices(Split::kTrain);
  VanillaResult result;
  Rng init_rng = make_stream(train.seed, {kInitTag});
  result.params.encoder = MlpParams::init(encoder, init_rng);
  result.params.head.weight = Vector::Zero(encoder.embed_dim);
  result.params.head.bias = median(data.labels_of(Split::kTrain));

  OptimState state;
  const AdamConfig adam{train.weight_decay, train.clip_norm};
  for (Index epoch = 0; epoch < train.pretrain_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at(epoch, train);
    const auto order = shuffled(
        train_idx, make_stream(train.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    const auto batches = make_batches(order, train.batch_size);
    double loss_sum = 0.0;
    for (const auto& rows : batches) {
      const Matrix x = gather_rows(data.inputs, rows);
      const auto labels = gather(data.labels, rows);
      RegressorParams grad;
      loss_sum += vanilla_objective(result.params, x, labels, &grad) *
                  static_cast<double>(rows.size());
      const LabeledBatch unit{embed(result.params.encoder, x), labels, true};
      const auto stats = track_logits(unit, group_by_label(labels));
      log.avg_pos_logit += stats.avg_pos_logit;
      log.mean_top_k_neg_logit += stats.mean_top_k_neg_logit;
      const auto slots = param_slots(result.params, grad);
      adam_step(slots, state, log.lr, adam);
    }
    const auto nb = static_cast<double>(batches.size());
    log.loss = loss_sum / static_cast<double>(train_idx.size());
    log.avg_pos_logit /= nb;
    log.mean_top_k_neg_logit /= nb;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  const Vector val = probe_predict(result.params.head,
                                   embed(result.params.encoder, data.inputs_of(Split::kVal)));
  const Vector test = probe_predict(result.params.head,
                                    embed(result.params.encoder, data.inputs_of(Split::kTest)));
  result.val = score(val, data.labels_of(Split::kVal));
  result.test = score(test, data.labels_of(Split::kTest));
  result.test_predictions.assign(test.data(), test.data() + test.size());
  return result;
}

}  // namespace supremix
