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

// Small trainable encoder (rectifier MLP with a unit-norm output), linear
// probe, end-to-end L1 regressor, and the Adam/warmup-cosine training loops
// that drive them.

#ifndef SUPREMIX_NN_HPP
#define SUPREMIX_NN_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "supremix/analysis.hpp"
#include "supremix/core.hpp"
#include "supremix/data.hpp"
#include "supremix/loss.hpp"
#include "supremix/mixgen.hpp"
#include "supremix/random.hpp"

namespace supremix {

struct EncoderConfig {
  Index input_dim = 16;
  std::vector<Index> hidden_dims{64, 64};
  Index embed_dim = 16;

  void validate() const;
};

/// Layer l maps rows of width weights[l].rows() to weights[l].cols().
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;

  /// He initialization (N(0, 2 / fan_in)), zero biases.
  static MlpParams init(const EncoderConfig& config, Rng& rng);
  static MlpParams zeros_like(const MlpParams& other);

  size_t num_layers() const { return weights.size(); }
  Index input_dim() const { return weights.front().rows(); }
  Index embed_dim() const { return weights.back().cols(); }
  bool same_shape(const MlpParams& other) const;
};

struct ProbeParams {
  Vector weight;
  double bias = 0.0;
};

/// Encoder followed by a linear head on the unit-norm embedding.
struct RegressorParams {
  MlpParams encoder;
  ProbeParams head;
};

struct EncoderCache {
  /// Input of every layer; layer_inputs[0] is the batch.
  std::vector<Matrix> layer_inputs;
  /// Pre-rectifier values of the hidden layers.
  std::vector<Matrix> hidden_pre;
  /// Final affine output before normalization.
  Matrix raw;
  /// Unit-norm embeddings.
  Matrix z;
};

EncoderCache encoder_forward(const MlpParams& params, const Matrix& x);

/// Unit-norm embeddings only.
Matrix embed(const MlpParams& params, const Matrix& x);

/// Parameter gradients given d loss / d raw (pre-normalization) outputs.
MlpParams encoder_backward(const MlpParams& params, const EncoderCache& cache,
                           const Matrix& grad_raw);

Vector probe_predict(const ProbeParams& probe, const Matrix& z);

/// One optimizer-owned tensor: value and gradient share `size` entries.
struct ParamSlot {
  double* value = nullptr;
  const double* grad = nullptr;
  Index size = 0;
  bool decay = true;
};

struct OptimState {
  std::vector<Vector> m;
  std::vector<Vector> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamConfig {
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
};

/// Clips the global gradient norm, updates the moments, applies the
/// bias-corrected step and decoupled weight decay lr * wd * p on slots with
/// `decay`. Returns the gradient norm before clipping.
double adam_step(std::span<const ParamSlot> slots, OptimState& state, double lr,
                 const AdamConfig& config);

std::vector<ParamSlot> param_slots(MlpParams& params, const MlpParams& grads);
std::vector<ParamSlot> param_slots(RegressorParams& params, const RegressorParams& grads);

struct TrainConfig {
  Index pretrain_epochs = 200;
  Index probe_epochs = 100;
  Index batch_size = 256;
  double base_lr = 1e-3;
  double probe_lr = 1e-2;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  Index warmup_epochs = 10;
  double min_lr = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear warmup from 0 to base_lr over `warmup` epochs, then cosine decay
/// to min_lr reached at epoch == total.
double lr_at(Index epoch, Index total, Index warmup, double base_lr, double min_lr);

/// Schedule of the pretraining and vanilla loops.
double lr_at(Index epoch, const TrainConfig& config);

struct EpochLog {
  Index epoch = 0;
  /// Mean per-sample objective over the epoch.
  double loss = 0.0;
  double lr = 0.0;
  double avg_pos_logit = 0.0;
  double mean_top_k_neg_logit = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct PretrainSetup {
  MixNegConfig mix_neg;
  MixPosConfig mix_pos;
  /// Toggles and temperature; the range is replaced by the train range.
  LossConfig loss;
  QuantizationRule rule;
  bool use_group_constraint = false;
  /// Evaluate the plain supervised contrastive baseline implementation.
  bool supcon_baseline = false;
};

struct PretrainResult {
  MlpParams params;
  LabelRange range;
  std::vector<EpochLog> log;
};

PretrainResult pretrain(const Dataset& data, const EncoderConfig& encoder,
                        const TrainConfig& train, const PretrainSetup& setup,
                        const EpochCallback& on_epoch = {});

struct ProbeResult {
  ProbeParams probe;
  Metrics val;
  Metrics test;
  std::vector<double> test_predictions;
};

/// Trains a linear head with an L1 objective on fixed embeddings.
ProbeParams fit_probe(const Matrix& z, std::span<const Label> labels,
                      const TrainConfig& config);

/// Freezes the encoder, fits the probe on the train split and scores val/test.
ProbeResult linear_probe(const MlpParams& encoder, const Dataset& data,
                         const TrainConfig& config);

/// Mean absolute error of the regressor and its gradient.
double vanilla_objective(const RegressorParams& params, const Matrix& x,
                         std::span<const Label> labels,
                         RegressorParams* grad = nullptr);

struct VanillaResult {
  RegressorParams params;
  std::vector<EpochLog> log;
  Metrics val;
  Metrics test;
  std::vector<double> test_predictions;
};

VanillaResult vanilla_train(const Dataset& data, const EncoderConfig& encoder,
                            const TrainConfig& train,
                            const EpochCallback& on_epoch = {});

}  // namespace supremix

#endif  // SUPREMIX_NN_HPP
