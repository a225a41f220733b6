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

// Run configuration: sectioned key = value text, validated against the
// owning modules, with seed resolution from flag, file and environment.

#ifndef SUPREMIX_CONFIG_HPP
#define SUPREMIX_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "supremix/core.hpp"

namespace supremix {

struct DataSection {
  std::string kind = "helix";
  Index n = 2000;
  Index dim = 16;
  double noise = 0.05;
  Index label_grid = 41;
  std::optional<std::uint64_t> seed;
  /// When set, data is read from this CSV instead of generated.
  std::string csv_path;
  std::string label_column = "y";
  std::string group_column;
};

struct MixSection {
  double alpha = 2.0;
  double beta = 8.0;
  double gamma = 1.0;
  std::string window_mode = "rank";
  Index max_pos_per_anchor = 32;
  bool use_group_constraint = false;
};

struct LossSection {
  double tau = 0.5;
  bool use_dm = true;
  bool use_mix_neg = true;
  bool use_mix_pos = true;
  double quant_bin_width = 0.0;
};

struct TrainSection {
  Index pretrain_epochs = 200;
  Index probe_epochs = 100;
  Index batch_size = 256;
  double lr = 1e-3;
  double probe_lr = 1e-2;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  Index warmup_epochs = 10;
  double min_lr = 0.0;
  std::optional<std::uint64_t> seed;
};

struct EncoderSection {
  std::vector<Index> hidden_dims{64, 64};
  Index embed_dim = 16;
};

struct VerifySection {
  Index fd_batches = 50;
  Index bound_trials = 1000;
  Index dm_trials = 1000;
  std::vector<double> taus{1.0, 0.5, 0.2, 0.1, 0.05};
  double infimum_gap_scale = 0.43;
};

struct CompareSection {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool permute = true;
  Index bootstrap = 100;
};

struct RunConfig {
  DataSection data;
  MixSection mix;
  LossSection loss;
  TrainSection train;
  EncoderSection encoder;
  VerifySection verify;
  CompareSection compare;

  std::uint64_t data_seed() const { return data.seed.value_or(0); }
  std::uint64_t train_seed() const { return train.seed.value_or(0); }
};

/// Throws ParseError (syntax, unknown keys, wrong value types) naming the
/// line, then ValidationError listing every invalid field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Every field, in section order. parse_config(to_config_text(c)) == c.
std::string to_config_text(const RunConfig& config);

nlohmann::ordered_json config_to_json(const RunConfig& config);

/// Throws ValidationError listing all offending fields.
void validate_config(const RunConfig& config);

/// Seed precedence: flag, then the seeds set in the file, then the
/// SUPREMIX_SEED environment variable, then 0.
void resolve_seeds(RunConfig& config, std::optional<std::uint64_t> flag_seed);

}  // namespace supremix

#endif  // SUPREMIX_CONFIG_HPP
