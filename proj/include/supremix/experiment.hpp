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

// Glue from a RunConfig to the library: dataset construction, training
// setups, the property checks behind `verify` and the multi-arm `compare`.

#ifndef SUPREMIX_EXPERIMENT_HPP
#define SUPREMIX_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "supremix/analysis.hpp"
#include "supremix/config.hpp"
#include "supremix/data.hpp"
#include "supremix/nn.hpp"

namespace supremix {

using ordered_json = nlohmann::ordered_json;

SyntheticSpec synthetic_spec(const RunConfig& config);
/// Generated data, or the CSV named in data.csv_path.
Dataset build_dataset(const RunConfig& config);
EncoderConfig encoder_config(const RunConfig& config, Index input_dim);
TrainConfig train_config(const RunConfig& config);
MixNegConfig mix_neg_config(const RunConfig& config);
MixPosConfig mix_pos_config(const RunConfig& config);
PretrainSetup pretrain_setup(const RunConfig& config);

/// "supcon" with every toggle off, "supremix" with every toggle on, otherwise
/// "supremix" followed by the enabled parts (e.g. "supremix-dm-mixneg").
std::string method_name(const LossSection& loss);

ordered_json metrics_json(const Metrics& m);
ordered_json epoch_log_json(const EpochLog& e);
/// Columns: epoch, loss, lr, avg_pos_logit, mean_top1k_neg_logit.
void write_epoch_csv(const std::vector<EpochLog>& log, const std::string& path);

struct CheckResult {
  bool passed = false;
  ordered_json detail = ordered_json::object();
};

/// Analytic vs central-difference gradients on `batches` random batches
/// (N <= 32, d <= 16), cycling all toggle combinations and window modes.
CheckResult check_gradients(Index batches, std::uint64_t seed);
/// Loss against its lower bound on random instances, slack 1e-9.
CheckResult check_bounds(Index trials, std::uint64_t seed);
/// Distance-magnifying derivative ratio over `trials` trials.
CheckResult check_dm(Index trials, std::uint64_t seed);
/// Gaps along the descending schedule on the 5 x 3 ordered construction.
CheckResult check_infimum(const std::vector<double>& taus, double gap_scale,
                          std::uint64_t seed);
CheckResult check_ordered_construction();

struct VerifyReport {
  bool passed = false;
  ordered_json json;
};

VerifyReport run_verify(const RunConfig& config);

/// Runs the supremix, supcon and vanilla arms (plus permuted-label arms when
/// compare.permute is set) for every seed in compare.seeds. Epoch CSVs go to
/// `out_dir` when given; the report names them relative to it.
ordered_json run_compare(const RunConfig& config,
                         const std::optional<std::string>& out_dir);

}  // namespace supremix

#endif  // SUPREMIX_EXPERIMENT_HPP
