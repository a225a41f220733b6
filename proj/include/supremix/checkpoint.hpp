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

// Versioned JSON checkpoints: encoder shape, label range, config echo and
// row-major parameter arrays.

#ifndef SUPREMIX_CHECKPOINT_HPP
#define SUPREMIX_CHECKPOINT_HPP

#include <optional>
#include <string>

#include "json.hpp"
#include "supremix/core.hpp"
#include "supremix/nn.hpp"

namespace supremix {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string method;
  EncoderConfig encoder;
  MlpParams params;
  LabelRange range;
  std::optional<ProbeParams> head;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::ordered_json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace supremix

#endif  // SUPREMIX_CHECKPOINT_HPP
