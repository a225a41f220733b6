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

#include <cstdlib>
#include <string>

#include "doctest.h"
#include "supremix/config.hpp"
#include "supremix/error.hpp"

using namespace supremix;

TEST_CASE("default config round trip") {
  const RunConfig c;
  const std::string text = to_config_text(c);
  const RunConfig back = parse_config(text);
  CHECK(to_config_text(back) == text);
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(text.find("seed =") == std::string::npos);
}

TEST_CASE("edited config round trip is idempotent") {
  const std::string text = R"(# experiment
[data]
kind = smooth_random   # bare string
n = 300
noise = 0.1
seed = 7

[loss]
tau = 0.07
use_dm = false

[encoder]
hidden_dims = [32, 16, 8]

[verify]
taus = [2, 0.3, 0.01]

[compare]
seeds = [3]
)";
  const RunConfig c = parse_config(text);
  CHECK(c.data.kind == "smooth_random");
  CHECK(c.data.n == 300);
  CHECK(c.data.noise == 0.1);
  CHECK(c.data.seed == std::optional<std::uint64_t>(7));
  CHECK(c.loss.tau == 0.07);
  CHECK_FALSE(c.loss.use_dm);
  CHECK(c.loss.use_mix_neg);
  CHECK(c.encoder.hidden_dims == std::vector<Index>{32, 16, 8});
  CHECK(c.verify.taus == std::vector<double>{2, 0.3, 0.01});
  CHECK(c.compare.seeds == std::vector<std::uint64_t>{3});
  const std::string once = to_config_text(c);
  CHECK(to_config_text(parse_config(once)) == once);
  CHECK(config_to_json(parse_config(once)) == config_to_json(c));
}

TEST_CASE("doubles survive text exactly") {
  RunConfig c;
  c.train.lr = 0.1 + 0.2;
  c.mix.alpha = 1.0 / 3.0;
  const RunConfig back = parse_config(to_config_text(c));
  CHECK(back.train.lr == c.train.lr);
  CHECK(back.mix.alpha == c.mix.alpha);
}

TEST_CASE("syntax errors name the line") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("[loss]\ntemperature = 1\n").find("line 2") != std::string::npos);
  CHECK(message("[loss]\ntau = fast\n").find("loss.tau") != std::string::npos);
  CHECK(message("[loss]\nuse_dm = yes\n").find("line 2") != std::string::npos);
  CHECK(message("[loss\n").find("line 1") != std::string::npos);
  CHECK(message("[loss]\njust words\n").find("line 2") != std::string::npos);
  CHECK(message("[loss]\ntau = 1\ntau = 2\n").find("duplicate") != std::string::npos);
  CHECK(message("tau = 1\n").find("unknown") != std::string::npos);
  CHECK(message("[encoder]\nhidden_dims = 64\n").find("list") != std::string::npos);
}

TEST_CASE("validation lists every bad field") {
  std::string msg;
  try {
    parse_config("[verify]\ntaus = [0.1, 0.5]\nbound_trials = 0\n[loss]\ntau = -1\n");
  } catch (const ValidationError& e) {
    msg = e.what();
  }
  CHECK(msg.find("verify.taus") != std::string::npos);
  CHECK(msg.find("verify.bound_trials") != std::string::npos);
  CHECK(msg.find("loss.tau") != std::string::npos);

  RunConfig c;
  c.mix.use_group_constraint = true;
  CHECK_THROWS_AS(validate_config(c), ValidationError);
  c.data.group_column = "site";
  CHECK_NOTHROW(validate_config(c));
  c.train.warmup_epochs = c.train.pretrain_epochs;
  CHECK_THROWS_AS(validate_config(c), ValidationError);
}

TEST_CASE("seed precedence") {
  ::unsetenv("SUPREMIX_SEED");
  RunConfig c;
  resolve_seeds(c, std::nullopt);
  CHECK(c.data_seed() == 0);
  CHECK(c.train_seed() == 0);

  ::setenv("SUPREMIX_SEED", "11", 1);
  RunConfig env;
  resolve_seeds(env, std::nullopt);
  CHECK(env.data_seed() == 11);
  CHECK(env.train_seed() == 11);

  RunConfig file;
  file.train.seed = 5;
  resolve_seeds(file, std::nullopt);
  CHECK(file.train_seed() == 5);
  CHECK(file.data_seed() == 11);

  RunConfig flag;
  flag.train.seed = 5;
  resolve_seeds(flag, 3);
  CHECK(flag.train_seed() == 3);
  CHECK(flag.data_seed() == 3);

  ::setenv("SUPREMIX_SEED", "abc", 1);
  RunConfig broken;
  CHECK_THROWS_AS(resolve_seeds(broken, std::nullopt), ValidationError);
  ::unsetenv("SUPREMIX_SEED");
}
