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

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "supremix/analysis.hpp"
#include "supremix/nn.hpp"
#include "supremix/theory.hpp"

namespace fs = std::filesystem;
using namespace supremix;
using json = nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "supremix_cli_test";

int cli(const std::string& args, const std::string& env = "") {
  const std::string cmd =
      env + " '" SUPREMIX_CLI "' " + args + " > '" + (kRoot / "last.log").string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write(const std::string& name, const std::string& body) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string out(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  return " --out '" + p.string() + "'";
}

std::string cfg(const fs::path& p) { return " --config '" + p.string() + "'"; }

const char* kSmall = R"([data]
n = 200
dim = 8

[train]
pretrain_epochs = 1
probe_epochs = 3
batch_size = 64
warmup_epochs = 0

[encoder]
hidden_dims = [16]
embed_dim = 8

[compare]
seeds = [0]
bootstrap = 2
)";

}  // namespace

TEST_CASE("usage errors exit 2") {
  fs::create_directories(kRoot);
  CHECK(cli("") == 2);
  CHECK(cli("no-such-command") == 2);
  CHECK(cli("pretrain") == 2);
  CHECK(cli("pretrain --config /nonexistent.toml") == 2);
  CHECK(cli("--help") == 0);
  const auto bad = write("bad_key.toml", "[train]\nepochs = 3\n");
  CHECK(cli("pretrain" + cfg(bad) + out("bad")) == 2);
  CHECK(slurp(kRoot / "last.log").find("line 2") != std::string::npos);
}

TEST_CASE("gen-data") {
  const auto c = write("gen.toml", "[data]\nn = 150\nseed = 4\n");
  REQUIRE(cli("gen-data" + cfg(c) + out("gen1")) == 0);
  REQUIRE(cli("gen-data" + cfg(c) + out("gen2")) == 0);
  const std::string a = slurp(kRoot / "gen1" / "data.csv");
  CHECK(std::count(a.begin(), a.end(), '\n') == 151);
  CHECK(a == slurp(kRoot / "gen2" / "data.csv"));
  CHECK(read_json(kRoot / "gen1" / "gen-data.json").contains("wall_clock_seconds"));

  const auto big = write("gen_big.toml", "[data]\nn = 10000\n");
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(cli("gen-data" + cfg(big) + out("gen_big")) == 0);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 5.0);

  CHECK(cli("gen-data" + cfg(c) + " --out /proc/forbidden") == 2);
}

TEST_CASE("seed precedence on the command line") {
  const auto no_seed = write("noseed.toml", "[data]\nn = 100\n");
  const auto with_seed = write("seeded.toml", "[data]\nn = 100\nseed = 9\n");
  REQUIRE(cli("gen-data" + cfg(no_seed) + out("s_env"), "SUPREMIX_SEED=9") == 0);
  REQUIRE(cli("gen-data" + cfg(no_seed) + " --seed 9" + out("s_flag"), "SUPREMIX_SEED=1") == 0);
  REQUIRE(cli("gen-data" + cfg(with_seed) + out("s_file"), "SUPREMIX_SEED=1") == 0);
  REQUIRE(cli("gen-data" + cfg(with_seed) + " --seed 2" + out("s_over")) == 0);
  const std::string ref = slurp(kRoot / "s_env" / "data.csv");
  CHECK(slurp(kRoot / "s_flag" / "data.csv") == ref);
  CHECK(slurp(kRoot / "s_file" / "data.csv") == ref);
  CHECK(slurp(kRoot / "s_over" / "data.csv") != ref);
  CHECK(cli("gen-data" + cfg(no_seed) + out("s_bad"), "SUPREMIX_SEED=x") == 2);
}

TEST_CASE("pretrain, probe and train-vanilla") {
  const auto c = write("small.toml", kSmall);
  REQUIRE(cli("pretrain" + cfg(c) + out("pre")) == 0);
  const fs::path pre = kRoot / "pre";
  CHECK(fs::exists(pre / "checkpoint.json"));
  const std::string csv = slurp(pre / "epochs.csv");
  CHECK(csv.rfind("epoch,loss,lr,avg_pos_logit,mean_top1k_neg_logit\n", 0) == 0);
  CHECK(read_json(pre / "pretrain.json")["method"] == "supremix");

  REQUIRE(cli("pretrain" + cfg(c) + out("pre_again")) == 0);
  CHECK(slurp(kRoot / "pre_again" / "epochs.csv") == csv);

  const auto off = write("off.toml", std::string(kSmall) +
                                         "\n[loss]\nuse_dm = false\nuse_mix_neg = false\nuse_mix_pos = false\n");
  REQUIRE(cli("pretrain" + cfg(off) + out("pre_off")) == 0);
  CHECK(read_json(kRoot / "pre_off" / "pretrain.json")["method"] == "supcon");

  REQUIRE(cli("probe" + cfg(c) + " --checkpoint '" + (pre / "checkpoint.json").string() + "'" +
              out("probe")) == 0);
  const json m = read_json(kRoot / "probe" / "metrics.json");
  CHECK(m.size() == 4);
  for (const char* k : {"mae", "mse", "gm", "pearson"}) CHECK(m.contains(k));

  CHECK(cli("probe" + cfg(c) + " --checkpoint /nonexistent.json" + out("probe_missing")) == 2);
  std::string text = kSmall;
  text.replace(text.find("dim = 8"), 7, "dim = 5");
  const auto other_dim = write("dim5.toml", text);
  CHECK(cli("probe" + cfg(other_dim) + " --checkpoint '" + (pre / "checkpoint.json").string() + "'" +
            out("probe_shape")) == 2);
  CHECK(slurp(kRoot / "last.log").find("checkpoint") != std::string::npos);

  REQUIRE(cli("train-vanilla" + cfg(c) + out("van")) == 0);
  CHECK(read_json(kRoot / "van" / "metrics.json").size() == 4);
  CHECK(fs::exists(kRoot / "van" / "epochs.csv"));
}

TEST_CASE("probe on fixed embeddings matches the in-process fit") {
  std::vector<Label> labels;
  for (double m : {0.0, 0.25, 0.5, 0.75, 1.0})
    for (int s = 0; s < 3; ++s) labels.push_back(m);
  const auto batch = construct_ordered_embeddings(labels, 2);
  std::ostringstream body;
  body.precision(17);
  body << "e0,e1,y\n";
  for (Index i = 0; i < batch.size(); ++i)
    body << batch.embeddings(i, 0) << ',' << batch.embeddings(i, 1) << ',' << labels[static_cast<size_t>(i)] << '\n';
  const auto emb = write("ordered.csv", body.str());
  const auto c = write("probe_only.toml", "[train]\nprobe_epochs = 1000\n");
  REQUIRE(cli("probe" + cfg(c) + " --embeddings '" + emb.string() + "'" + out("bypass")) == 0);
  const json m = read_json(kRoot / "bypass" / "metrics.json");

  TrainConfig tc;
  tc.probe_epochs = 1000;
  const auto probe = fit_probe(batch.embeddings, labels, tc);
  const Vector pred = probe_predict(probe, batch.embeddings);
  const auto expect = compute_metrics(std::vector<double>(pred.data(), pred.data() + pred.size()), labels);
  CHECK(m["mae"].get<double>() == expect.mae);
  CHECK(m["mse"].get<double>() == expect.mse);
}

TEST_CASE("verify rejects misconfiguration") {
  const auto asc = write("asc.toml", "[verify]\ntaus = [0.05, 1]\n");
  CHECK(cli("verify" + cfg(asc) + out("v_asc")) == 2);
  const auto zero = write("zero.toml", "[verify]\nbound_trials = 0\n");
  CHECK(cli("verify" + cfg(zero) + out("v_zero")) == 2);
  const auto quick = write("quick.toml", "[verify]\nfd_batches = 16\nbound_trials = 20\ndm_trials = 20\n");
  REQUIRE(cli("verify" + cfg(quick) + out("v_ok")) == 0);
  const json r = read_json(kRoot / "v_ok" / "verify.json");
  CHECK(r["passed"] == true);
  CHECK(r["checks"].size() == 5);
}

TEST_CASE("compare smoke run") {
  const auto c = write("cmp.toml", kSmall);
  REQUIRE(cli("compare" + cfg(c) + out("cmp")) == 0);
  const json r = read_json(kRoot / "cmp" / "compare.json");
  REQUIRE(r["per_seed"].size() == 1);
  const json& seed = r["per_seed"][0];
  CHECK(seed["arms"].size() == 3);
  for (const char* arm : {"supremix", "supcon", "vanilla"}) {
    CHECK(seed["arms"][arm]["test"].size() == 4);
    CHECK(fs::exists(kRoot / "cmp" / seed["arms"][arm]["epoch_csv"].get<std::string>()));
  }
  for (const char* arm : {"supremix", "supcon"}) {
    CHECK(seed["permutation"][arm].contains("ordinality_genuine"));
    CHECK(seed["permutation"][arm].contains("ordinality_permuted"));
  }
  CHECK(seed["bootstrap"]["B"] == 2);
}

TEST_CASE("nlfd command") {
  // Points 0 and 1 are each other's nearest neighbours in standardized space.
  const auto e = write("toy_emb.csv", "a,b\n0,0\n1,0\n0,2\n");
  const auto t = write("toy_t.csv", "y\n0\n1\n3\n");
  REQUIRE(cli("nlfd --embeddings '" + e.string() + "' --targets '" + t.string() + "'" + out("nlfd")) == 0);
  const json r = read_json(kRoot / "nlfd" / "nlfd.json");
  Matrix x(3, 2);
  x << 0, 0, 1, 0, 0, 2;
  const auto in_process = compute_nlfd(x, std::vector<double>{0, 1, 3});
  CHECK(r["mean"].get<double>() == in_process.mean);
  CHECK(r["std"].get<double>() == in_process.std);
  CHECK(r["factors"] == 3);
  // Standardized: a = (-1, 2, -1)/sqrt(2), b = (-1, -1, 2)/sqrt(2).
  // dist(0,1) = dist(0,2) = 3/sqrt(2), dist(1,2) = sqrt(18)/sqrt(2) = 3.
  // 0 -> 1 (tie, lower index): |1 - 0| / (3/sqrt(2)) * sqrt(2) = 2/3.
  const std::string factors = slurp(kRoot / "nlfd" / "nlfd_factors.csv");
  CHECK(factors.find("0,1,0.66666666666666") != std::string::npos);

  const auto dup = write("dup_emb.csv", "a,b\n0,0\n0,0\n1,3\n2,1\n");
  const auto dup_t = write("dup_t.csv", "y\n0\n1\n2\n3\n");
  REQUIRE(cli("nlfd --embeddings '" + dup.string() + "' --targets '" + dup_t.string() + "'" + out("dup")) == 0);
  CHECK(read_json(kRoot / "dup" / "nlfd.json")["excluded_pairs"].get<int>() > 0);

  const auto short_t = write("short_t.csv", "y\n0\n1\n");
  CHECK(cli("nlfd --embeddings '" + e.string() + "' --targets '" + short_t.string() + "'" + out("nlfd_bad")) == 2);
}

TEST_CASE("dataset transforms") {
  const auto c = write("tr.toml", "[data]\nn = 200\nseed = 1\n");
  REQUIRE(cli("gen-data" + cfg(c) + out("tr")) == 0);
  const std::string data = " --data '" + (kRoot / "tr" / "data.csv").string() + "'";
  REQUIRE(cli("permute" + cfg(c) + data + out("perm")) == 0);
  CHECK(slurp(kRoot / "perm" / "data.csv") != slurp(kRoot / "tr" / "data.csv"));
  REQUIRE(cli("subsample" + cfg(c) + data + " --n-train 30" + out("sub")) == 0);
  CHECK(read_json(kRoot / "sub" / "subsample.json")["splits"]["train"] == 30);
  REQUIRE(cli("filter-range" + cfg(c) + data + " --exclude 0.2:0.6" + out("filt")) == 0);
  const json f = read_json(kRoot / "filt" / "filter-range.json");
  CHECK(f["rows_out"].get<int>() + f["removed"].get<int>() == 200);
  CHECK(f["removed"].get<int>() > 0);
  CHECK(cli("filter-range" + cfg(c) + data + " --exclude 0.2" + out("filt_bad")) == 2);
  CHECK(cli("subsample" + cfg(c) + data + out("sub_bad")) == 2);
}
