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

// supremix command-line driver.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "supremix/checkpoint.hpp"
#include "supremix/config.hpp"
#include "supremix/error.hpp"
#include "supremix/experiment.hpp"

namespace fs = std::filesystem;
using namespace supremix;

namespace {

constexpr int kExitProperty = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;

  std::string checkpoint;
  std::string embeddings;
  std::string targets;
  std::string data;
  Index n_train = 0;
  std::vector<std::string> exclude;
};

class Command {
 public:
  Command(const Options& opt, std::string name, bool needs_config)
      : opt_(opt), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {
    if (needs_config && opt.config_path.empty()) {
      throw ValidationError(name_ + ": --config is required");
    }
    if (!opt.config_path.empty()) config_ = load_config(opt.config_path);
    resolve_seeds(config_, opt.seed);
    set_thread_count(opt.threads);
    fs::create_directories(opt.out_dir);
  }

  const RunConfig& config() const { return config_; }
  std::string path(const std::string& file) const { return (fs::path(opt_.out_dir) / file).string(); }

  ordered_json report() const {
    ordered_json j;
    j["command"] = name_;
    j["config"] = config_to_json(config_);
    return j;
  }

  void write_json(const std::string& file, const ordered_json& j) const {
    std::ofstream out(path(file));
    if (!out) throw IoError("cannot write " + path(file));
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path(file));
  }

  void finish(ordered_json j) const {
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json(name_ + ".json", j);
    std::cout << "wrote " << path(name_ + ".json") << '\n';
  }

  Dataset dataset() const {
    if (opt_.data.empty()) return build_dataset(config_);
    std::optional<std::string> group;
    if (!config_.data.group_column.empty()) group = config_.data.group_column;
    return load_csv(opt_.data, config_.data.label_column, group, config_.data_seed());
  }

 private:
  const Options& opt_;
  std::string name_;
  RunConfig config_;
  std::chrono::steady_clock::time_point start_;
};

ordered_json split_sizes(const Dataset& d) {
  return {{"train", d.indices(Split::kTrain).size()},
          {"val", d.indices(Split::kVal).size()},
          {"test", d.indices(Split::kTest).size()}};
}

int cmd_gen_data(const Options& opt) {
  Command cmd(opt, "gen-data", true);
  const Dataset data = build_dataset(cmd.config());
  write_csv(data, cmd.path("data.csv"));
  auto j = cmd.report();
  j["rows"] = data.size();
  j["splits"] = split_sizes(data);
  j["data_csv"] = "data.csv";
  cmd.finish(j);
  return 0;
}

int cmd_pretrain(const Options& opt) {
  Command cmd(opt, "pretrain", true);
  const auto& cfg = cmd.config();
  const Dataset data = cmd.dataset();
  const auto enc = encoder_config(cfg, data.inputs.cols());
  const auto result = pretrain(data, enc, train_config(cfg), pretrain_setup(cfg));
  Checkpoint ckpt{method_name(cfg.loss), enc, result.params, result.range, std::nullopt,
                  config_to_json(cfg)};
  save_checkpoint(ckpt, cmd.path("checkpoint.json"));
  write_epoch_csv(result.log, cmd.path("epochs.csv"));
  auto j = cmd.report();
  j["method"] = ckpt.method;
  j["splits"] = split_sizes(data);
  j["final_epoch"] = epoch_log_json(result.log.back());
  j["epoch_csv"] = "epochs.csv";
  j["checkpoint"] = "checkpoint.json";
  cmd.finish(j);
  return 0;
}

int cmd_probe(const Options& opt) {
  Command cmd(opt, "probe", opt.embeddings.empty());
  const auto& cfg = cmd.config();
  const TrainConfig tc = train_config(cfg);
  auto j = cmd.report();
  ordered_json metrics;
  if (!opt.embeddings.empty()) {
    // Fixed embeddings: the probe is fit and scored on every row.
    const Dataset emb = load_csv(opt.embeddings, cfg.data.label_column);
    const auto probe = fit_probe(emb.inputs, emb.labels, tc);
    const Vector pred = probe_predict(probe, emb.inputs);
    const std::vector<double> p(pred.data(), pred.data() + pred.size());
    metrics = metrics_json(compute_metrics(p, emb.labels));
    j["source"] = "embeddings";
    j["rows"] = emb.size();
    j["all_rows"] = metrics;
  } else {
    if (opt.checkpoint.empty()) throw ValidationError("probe: --checkpoint or --embeddings is required");
    if (!fs::exists(opt.checkpoint)) throw IoError("probe: checkpoint not found: " + opt.checkpoint);
    const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
    const Dataset data = cmd.dataset();
    if (ckpt.encoder.input_dim != data.inputs.cols()) {
      throw ParseError("checkpoint: encoder expects input_dim " +
                       std::to_string(ckpt.encoder.input_dim) + " but the data has " +
                       std::to_string(data.inputs.cols()) + " features");
    }
    const auto result = linear_probe(ckpt.params, data, tc);
    metrics = metrics_json(result.test);
    j["source"] = "checkpoint";
    j["method"] = ckpt.method;
    j["val"] = metrics_json(result.val);
    j["test"] = metrics;
    j["probe"] = {{"weight", std::vector<double>(result.probe.weight.data(),
                                                 result.probe.weight.data() + result.probe.weight.size())},
                  {"bias", result.probe.bias}};
  }
  cmd.write_json("metrics.json", metrics);
  j["metrics_json"] = "metrics.json";
  cmd.finish(j);
  return 0;
}

int cmd_train_vanilla(const Options& opt) {
  Command cmd(opt, "train-vanilla", true);
  const auto& cfg = cmd.config();
  const Dataset data = cmd.dataset();
  const auto enc = encoder_config(cfg, data.inputs.cols());
  const auto result = vanilla_train(data, enc, train_config(cfg));
  Checkpoint ckpt{"vanilla", enc, result.params.encoder,
                  label_range(data.labels_of(Split::kTrain)), result.params.head,
                  config_to_json(cfg)};
  save_checkpoint(ckpt, cmd.path("checkpoint.json"));
  write_epoch_csv(result.log, cmd.path("epochs.csv"));
  cmd.write_json("metrics.json", metrics_json(result.test));
  auto j = cmd.report();
  j["method"] = "vanilla";
  j["splits"] = split_sizes(data);
  j["val"] = metrics_json(result.val);
  j["test"] = metrics_json(result.test);
  j["final_epoch"] = epoch_log_json(result.log.back());
  j["epoch_csv"] = "epochs.csv";
  j["checkpoint"] = "checkpoint.json";
  j["metrics_json"] = "metrics.json";
  cmd.finish(j);
  return 0;
}

int cmd_verify(const Options& opt) {
  Command cmd(opt, "verify", true);
  const auto rep = run_verify(cmd.config());
  auto j = cmd.report();
  for (const auto& [k, v] : rep.json.items()) j[k] = v;
  for (const auto& [name, check] : rep.json["checks"].items()) {
    std::cout << (check["passed"].get<bool>() ? "pass " : "FAIL ") << name << '\n';
  }
  cmd.finish(j);
  return rep.passed ? 0 : kExitProperty;
}

int cmd_compare(const Options& opt) {
  Command cmd(opt, "compare", true);
  const auto rep = run_compare(cmd.config(), opt.out_dir);
  auto j = cmd.report();
  for (const auto& [k, v] : rep.items()) j[k] = v;
  cmd.finish(j);
  return 0;
}

int cmd_nlfd(const Options& opt) {
  Command cmd(opt, "nlfd", false);
  if (opt.embeddings.empty() || opt.targets.empty()) {
    throw ValidationError("nlfd: --embeddings and --targets are required");
  }
  const Matrix emb = load_matrix_csv(opt.embeddings);
  std::vector<std::string> header;
  const Matrix tgt = load_matrix_csv(opt.targets, &header);
  Index col = 0;
  if (const auto it = std::find(header.begin(), header.end(), cmd.config().data.label_column);
      it != header.end()) {
    col = it - header.begin();
  } else if (header.size() != 1) {
    throw ValidationError("nlfd: targets need a single column or one named '" +
                          cmd.config().data.label_column + "'");
  }
  if (tgt.rows() != emb.rows()) {
    throw ValidationError("nlfd: " + std::to_string(emb.rows()) + " embeddings but " +
                          std::to_string(tgt.rows()) + " targets");
  }
  const Vector t = tgt.col(col);
  const auto r = compute_nlfd(emb, std::vector<double>(t.data(), t.data() + t.size()));

  std::ofstream out(cmd.path("nlfd_factors.csv"));
  if (!out) throw IoError("cannot write " + cmd.path("nlfd_factors.csv"));
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "query,neighbor,factor\n";
  for (size_t i = 0; i < r.factors.size(); ++i) {
    const Index q = r.query[i];
    out << q << ',' << r.neighbor[static_cast<size_t>(q)] << ',' << r.factors[i] << '\n';
  }
  out.close();

  auto j = cmd.report();
  j["rows"] = emb.rows();
  j["d"] = r.d;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["skewness"] = r.skewness;
  j["factors"] = r.factors.size();
  j["excluded_pairs"] = r.excluded_pairs;
  j["zero_factors"] = r.zero_factors;
  j["note"] = r.note;
  j["factors_csv"] = "nlfd_factors.csv";
  cmd.finish(j);
  return 0;
}

int finish_transform(const Command& cmd, const Dataset& before, const Dataset& after,
                     ordered_json j) {
  write_csv(after, cmd.path("data.csv"));
  j["rows_in"] = before.size();
  j["rows_out"] = after.size();
  j["splits"] = split_sizes(after);
  j["data_csv"] = "data.csv";
  cmd.finish(j);
  return 0;
}

int cmd_permute(const Options& opt) {
  Command cmd(opt, "permute", false);
  const Dataset data = cmd.dataset();
  auto j = cmd.report();
  j["permute_seed"] = cmd.config().data_seed();
  return finish_transform(cmd, data, permute_labels(data, cmd.config().data_seed()), j);
}

int cmd_subsample(const Options& opt) {
  Command cmd(opt, "subsample", false);
  if (opt.n_train <= 0) throw ValidationError("subsample: --n-train must be positive");
  const Dataset data = cmd.dataset();
  auto j = cmd.report();
  j["n_train"] = opt.n_train;
  return finish_transform(cmd, data, subsample(data, opt.n_train, cmd.config().data_seed()), j);
}

LabelInterval parse_interval(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ValidationError("--exclude expects LO:HI, got '" + text + "'");
  try {
    size_t used = 0;
    const std::string lo = text.substr(0, colon), hi = text.substr(colon + 1);
    LabelInterval iv{std::stod(lo, &used), 0.0};
    if (used != lo.size()) throw std::invalid_argument(lo);
    iv.hi = std::stod(hi, &used);
    if (used != hi.size()) throw std::invalid_argument(hi);
    return iv;
  } catch (const std::logic_error&) {
    throw ValidationError("--exclude expects LO:HI, got '" + text + "'");
  }
}

int cmd_filter_range(const Options& opt) {
  Command cmd(opt, "filter-range", false);
  if (opt.exclude.empty()) throw ValidationError("filter-range: at least one --exclude is required");
  std::vector<LabelInterval> intervals;
  ordered_json iv = ordered_json::array();
  for (const auto& e : opt.exclude) {
    intervals.push_back(parse_interval(e));
    iv.push_back({intervals.back().lo, intervals.back().hi});
  }
  const Dataset data = cmd.dataset();
  Index removed = 0;
  const Dataset kept = filter_label_range(data, intervals, &removed);
  auto j = cmd.report();
  j["excluded"] = iv;
  j["removed"] = removed;
  return finish_transform(cmd, data, kept, j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised contrastive regression with embedding mixup"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "Run configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", opt.seed, "Seed; overrides the config and SUPREMIX_SEED");
  app.add_option("--threads", opt.threads, "Worker threads (0: all cores)");

  std::function<int(const Options&)> action;
  auto sub = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    auto* s = app.add_subcommand(name, help);
    s->callback([&action, fn] { action = fn; });
    return s;
  };
  sub("gen-data", "Write a synthetic dataset as CSV", cmd_gen_data);
  auto* pre = sub("pretrain", "Contrastive pretraining; writes a checkpoint and epoch CSV", cmd_pretrain);
  auto* probe = sub("probe", "Fit a linear probe on frozen embeddings", cmd_probe);
  auto* van = sub("train-vanilla", "Train encoder and head end to end with L1 loss", cmd_train_vanilla);
  sub("verify", "Run the gradient, bound and ordering checks", cmd_verify);
  sub("compare", "SupReMix vs SupCon vs vanilla over the configured seeds", cmd_compare);
  auto* nlfd = sub("nlfd", "Nearest-neighbour Lipschitz factors of an embedding CSV", cmd_nlfd);
  auto* perm = sub("permute", "Reassign label values by a random bijection", cmd_permute);
  auto* subs = sub("subsample", "Keep n training rows", cmd_subsample);
  auto* filt = sub("filter-range", "Drop rows whose label falls in given intervals", cmd_filter_range);

  probe->add_option("--checkpoint", opt.checkpoint, "Checkpoint from pretrain");
  probe->add_option("--embeddings", opt.embeddings,
                    "CSV of fixed embeddings plus the label column; fit and scored on all rows")
      ->check(CLI::ExistingFile);
  nlfd->add_option("--embeddings", opt.embeddings, "Embedding CSV with header")->check(CLI::ExistingFile);
  nlfd->add_option("--targets", opt.targets, "Target CSV with header")->check(CLI::ExistingFile);
  for (auto* s : {pre, probe, van, perm, subs, filt}) {
    s->add_option("--data", opt.data, "Dataset CSV instead of the config's data section")
        ->check(CLI::ExistingFile);
  }
  subs->add_option("--n-train", opt.n_train, "Training rows to keep")->required();
  filt->add_option("--exclude", opt.exclude, "Label interval LO:HI, repeatable")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  try {
    return action(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
