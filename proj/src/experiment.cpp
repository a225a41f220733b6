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

#include "supremix/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "supremix/error.hpp"
#include "supremix/loss.hpp"
#include "supremix/theory.hpp"

namespace supremix {

namespace {

std::uint64_t u64(Index v) { return static_cast<std::uint64_t>(v); }

// Gaussian rows with labels on {0, ..., levels - 1}; every level appears when
// n >= levels.
LabeledBatch random_raw_batch(Rng& rng, Index n, Index d, Index levels) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix e(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) e(i, j) = nd(rng);
  std::vector<Label> labels(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    labels[static_cast<size_t>(i)] =
        static_cast<double>(i < levels ? i : static_cast<Index>(uniform_index(rng, u64(levels))));
  }
  std::shuffle(labels.begin(), labels.end(), rng);
  return LabeledBatch::make(std::move(e), std::move(labels), false);
}

LabeledBatch unit_of(const LabeledBatch& raw) {
  return LabeledBatch::make(normalize_embeddings(raw.embeddings), raw.labels, true);
}

Index draw_in(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(uniform_index(rng, u64(hi - lo + 1)));
}

struct RandomInstance {
  LabeledBatch raw;
  LabelGroups groups;
  std::vector<AnchorContrastSet> sets;
  LossConfig config;
};

RandomInstance make_instance(Rng& rng, Index n, Index d, Index levels, int mask,
                             WindowMode mode, double tau, std::uint64_t mix_seed) {
  RandomInstance inst;
  inst.raw = random_raw_batch(rng, n, d, levels);
  const auto unit = unit_of(inst.raw);
  inst.groups = group_by_label(unit.labels);
  inst.config.tau = tau;
  inst.config.use_dm = mask & 1;
  inst.config.use_mix_neg = mask & 2;
  inst.config.use_mix_pos = mask & 4;
  inst.config.range = label_range(unit.labels);
  MixPosConfig pos;
  pos.window_mode = mode;
  pos.gamma = mode == WindowMode::kRank ? 2.0 : 2.5;
  inst.sets = build_contrast_sets(
      unit, inst.groups,
      inst.config.use_mix_neg ? std::optional(MixNegConfig{}) : std::nullopt,
      inst.config.use_mix_pos ? std::optional(pos) : std::nullopt, std::nullopt, mix_seed);
  return inst;
}

std::vector<Label> five_by_three() {
  std::vector<Label> labels;
  for (double m : {0.0, 0.25, 0.5, 0.75, 1.0})
    for (int s = 0; s < 3; ++s) labels.push_back(m);
  return labels;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ordered_json nlfd_json(const NlfdResult& r) {
  ordered_json j{{"mean", r.mean},
                 {"std", r.std},
                 {"skewness", r.skewness},
                 {"factors", r.factors.size()},
                 {"excluded_pairs", r.excluded_pairs},
                 {"zero_factors", r.zero_factors}};
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

}  // namespace

SyntheticSpec synthetic_spec(const RunConfig& config) {
  SyntheticSpec spec;
  spec.kind = config.data.kind == "smooth_random" ? SyntheticKind::kSmoothRandom
                                                  : SyntheticKind::kHelix;
  spec.n = config.data.n;
  spec.input_dim = config.data.dim;
  spec.noise_sigma = config.data.noise;
  spec.label_grid = config.data.label_grid;
  spec.seed = config.data_seed();
  return spec;
}

Dataset build_dataset(const RunConfig& config) {
  if (config.data.csv_path.empty()) return gen_synthetic(synthetic_spec(config));
  std::optional<std::string> group;
  if (!config.data.group_column.empty()) group = config.data.group_column;
  return load_csv(config.data.csv_path, config.data.label_column, group, config.data_seed());
}

EncoderConfig encoder_config(const RunConfig& config, Index input_dim) {
  EncoderConfig enc;
  enc.input_dim = input_dim;
  enc.hidden_dims = config.encoder.hidden_dims;
  enc.embed_dim = config.encoder.embed_dim;
  return enc;
}

TrainConfig train_config(const RunConfig& config) {
  TrainConfig tc;
  tc.pretrain_epochs = config.train.pretrain_epochs;
  tc.probe_epochs = config.train.probe_epochs;
  tc.batch_size = config.train.batch_size;
  tc.base_lr = config.train.lr;
  tc.probe_lr = config.train.probe_lr;
  tc.weight_decay = config.train.weight_decay;
  tc.clip_norm = config.train.clip_norm;
  tc.warmup_epochs = config.train.warmup_epochs;
  tc.min_lr = config.train.min_lr;
  tc.seed = config.train_seed();
  return tc;
}

MixNegConfig mix_neg_config(const RunConfig& config) {
  return MixNegConfig{config.mix.alpha, config.mix.beta};
}

MixPosConfig mix_pos_config(const RunConfig& config) {
  MixPosConfig pos;
  pos.gamma = config.mix.gamma;
  pos.window_mode = config.mix.window_mode == "distance" ? WindowMode::kLabelDistance
                                                         : WindowMode::kRank;
  pos.max_pos_per_anchor = config.mix.max_pos_per_anchor;
  return pos;
}

PretrainSetup pretrain_setup(const RunConfig& config) {
  PretrainSetup setup;
  setup.mix_neg = mix_neg_config(config);
  setup.mix_pos = mix_pos_config(config);
  setup.loss.tau = config.loss.tau;
  setup.loss.use_dm = config.loss.use_dm;
  setup.loss.use_mix_neg = config.loss.use_mix_neg;
  setup.loss.use_mix_pos = config.loss.use_mix_pos;
  setup.rule.bin_width = config.loss.quant_bin_width;
  setup.use_group_constraint = config.mix.use_group_constraint;
  return setup;
}

std::string method_name(const LossSection& loss) {
  if (!loss.use_dm && !loss.use_mix_neg && !loss.use_mix_pos) return "supcon";
  if (loss.use_dm && loss.use_mix_neg && loss.use_mix_pos) return "supremix";
  std::string name = "supremix";
  if (loss.use_dm) name += "-dm";
  if (loss.use_mix_neg) name += "-mixneg";
  if (loss.use_mix_pos) name += "-mixpos";
  return name;
}

ordered_json metrics_json(const Metrics& m) {
  return {{"mae", m.mae},
          {"mse", m.mse},
          {"gm", m.gm},
          {"pearson", m.pearson_defined ? ordered_json(m.pearson) : ordered_json(nullptr)}};
}

ordered_json epoch_log_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"loss", e.loss},
          {"lr", e.lr},
          {"avg_pos_logit", e.avg_pos_logit},
          {"mean_top1k_neg_logit", e.mean_top_k_neg_logit}};
}

void write_epoch_csv(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "epoch,loss,lr,avg_pos_logit,mean_top1k_neg_logit\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.loss << ',' << e.lr << ',' << e.avg_pos_logit << ','
        << e.mean_top_k_neg_logit << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

CheckResult check_gradients(Index batches, std::uint64_t seed) {
  double worst = 0.0;
  Index failures = 0;
  std::vector<int> seen(16, 0);
  for (Index b = 0; b < batches; ++b) {
    Rng rng(derive_seed(seed, {1, u64(b)}));
    const int mask = static_cast<int>(b % 8);
    const auto mode = (b / 8) % 2 ? WindowMode::kLabelDistance : WindowMode::kRank;
    const Index n = draw_in(rng, 8, 32);
    const Index d = draw_in(rng, 2, 16);
    const Index levels = draw_in(rng, 3, 8);
    const double tau = 0.1 + 0.9 * uniform01(rng);
    const auto inst = make_instance(rng, n, d, levels, mask, mode, tau,
                                    derive_seed(seed, {2, u64(b)}));
    const Matrix analytic = supremix_loss(inst.raw, inst.sets, inst.config).grad;
    const Matrix fd = finite_difference_gradient(inst.raw, inst.sets, inst.config, 1e-4);
    const double err = max_relative_error(analytic, fd);
    worst = std::max(worst, err);
    if (!(err < 1e-4)) ++failures;
    seen[static_cast<size_t>(mask + 8 * ((b / 8) % 2))] = 1;
  }
  const int covered = std::count(seen.begin(), seen.end(), 1);
  CheckResult r;
  r.passed = failures == 0 && batches > 0;
  r.detail = {{"batches", batches},
              {"step", 1e-4},
              {"tolerance", 1e-4},
              {"max_relative_error", worst},
              {"failures", failures},
              {"toggle_window_combinations", covered}};
  return r;
}

CheckResult check_bounds(Index trials, std::uint64_t seed) {
  Index violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (Index t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, {3, u64(t)}));
    const Index n = draw_in(rng, 4, 32);
    const Index d = draw_in(rng, 2, 16);
    const Index levels = draw_in(rng, 2, 6);
    const int mask = static_cast<int>(uniform_index(rng, 8));
    const auto mode = uniform_index(rng, 2) ? WindowMode::kLabelDistance : WindowMode::kRank;
    const double tau = 0.05 + 0.95 * uniform01(rng);
    const auto inst = make_instance(rng, n, d, levels, mask, mode, tau,
                                    derive_seed(seed, {4, u64(t)}));
    const double loss = supremix_loss_value(inst.raw, inst.sets, inst.config);
    const double bound = loss_lower_bound(inst.sets, inst.groups, inst.config);
    min_slack = std::min(min_slack, loss - bound);
    if (loss < bound - 1e-9) ++violations;
  }
  CheckResult r;
  r.passed = violations == 0 && trials > 0;
  r.detail = {{"trials", trials},
              {"violations", violations},
              {"numerical_slack", 1e-9},
              {"min_loss_minus_bound", trials > 0 ? min_slack : 0.0}};
  return r;
}

CheckResult check_dm(Index trials, std::uint64_t seed) {
  constexpr Index kBatches = 10;
  DmCheckReport total;
  total.min_ratio_margin = std::numeric_limits<double>::infinity();
  for (Index b = 0; b < kBatches; ++b) {
    const Index share = trials / kBatches + (b < trials % kBatches ? 1 : 0);
    if (share == 0) continue;
    Rng rng(derive_seed(seed, {5, u64(b)}));
    const auto raw = random_raw_batch(rng, 32, 8, 6);
    const auto unit = unit_of(raw);
    const auto groups = group_by_label(unit.labels);
    MixPosConfig pos;
    pos.gamma = 2.0;
    const auto sets = build_contrast_sets(unit, groups, MixNegConfig{}, pos, std::nullopt,
                                          derive_seed(seed, {6, u64(b)}));
    LossConfig cfg;
    cfg.range = label_range(unit.labels);
    const auto r = check_distance_magnifying(raw, sets, cfg, share, rng);
    total.trials += r.trials;
    total.positivity_failures += r.positivity_failures;
    total.ratio_failures += r.ratio_failures;
    total.derivative_failures += r.derivative_failures;
    total.skipped_draws += r.skipped_draws;
    total.min_ratio_margin = std::min(total.min_ratio_margin, r.min_ratio_margin);
    total.max_derivative_rel_err = std::max(total.max_derivative_rel_err, r.max_derivative_rel_err);
  }
  CheckResult r;
  r.passed = total.passed();
  r.detail = {{"trials", total.trials},
              {"positivity_failures", total.positivity_failures},
              {"ratio_failures", total.ratio_failures},
              {"derivative_failures", total.derivative_failures},
              {"skipped_draws", total.skipped_draws},
              {"min_ratio_margin", total.trials > 0 ? total.min_ratio_margin : 0.0},
              {"max_derivative_rel_err", total.max_derivative_rel_err}};
  return r;
}

CheckResult check_infimum(const std::vector<double>& taus, double gap_scale,
                          std::uint64_t seed) {
  const auto rep = infimum_gap(five_by_three(), 2, taus, MixNegConfig{}, MixPosConfig{}, seed);
  bool nonnegative = true, decreasing = true;
  for (size_t i = 0; i < rep.gaps.size(); ++i) {
    nonnegative = nonnegative && rep.gaps[i] >= -1e-9;
    if (i > 0) decreasing = decreasing && rep.gaps[i] < rep.gaps[i - 1];
  }
  const double threshold = gap_scale * std::abs(rep.lower_bound) + 0.1;
  const bool below = !rep.gaps.empty() && rep.gaps.back() < threshold;
  CheckResult r;
  r.passed = nonnegative && decreasing && below;
  r.detail = {{"taus", rep.taus},
              {"losses", rep.losses},
              {"lower_bound", rep.lower_bound},
              {"gaps", rep.gaps},
              {"threshold", threshold},
              {"nonnegative", nonnegative},
              {"strictly_decreasing", decreasing},
              {"final_gap_below_threshold", below},
              {"theta0", rep.theta0},
              {"max_mix_pos_deviation", rep.max_mix_pos_deviation}};
  return r;
}

CheckResult check_ordered_construction() {
  const auto batch = construct_ordered_embeddings(five_by_three(), 2);
  const auto groups = group_by_label(batch.labels);
  double max_cos = -1.0, min_dist = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < batch.size(); ++i) {
    for (Index j = i + 1; j < batch.size(); ++j) {
      if (batch.labels[static_cast<size_t>(i)] == batch.labels[static_cast<size_t>(j)]) continue;
      max_cos = std::max(max_cos, std::abs(batch.embeddings.row(i).dot(batch.embeddings.row(j))));
      min_dist = std::min(min_dist, (batch.embeddings.row(i) - batch.embeddings.row(j)).norm());
    }
  }
  const double eps = 0.99 * (1.0 - max_cos);
  const auto at_eps = check_epsilon_ordered(batch, groups, eps);
  const auto at_half = check_epsilon_ordered(batch, groups, 0.5 * min_dist);
  CheckResult r;
  r.passed = at_eps.ordered;
  r.detail = {{"epsilon", eps},
              {"ordered", at_eps.ordered},
              {"violations", at_eps.violations.size()},
              {"half_min_distance", 0.5 * min_dist},
              {"ordered_at_half_min_distance", at_half.ordered},
              {"violations_at_half_min_distance", at_half.violations.size()}};
  return r;
}

VerifyReport run_verify(const RunConfig& config) {
  const std::uint64_t seed = config.train_seed();
  const auto grad = check_gradients(config.verify.fd_batches, seed);
  const auto bound = check_bounds(config.verify.bound_trials, seed);
  const auto dm = check_dm(config.verify.dm_trials, seed);
  const auto inf = check_infimum(config.verify.taus, config.verify.infimum_gap_scale, seed);
  const auto ord = check_ordered_construction();
  VerifyReport rep;
  rep.passed = grad.passed && bound.passed && dm.passed && inf.passed && ord.passed;
  auto entry = [](const CheckResult& c) {
    ordered_json j{{"passed", c.passed}};
    for (const auto& [k, v] : c.detail.items()) j[k] = v;
    return j;
  };
  rep.json["seed"] = seed;
  rep.json["passed"] = rep.passed;
  rep.json["checks"] = {{"gradients", entry(grad)},
                        {"lower_bound", entry(bound)},
                        {"distance_magnifying", entry(dm)},
                        {"infimum", entry(inf)},
                        {"epsilon_ordered", entry(ord)}};
  return rep;
}

ordered_json run_compare(const RunConfig& config, const std::optional<std::string>& out_dir) {
  ordered_json seeds_json = ordered_json::array();
  std::vector<double> mae_sr, mae_sc, mae_v, ord_sr, ord_sc, drop_sr, drop_sc, zg_sr, zg_sc;
  Index beats = 0, zg_positive = 0, logit_soft = 0;

  for (std::uint64_t s : config.compare.seeds) {
    RunConfig cfg = config;
    cfg.data.seed = config.data_seed() + s;
    cfg.train.seed = config.train_seed() + s;
    const Dataset data = build_dataset(cfg);
    const TrainConfig tc = train_config(cfg);
    const EncoderConfig enc = encoder_config(cfg, data.inputs.cols());
    const Matrix x_test = data.inputs_of(Split::kTest);
    const auto y_test = data.labels_of(Split::kTest);

    std::optional<Dataset> permuted;
    if (cfg.compare.permute) permuted = permute_labels(data, cfg.data_seed() + 1000);

    auto csv_path = [&](const std::string& arm) -> std::optional<std::string> {
      if (!out_dir) return std::nullopt;
      return "epochs_seed" + std::to_string(s) + "_" + arm + ".csv";
    };

    ordered_json seed_json{{"seed", s}, {"data_seed", cfg.data_seed()}, {"train_seed", cfg.train_seed()}};
    ordered_json arms = ordered_json::object();
    ordered_json perm_json = ordered_json::object();

    struct Contrastive {
      std::string key;
      PretrainSetup setup;
      std::string method;
    };
    PretrainSetup sc_setup = pretrain_setup(cfg);
    sc_setup.loss = LossConfig::supcon(cfg.loss.tau);
    const std::vector<Contrastive> contrastive{
        {"supremix", pretrain_setup(cfg), method_name(cfg.loss)},
        {"supcon", sc_setup, "supcon"}};

    std::vector<Matrix> embeddings;
    std::vector<std::vector<double>> predictions;
    std::vector<double> final_pos;
    for (const auto& arm : contrastive) {
      const auto pre = pretrain(data, enc, tc, arm.setup);
      const auto probe = linear_probe(pre.params, data, tc);
      Matrix z = embed(pre.params, x_test);
      const double ord = ordinality_score(z, y_test);
      ordered_json a{{"method", arm.method},
                     {"test", metrics_json(probe.test)},
                     {"val", metrics_json(probe.val)},
                     {"ordinality", ord},
                     {"final_avg_pos_logit", pre.log.back().avg_pos_logit},
                     {"final_mean_top1k_neg_logit", pre.log.back().mean_top_k_neg_logit}};
      if (const auto p = csv_path(arm.key)) {
        write_epoch_csv(pre.log, *out_dir + "/" + *p);
        a["epoch_csv"] = *p;
      }
      arms[arm.key] = a;
      final_pos.push_back(pre.log.back().avg_pos_logit);
      (arm.key == "supremix" ? mae_sr : mae_sc).push_back(probe.test.mae);
      (arm.key == "supremix" ? ord_sr : ord_sc).push_back(ord);
      if (permuted) {
        const auto pre_p = pretrain(*permuted, enc, tc, arm.setup);
        const auto y_perm = permuted->labels_of(Split::kTest);
        const double ord_p = ordinality_score(embed(pre_p.params, x_test), y_perm);
        ordered_json pj{{"ordinality_genuine", ord},
                        {"ordinality_permuted", ord_p},
                        {"drop", ord - ord_p}};
        if (const auto p = csv_path(arm.key + "_permuted")) {
          write_epoch_csv(pre_p.log, *out_dir + "/" + *p);
          pj["epoch_csv"] = *p;
        }
        perm_json[arm.key] = pj;
        (arm.key == "supremix" ? drop_sr : drop_sc).push_back(ord - ord_p);
      }
      embeddings.push_back(std::move(z));
      predictions.push_back(probe.test_predictions);
    }

    const auto van = vanilla_train(data, enc, tc);
    const Matrix z_v = embed(van.params.encoder, x_test);
    ordered_json va{{"method", "vanilla"},
                    {"test", metrics_json(van.test)},
                    {"val", metrics_json(van.val)},
                    {"final_avg_pos_logit", van.log.back().avg_pos_logit},
                    {"final_mean_top1k_neg_logit", van.log.back().mean_top_k_neg_logit}};
    if (const auto p = csv_path("vanilla")) {
      write_epoch_csv(van.log, *out_dir + "/" + *p);
      va["epoch_csv"] = *p;
    }
    arms["vanilla"] = va;
    mae_v.push_back(van.test.mae);

    const auto n_sr = compute_nlfd(embeddings[0], y_test);
    const auto n_sc = compute_nlfd(embeddings[1], y_test);
    const auto n_v = compute_nlfd(z_v, y_test);
    const double g_sr = z_gap(n_sr, n_v);
    const double g_sc = z_gap(n_sc, n_v);
    zg_sr.push_back(g_sr);
    zg_sc.push_back(g_sc);
    if (g_sr > 0) ++zg_positive;
    if (mae_sr.back() <= mae_sc.back()) ++beats;
    if (final_pos[1] >= final_pos[0]) ++logit_soft;

    const auto boot = bootstrap_gap(embeddings[0], predictions[0], z_v, van.test_predictions,
                                    y_test, cfg.compare.bootstrap, derive_seed(cfg.train_seed(), {30}));

    seed_json["arms"] = arms;
    if (permuted) seed_json["permutation"] = perm_json;
    seed_json["nlfd"] = {{"supremix", nlfd_json(n_sr)},
                         {"supcon", nlfd_json(n_sc)},
                         {"vanilla", nlfd_json(n_v)}};
    seed_json["z_gap"] = {{"supremix_vs_vanilla", g_sr}, {"supcon_vs_vanilla", g_sc}};
    seed_json["bootstrap"] = {
        {"B", boot.B},
        {"z", boot.z},
        {"pearson_of_gaps", boot.pearson_defined ? ordered_json(boot.pearson_of_gaps)
                                                 : ordered_json(nullptr)}};
    seeds_json.push_back(seed_json);
  }

  ordered_json summary{
      {"seeds", config.compare.seeds.size()},
      {"median_test_mae", {{"supremix", median(mae_sr)}, {"supcon", median(mae_sc)}, {"vanilla", median(mae_v)}}},
      {"mean_test_mae", {{"supremix", mean(mae_sr)}, {"supcon", mean(mae_sc)}, {"vanilla", mean(mae_v)}}},
      {"supremix_mae_le_supcon", beats},
      {"median_ordinality", {{"supremix", median(ord_sr)}, {"supcon", median(ord_sc)}}},
      {"z_gap_supremix_vs_vanilla_positive", zg_positive},
      {"median_z_gap", {{"supremix_vs_vanilla", median(zg_sr)}, {"supcon_vs_vanilla", median(zg_sc)}}},
      {"supcon_final_pos_logit_ge_supremix", logit_soft}};
  if (config.compare.permute) {
    summary["median_ordinality_drop"] = {{"supremix", median(drop_sr)}, {"supcon", median(drop_sc)}};
  }
  ordered_json out;
  out["method"] = method_name(config.loss);
  out["summary"] = summary;
  out["per_seed"] = seeds_json;
  return out;
}

}  // namespace supremix
