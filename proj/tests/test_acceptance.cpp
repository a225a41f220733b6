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

// Acceptance run: one PASS/FAIL line per criterion.
//   test_acceptance <supremix binary> <tests source dir> <work dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "supremix/analysis.hpp"
#include "supremix/experiment.hpp"
#include "supremix/mixgen.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace supremix;
using json = nlohmann::json;

namespace {

// Pinned tolerances.
constexpr Index kGradBatches = 50;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr Index kBoundTrials = 1000;
constexpr double kBoundSeconds = 60.0;
constexpr Index kDmTrials = 1000;
constexpr double kDmDerivTol = 1e-4;
// Frozen from the oracle run on the 5 x 3 construction: gap(0.05) = 34.73
// against |L*| = 81.90.
constexpr double kInfimumScale = 0.43;
constexpr std::vector<double>::size_type kSeeds = 5;
constexpr int kMinWins = 4;
constexpr double kMinOrdinality = 0.9;
constexpr double kMinDrop = 0.3;
constexpr double kCompareSeconds = 600.0;
constexpr int kNlfdInstances = 20;
constexpr double kNlfdRelTol = 1e-12;
constexpr double kOracleTol = 1e-10;
constexpr int kMixgenConfigs = 200;
constexpr double kRerunTol = 1e-9;

int failures = 0;
std::ostringstream transcript;

void report(int id, bool pass, const std::string& what, const std::string& detail,
            bool soft = false) {
  const char* tag = pass ? "PASS" : (soft ? "WARN" : "FAIL");
  std::ostringstream line;
  line << tag << "  " << id << ". " << what << ": " << detail << '\n';
  std::cout << line.str() << std::flush;
  transcript << line.str();
  if (!pass && !soft) ++failures;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], 3);
  return s + "]";
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = check_gradients(kGradBatches, 0);
  const double secs = seconds_since(t0);
  const double err = r.detail["max_relative_error"];
  const int combos = r.detail["toggle_window_combinations"];
  report(1, err < kGradTol && combos == 16 && secs < kGradSeconds, "gradient vs central differences",
         "max rel err " + fmt(err) + " (< " + fmt(kGradTol) + ") over " + std::to_string(kGradBatches) +
             " batches, " + std::to_string(combos) + "/16 toggle x window combinations, " + fmt(secs, 3) +
             " s (< " + fmt(kGradSeconds) + " s)");
}

void criterion_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = check_bounds(kBoundTrials, 0);
  const double secs = seconds_since(t0);
  const Index v = r.detail["violations"];
  report(2, v == 0 && r.detail["trials"] == kBoundTrials && secs < kBoundSeconds,
         "loss >= lower bound",
         std::to_string(v) + " violations beyond -1e-9 in " + std::to_string(kBoundTrials) +
             " instances, min(loss - bound) " + fmt(r.detail["min_loss_minus_bound"].get<double>()) +
             ", " + fmt(secs, 3) + " s (< " + fmt(kBoundSeconds) + " s)");
}

void criterion_dm() {
  const auto r = check_dm(kDmTrials, 0);
  const Index trials = r.detail["trials"];
  const Index pos = r.detail["positivity_failures"];
  const Index ratio = r.detail["ratio_failures"];
  const double deriv = r.detail["max_derivative_rel_err"];
  report(3, trials == kDmTrials && pos == 0 && ratio == 0 && deriv < kDmDerivTol,
         "distance-magnifying gradient ratio",
         std::to_string(trials) + " trials, " + std::to_string(pos) + " positivity and " +
             std::to_string(ratio) + " ratio failures, closed form vs perturbation rel err " + fmt(deriv) +
             " (< " + fmt(kDmDerivTol) + ")");
}

void criterion_infimum() {
  const auto r = check_infimum({1, 0.5, 0.2, 0.1, 0.05}, kInfimumScale, 0);
  const auto gaps = r.detail["gaps"].get<std::vector<double>>();
  report(4, r.passed, "gap to the infimum on the ordered construction",
         "gaps " + list(gaps) + " strictly decreasing: " +
             (r.detail["strictly_decreasing"].get<bool>() ? "yes" : "no") + ", final " +
             fmt(gaps.back()) + " < " + fmt(kInfimumScale) + "*|L*| + 0.1 = " +
             fmt(r.detail["threshold"].get<double>()));
}

struct CompareOutcome {
  bool ran = false;
  json report;
  double seconds = 0;
  fs::path dir;
};

CompareOutcome run_compare_cli(const std::string& cli, const fs::path& src, const fs::path& work) {
  CompareOutcome out;
  out.dir = work / "compare";
  fs::create_directories(out.dir);
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run(quote(cli) + " compare --config " + quote(src / "acceptance.toml") +
                       " --out " + quote(out.dir));
  out.seconds = seconds_since(t0);
  if (code != 0 || !fs::exists(out.dir / "compare.json")) return out;
  out.report = read_json(out.dir / "compare.json");
  out.ran = true;
  return out;
}

void criteria_compare(const CompareOutcome& c) {
  if (!c.ran) {
    for (int id : {5, 6, 7, 8}) report(id, false, "helix comparison", "compare command failed");
    return;
  }
  const auto& seeds = c.report["per_seed"];
  std::vector<double> mae_sr, mae_sc, ord_sr, drop_sr, drop_sc, zgap, pos_sr, pos_sc;
  int wins = 0, zpos = 0, saturation = 0;
  bool csvs = true;
  std::vector<std::string> csv_list;
  for (const auto& s : seeds) {
    const auto& arms = s["arms"];
    mae_sr.push_back(arms["supremix"]["test"]["mae"]);
    mae_sc.push_back(arms["supcon"]["test"]["mae"]);
    ord_sr.push_back(arms["supremix"]["ordinality"]);
    drop_sr.push_back(s["permutation"]["supremix"]["drop"]);
    drop_sc.push_back(s["permutation"]["supcon"]["drop"]);
    zgap.push_back(s["z_gap"]["supremix_vs_vanilla"]);
    pos_sr.push_back(arms["supremix"]["final_avg_pos_logit"]);
    pos_sc.push_back(arms["supcon"]["final_avg_pos_logit"]);
    if (mae_sr.back() <= mae_sc.back()) ++wins;
    if (zgap.back() > 0) ++zpos;
    if (pos_sc.back() >= pos_sr.back()) ++saturation;
    for (const char* arm : {"supremix", "supcon"}) {
      const fs::path p = c.dir / arms[arm]["epoch_csv"].get<std::string>();
      csvs = csvs && fs::exists(p);
      csv_list.push_back(p.string());
    }
  }
  const bool five = seeds.size() == kSeeds;
  const double med_ord = median(ord_sr);
  report(5, five && wins >= kMinWins && med_ord >= kMinOrdinality && c.seconds < kCompareSeconds,
         "helix: SupReMix MAE <= SupCon MAE",
         std::to_string(wins) + "/" + std::to_string(seeds.size()) + " seeds (>= " +
             std::to_string(kMinWins) + "), MAE supremix " + list(mae_sr) + " supcon " + list(mae_sc) +
             ", median ordinality " + fmt(med_ord, 3) + " (>= " + fmt(kMinOrdinality) + "), " +
             fmt(c.seconds, 4) + " s (< " + fmt(kCompareSeconds) + " s)");

  const double msr = median(drop_sr), msc = median(drop_sc);
  report(6, five && msr >= kMinDrop && msc < msr, "ordinality drop under label permutation",
         "median drop supremix " + fmt(msr, 3) + " (>= " + fmt(kMinDrop) + "), supcon " + fmt(msc, 3) +
             " (< supremix); per seed supremix " + list(drop_sr) + " supcon " + list(drop_sc));

  // NLFD against the all-pairs oracle.
  int exact = 0;
  for (int inst = 0; inst < kNlfdInstances; ++inst) {
    Rng rng(static_cast<std::uint64_t>(9000 + inst));
    const Index n = 60 + inst, d = 2 + inst % 7;
    Matrix x = testing::gaussian_matrix(rng, n, d);
    if (inst % 5 == 0) x.row(1) = x.row(0);
    std::vector<double> t(static_cast<size_t>(n));
    for (auto& v : t) v = static_cast<double>(uniform_index(rng, 12)) / 11.0;
    const auto r = compute_nlfd(x, t);
    const auto o = testing::brute_nlfd(x, t);
    bool ok = r.neighbor == o.neighbor;
    size_t k = 0;
    for (Index i = 0; i < n && ok; ++i) {
      const double f = o.factor[static_cast<size_t>(i)];
      if (f < 0) continue;
      ok = k < r.factors.size() && r.query[k] == i &&
           std::abs(r.factors[k] - f) <= kNlfdRelTol * f;
      ++k;
    }
    if (ok && k == r.factors.size()) ++exact;
  }
  report(7, five && zpos >= kMinWins && exact == kNlfdInstances, "NLFD z-gap direction",
         "z_gap(supremix, vanilla) > 0 on " + std::to_string(zpos) + "/" + std::to_string(seeds.size()) +
             " seeds (>= " + std::to_string(kMinWins) + ") " + list(zgap) + "; oracle agreement " +
             std::to_string(exact) + "/" + std::to_string(kNlfdInstances) + " instances");

  std::string files;
  for (const auto& f : csv_list) files += "\n        " + f;
  report(8, csvs && saturation == static_cast<int>(seeds.size()), "logit saturation tracking",
         std::string("epoch CSVs ") + (csvs ? "present" : "MISSING") + "; final avg_pos_logit supcon " +
             list(pos_sc) + " vs supremix " + list(pos_sr) + ", supcon >= supremix on " +
             std::to_string(saturation) + "/" + std::to_string(seeds.size()) + " seeds" +
             (saturation == static_cast<int>(seeds.size()) ? "" : files),
         true);
}

void criterion_oracles() {
  // Hand-computable three-sample instance.
  Matrix e(3, 2);
  e << 1, 0, 0, 1, -1, 0;
  const auto batch = LabeledBatch::make(e, {0, 0, 1}, true);
  const auto groups = group_by_label(batch.labels);
  const auto sets = real_contrast_sets(groups);
  LossConfig cfg;
  cfg.tau = 1.0;
  cfg.range = LabelRange{0, 1};
  const double hand = -std::log(1.0 / (1.0 + 2.0 * std::exp(-1.0))) / 2.0 - std::log(1.0 / 3.0) / 2.0;
  const double loss = supremix_loss(batch, sets, cfg).loss;
  const double scalar = testing::scalar_oracle_loss(batch, sets, cfg);
  const double loss_err = std::max(std::abs(loss - hand), std::abs(loss - scalar));

  // Mixture counts against exhaustive enumeration.
  Rng rng(4242);
  int matched = 0;
  for (int c = 0; c < kMixgenConfigs; ++c) {
    const auto n_groups = static_cast<Index>(2 + uniform_index(rng, 7));
    std::vector<Label> labels;
    for (Index g = 0; g < n_groups; ++g) {
      const auto size = 1 + uniform_index(rng, 5);
      for (std::uint64_t s = 0; s < size; ++s) labels.push_back(0.5 * static_cast<double>(g));
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto n = static_cast<Index>(labels.size());
    const auto b = LabeledBatch::make(normalize_embeddings(testing::gaussian_matrix(rng, n, 4)),
                                      labels, true);
    const auto g = group_by_label(b.labels);
    MixPosConfig pos;
    pos.window_mode = c % 2 ? WindowMode::kLabelDistance : WindowMode::kRank;
    pos.gamma = c % 2 ? 0.5 * static_cast<double>(1 + uniform_index(rng, 3))
                      : static_cast<double>(1 + uniform_index(rng, 3));
    pos.max_pos_per_anchor = static_cast<Index>(4 + uniform_index(rng, 40));
    const auto s = build_contrast_sets(b, g, MixNegConfig{}, pos, std::nullopt,
                                       static_cast<std::uint64_t>(c));
    bool ok = true;
    for (Index a = 0; a < n; ++a) {
      const auto& set = s[static_cast<size_t>(a)];
      const Label m = b.labels[static_cast<size_t>(a)];
      const Index r = g.rank_of(a);
      Index negatives = 0, candidates = 0;
      for (Index i = 0; i < n; ++i) {
        if (b.labels[static_cast<size_t>(i)] != m) ++negatives;
        for (Index j = 0; j < n; ++j) {
          const Label li = b.labels[static_cast<size_t>(i)], lj = b.labels[static_cast<size_t>(j)];
          const Index ri = g.rank_of(i), rj = g.rank_of(j);
          const bool window = pos.window_mode == WindowMode::kRank
                                  ? (r - ri <= std::ceil(pos.gamma) && rj - r <= std::ceil(pos.gamma))
                                  : (m - li <= pos.gamma + 1e-12 && lj - m <= pos.gamma + 1e-12);
          if (li < m && lj > m && window) ++candidates;
        }
      }
      const auto mix_neg = static_cast<Index>(set.negative_mix.size()) + set.dropped_mix_neg;
      const auto mix_pos = static_cast<Index>(set.positive_mix.size()) + set.dropped_mix_pos;
      ok = ok && mix_neg == negatives && set.mix_pos_candidates == candidates &&
           mix_pos == std::min(candidates, pos.max_pos_per_anchor);
    }
    if (ok) ++matched;
  }
  report(9, loss_err < kOracleTol && matched == kMixgenConfigs, "oracle equivalence",
         "N=3 loss error " + fmt(loss_err) + " (< " + fmt(kOracleTol) + "); mixture counts match enumeration on " +
             std::to_string(matched) + "/" + std::to_string(kMixgenConfigs) + " configurations");
}

// Recursive comparison ignoring wall-clock fields; returns the largest
// numeric difference, or infinity on a structural mismatch.
double json_diff(const json& a, const json& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
  if (a.type() != b.type()) return kInf;
  if (a.is_object()) {
    if (a.size() != b.size()) return kInf;
    double worst = 0;
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (it.key() == "wall_clock_seconds") continue;
      if (!b.contains(it.key())) return kInf;
      worst = std::max(worst, json_diff(it.value(), b[it.key()]));
    }
    return worst;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return kInf;
    double worst = 0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, json_diff(a[i], b[i]));
    return worst;
  }
  return a == b ? 0.0 : kInf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_determinism(const std::string& cli, const fs::path& src, const fs::path& work) {
  const fs::path root = work / "rerun";
  fs::remove_all(root);
  // Embeddings for the nlfd command.
  fs::create_directories(root);
  {
    Rng rng(17);
    std::ofstream emb(root / "embeddings.csv"), tgt(root / "targets.csv");
    emb.precision(17);
    tgt.precision(17);
    emb << "e0,e1,e2\n";
    tgt << "y\n";
    for (int i = 0; i < 80; ++i) {
      const Matrix row = testing::gaussian_matrix(rng, 1, 3);
      emb << row(0, 0) << ',' << row(0, 1) << ',' << row(0, 2) << '\n';
      tgt << static_cast<double>(uniform_index(rng, 9)) << '\n';
    }
  }
  const std::string config = " --config " + quote(src / "smoke.toml") + " --threads 1";
  struct Step {
    std::string name, args;
  };
  auto steps_for = [&](const fs::path& dir) {
    const fs::path data = dir / "gen-data" / "data.csv";
    return std::vector<Step>{
        {"gen-data", "gen-data" + config},
        {"pretrain", "pretrain" + config},
        {"probe", "probe" + config + " --checkpoint " + quote(dir / "pretrain" / "checkpoint.json")},
        {"train-vanilla", "train-vanilla" + config},
        {"verify", "verify" + config},
        {"compare", "compare" + config},
        {"nlfd", "nlfd --threads 1 --embeddings " + quote(root / "embeddings.csv") + " --targets " +
                     quote(root / "targets.csv")},
        {"permute", "permute" + config + " --data " + quote(data)},
        {"subsample", "subsample" + config + " --n-train 50 --data " + quote(data)},
        {"filter-range", "filter-range" + config + " --exclude 0.25:0.5 --data " + quote(data)},
    };
  };
  int failed_runs = 0;
  for (const char* rep : {"a", "b"}) {
    for (const auto& s : steps_for(root / rep)) {
      const fs::path out = root / rep / s.name;
      if (run(quote(cli) + " " + s.args + " --out " + quote(out)) != 0) ++failed_runs;
    }
  }
  int files = 0, mismatched = 0;
  double worst = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    const fs::path other = root / "b" / rel;
    ++files;
    if (!fs::exists(other)) {
      ++mismatched;
      continue;
    }
    if (entry.path().extension() == ".json") {
      const double d = json_diff(read_json(entry.path()), read_json(other));
      worst = std::max(worst, d);
      if (!(d <= kRerunTol)) ++mismatched;
    } else if (slurp(entry.path()) != slurp(other)) {
      ++mismatched;
    }
  }
  report(10, failed_runs == 0 && mismatched == 0 && files > 0, "rerun determinism",
         "10 commands run twice with --threads 1, " + std::to_string(failed_runs) + " nonzero exits, " +
             std::to_string(files) + " output files compared, " + std::to_string(mismatched) +
             " differ (JSON max diff " + fmt(worst) + ", tol " + fmt(kRerunTol) +
             "; CSV byte-identical; wall_clock_seconds ignored)");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: test_acceptance <supremix binary> <tests dir> <work dir>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path src = argv[2], work = argv[3];
  fs::create_directories(work);
  ::unsetenv("SUPREMIX_SEED");

  criterion_gradients();
  criterion_bound();
  criterion_dm();
  criterion_infimum();
  criteria_compare(run_compare_cli(cli, src, work));
  criterion_oracles();
  criterion_determinism(cli, src, work);

  const std::string verdict = failures == 0 ? "acceptance: all criteria met"
                                             : "acceptance: " + std::to_string(failures) + " criteria failed";
  std::cout << verdict << std::endl;
  transcript << verdict << '\n';
  std::ofstream(work / "acceptance.txt") << transcript.str();
  return failures == 0 ? 0 : 1;
}
