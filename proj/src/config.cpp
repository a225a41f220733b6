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

#include "supremix/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "supremix/error.hpp"

namespace supremix {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Raw value with any '#' comment outside quotes removed.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

template <typename T>
T parse_number(const std::string& raw) {
  T v{};
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || ptr != raw.data() + raw.size() || raw.empty()) {
    throw ParseError("expected a number, got '" + raw + "'");
  }
  return v;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string parse_string(const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    return raw.substr(1, raw.size() - 2);
  }
  if (raw.find_first_of("\"[]=") != std::string::npos) {
    throw ParseError("malformed string '" + raw + "'");
  }
  return raw;
}

bool parse_bool(const std::string& raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ParseError("expected true or false, got '" + raw + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    throw ParseError("expected a [list], got '" + raw + "'");
  }
  std::vector<T> out;
  std::istringstream in(raw.substr(1, raw.size() - 2));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number<T>(item));
  }
  return out;
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
  return s + "]";
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  // Empty optional: the field is left out of the text form.
  std::function<std::optional<std::string>(const RunConfig&)> get;
};

template <typename M>
Field index_field(const char* s, const char* k, M member) {
  return {s, k, [member](RunConfig& c, const std::string& r) { member(c) = parse_number<Index>(r); },
          [member](const RunConfig& c) {
            return std::optional(format_number(member(const_cast<RunConfig&>(c))));
          }};
}

template <typename M>
Field double_field(const char* s, const char* k, M member) {
  return {s, k, [member](RunConfig& c, const std::string& r) { member(c) = parse_number<double>(r); },
          [member](const RunConfig& c) {
            return std::optional(format_number(member(const_cast<RunConfig&>(c))));
          }};
}

template <typename M>
Field bool_field(const char* s, const char* k, M member) {
  return {s, k, [member](RunConfig& c, const std::string& r) { member(c) = parse_bool(r); },
          [member](const RunConfig& c) {
            return std::optional<std::string>(member(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename M>
Field string_field(const char* s, const char* k, M member) {
  return {s, k, [member](RunConfig& c, const std::string& r) { member(c) = parse_string(r); },
          [member](const RunConfig& c) {
            return std::optional("\"" + member(const_cast<RunConfig&>(c)) + "\"");
          }};
}

template <typename M>
Field seed_field(const char* s, const char* k, M member) {
  return {s, k,
          [member](RunConfig& c, const std::string& r) {
            member(c) = parse_number<std::uint64_t>(r);
          },
          [member](const RunConfig& c) -> std::optional<std::string> {
            const auto& v = member(const_cast<RunConfig&>(c));
            if (!v) return std::nullopt;
            return format_number(*v);
          }};
}

template <typename T, typename M>
Field list_field(const char* s, const char* k, M member) {
  return {s, k, [member](RunConfig& c, const std::string& r) { member(c) = parse_list<T>(r); },
          [member](const RunConfig& c) {
            return std::optional(format_list(member(const_cast<RunConfig&>(c))));
          }};
}

#define SUPREMIX_MEMBER(path) [](RunConfig& c) -> auto& { return c.path; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      string_field("data", "kind", SUPREMIX_MEMBER(data.kind)),
      index_field("data", "n", SUPREMIX_MEMBER(data.n)),
      index_field("data", "dim", SUPREMIX_MEMBER(data.dim)),
      double_field("data", "noise", SUPREMIX_MEMBER(data.noise)),
      index_field("data", "label_grid", SUPREMIX_MEMBER(data.label_grid)),
      seed_field("data", "seed", SUPREMIX_MEMBER(data.seed)),
      string_field("data", "csv_path", SUPREMIX_MEMBER(data.csv_path)),
      string_field("data", "label_column", SUPREMIX_MEMBER(data.label_column)),
      string_field("data", "group_column", SUPREMIX_MEMBER(data.group_column)),
      double_field("mix", "alpha", SUPREMIX_MEMBER(mix.alpha)),
      double_field("mix", "beta", SUPREMIX_MEMBER(mix.beta)),
      double_field("mix", "gamma", SUPREMIX_MEMBER(mix.gamma)),
      string_field("mix", "window_mode", SUPREMIX_MEMBER(mix.window_mode)),
      index_field("mix", "max_pos_per_anchor", SUPREMIX_MEMBER(mix.max_pos_per_anchor)),
      bool_field("mix", "use_group_constraint", SUPREMIX_MEMBER(mix.use_group_constraint)),
      double_field("loss", "tau", SUPREMIX_MEMBER(loss.tau)),
      bool_field("loss", "use_dm", SUPREMIX_MEMBER(loss.use_dm)),
      bool_field("loss", "use_mix_neg", SUPREMIX_MEMBER(loss.use_mix_neg)),
      bool_field("loss", "use_mix_pos", SUPREMIX_MEMBER(loss.use_mix_pos)),
      double_field("loss", "quant_bin_width", SUPREMIX_MEMBER(loss.quant_bin_width)),
      index_field("train", "pretrain_epochs", SUPREMIX_MEMBER(train.pretrain_epochs)),
      index_field("train", "probe_epochs", SUPREMIX_MEMBER(train.probe_epochs)),
      index_field("train", "batch_size", SUPREMIX_MEMBER(train.batch_size)),
      double_field("train", "lr", SUPREMIX_MEMBER(train.lr)),
      double_field("train", "probe_lr", SUPREMIX_MEMBER(train.probe_lr)),
      double_field("train", "weight_decay", SUPREMIX_MEMBER(train.weight_decay)),
      double_field("train", "clip_norm", SUPREMIX_MEMBER(train.clip_norm)),
      index_field("train", "warmup_epochs", SUPREMIX_MEMBER(train.warmup_epochs)),
      double_field("train", "min_lr", SUPREMIX_MEMBER(train.min_lr)),
      seed_field("train", "seed", SUPREMIX_MEMBER(train.seed)),
      list_field<Index>("encoder", "hidden_dims", SUPREMIX_MEMBER(encoder.hidden_dims)),
      index_field("encoder", "embed_dim", SUPREMIX_MEMBER(encoder.embed_dim)),
      index_field("verify", "fd_batches", SUPREMIX_MEMBER(verify.fd_batches)),
      index_field("verify", "bound_trials", SUPREMIX_MEMBER(verify.bound_trials)),
      index_field("verify", "dm_trials", SUPREMIX_MEMBER(verify.dm_trials)),
      list_field<double>("verify", "taus", SUPREMIX_MEMBER(verify.taus)),
      double_field("verify", "infimum_gap_scale", SUPREMIX_MEMBER(verify.infimum_gap_scale)),
      list_field<std::uint64_t>("compare", "seeds", SUPREMIX_MEMBER(compare.seeds)),
      bool_field("compare", "permute", SUPREMIX_MEMBER(compare.permute)),
      index_field("compare", "bootstrap", SUPREMIX_MEMBER(compare.bootstrap)),
  };
  return table;
}

#undef SUPREMIX_MEMBER

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError(where + "unterminated section header");
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) {
      return section == f.section && key == f.key;
    });
    if (it == table.end()) {
      throw ParseError(where + "unknown key '" + (section.empty() ? key : section + "." + key) + "'");
    }
    if (!seen.insert(section + "." + key).second) {
      throw ParseError(where + "duplicate key '" + section + "." + key + "'");
    }
    try {
      it->set(config, value);
    } catch (const ParseError& e) {
      throw ParseError(where + section + "." + key + ": " + e.what());
    }
  }
  validate_config(config);
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_text(const RunConfig& config) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    if (const auto v = f.get(config)) out += std::string(f.key) + " = " + *v + "\n";
  }
  return out;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  using json = nlohmann::ordered_json;
  auto seed = [](const std::optional<std::uint64_t>& s) { return s ? json(*s) : json(nullptr); };
  json j;
  j["data"] = {{"kind", c.data.kind},           {"n", c.data.n},
               {"dim", c.data.dim},             {"noise", c.data.noise},
               {"label_grid", c.data.label_grid}, {"seed", seed(c.data.seed)},
               {"csv_path", c.data.csv_path},   {"label_column", c.data.label_column},
               {"group_column", c.data.group_column}};
  j["mix"] = {{"alpha", c.mix.alpha},
              {"beta", c.mix.beta},
              {"gamma", c.mix.gamma},
              {"window_mode", c.mix.window_mode},
              {"max_pos_per_anchor", c.mix.max_pos_per_anchor},
              {"use_group_constraint", c.mix.use_group_constraint}};
  j["loss"] = {{"tau", c.loss.tau},
               {"use_dm", c.loss.use_dm},
               {"use_mix_neg", c.loss.use_mix_neg},
               {"use_mix_pos", c.loss.use_mix_pos},
               {"quant_bin_width", c.loss.quant_bin_width}};
  j["train"] = {{"pretrain_epochs", c.train.pretrain_epochs},
                {"probe_epochs", c.train.probe_epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"probe_lr", c.train.probe_lr},
                {"weight_decay", c.train.weight_decay},
                {"clip_norm", c.train.clip_norm},
                {"warmup_epochs", c.train.warmup_epochs},
                {"min_lr", c.train.min_lr},
                {"seed", seed(c.train.seed)}};
  j["encoder"] = {{"hidden_dims", c.encoder.hidden_dims}, {"embed_dim", c.encoder.embed_dim}};
  j["verify"] = {{"fd_batches", c.verify.fd_batches},
                 {"bound_trials", c.verify.bound_trials},
                 {"dm_trials", c.verify.dm_trials},
                 {"taus", c.verify.taus},
                 {"infimum_gap_scale", c.verify.infimum_gap_scale}};
  j["compare"] = {{"seeds", c.compare.seeds},
                  {"permute", c.compare.permute},
                  {"bootstrap", c.compare.bootstrap}};
  return j;
}

void validate_config(const RunConfig& c) {
  std::vector<std::string> bad;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  if (c.data.csv_path.empty()) {
    require(c.data.kind == "helix" || c.data.kind == "smooth_random",
            "data.kind: must be helix or smooth_random");
    require(c.data.n >= 10, "data.n: must be >= 10");
    require(c.data.dim >= 3, "data.dim: must be >= 3");
    require(c.data.noise >= 0.0, "data.noise: must be >= 0");
    require(c.data.label_grid >= 2, "data.label_grid: must be >= 2");
  }
  require(!c.data.label_column.empty(), "data.label_column: must not be empty");
  require(c.mix.alpha > 0.0, "mix.alpha: must be > 0");
  require(c.mix.beta > 0.0, "mix.beta: must be > 0");
  require(c.mix.gamma > 0.0, "mix.gamma: must be > 0");
  require(c.mix.window_mode == "rank" || c.mix.window_mode == "distance",
          "mix.window_mode: must be rank or distance");
  require(c.mix.max_pos_per_anchor >= 1, "mix.max_pos_per_anchor: must be >= 1");
  require(!c.mix.use_group_constraint || !c.data.group_column.empty(),
          "mix.use_group_constraint: requires data.group_column");
  require(c.loss.tau > 0.0, "loss.tau: must be > 0");
  require(c.loss.quant_bin_width >= 0.0, "loss.quant_bin_width: must be >= 0");
  require(c.train.pretrain_epochs >= 1, "train.pretrain_epochs: must be >= 1");
  require(c.train.probe_epochs >= 1, "train.probe_epochs: must be >= 1");
  require(c.train.batch_size >= 2, "train.batch_size: must be >= 2");
  require(c.train.lr > 0.0, "train.lr: must be > 0");
  require(c.train.probe_lr > 0.0, "train.probe_lr: must be > 0");
  require(c.train.weight_decay >= 0.0, "train.weight_decay: must be >= 0");
  require(c.train.clip_norm > 0.0, "train.clip_norm: must be > 0");
  require(c.train.warmup_epochs >= 0 && c.train.warmup_epochs < c.train.pretrain_epochs,
          "train.warmup_epochs: must lie in [0, pretrain_epochs)");
  require(c.train.min_lr >= 0.0 && c.train.min_lr <= c.train.lr,
          "train.min_lr: must lie in [0, lr]");
  for (Index h : c.encoder.hidden_dims) require(h >= 1, "encoder.hidden_dims: entries must be >= 1");
  require(c.encoder.embed_dim >= 2, "encoder.embed_dim: must be >= 2");
  require(c.verify.fd_batches >= 1, "verify.fd_batches: must be >= 1");
  require(c.verify.bound_trials >= 1, "verify.bound_trials: must be >= 1");
  require(c.verify.dm_trials >= 1, "verify.dm_trials: must be >= 1");
  bool taus_ok = !c.verify.taus.empty();
  for (size_t i = 0; i < c.verify.taus.size(); ++i) {
    taus_ok = taus_ok && c.verify.taus[i] > 0.0 &&
              (i == 0 || c.verify.taus[i] < c.verify.taus[i - 1]);
  }
  require(taus_ok, "verify.taus: must be positive and strictly decreasing");
  require(c.verify.infimum_gap_scale > 0.0, "verify.infimum_gap_scale: must be > 0");
  require(!c.compare.seeds.empty(), "compare.seeds: must not be empty");
  require(c.compare.bootstrap >= 2, "compare.bootstrap: must be >= 2");
  if (!bad.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ValidationError(msg);
  }
}

void resolve_seeds(RunConfig& config, std::optional<std::uint64_t> flag_seed) {
  if (flag_seed) {
    config.data.seed = flag_seed;
    config.train.seed = flag_seed;
    return;
  }
  if (config.data.seed && config.train.seed) return;
  std::uint64_t fallback = 0;
  if (const char* env = std::getenv("SUPREMIX_SEED"); env && *env) {
    try {
      fallback = parse_number<std::uint64_t>(env);
    } catch (const ParseError&) {
      throw ValidationError(std::string("SUPREMIX_SEED: not an unsigned integer: ") + env);
    }
  }
  if (!config.data.seed) config.data.seed = fallback;
  if (!config.train.seed) config.train.seed = fallback;
}

}  // namespace supremix
