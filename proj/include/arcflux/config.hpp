#pragma once

// Run configuration: one JSON document with sections data, split, model,
// train, bench, paths and sweep. Every field has a default; a file only needs
// the keys it changes, and any key not in the defaults is rejected by name.

#include "arcflux/bench.hpp"
#include "arcflux/common.hpp"
#include "arcflux/data.hpp"
#include "arcflux/model.hpp"
#include "arcflux/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace arcflux::training {

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
  j = nlohmann::ordered_json{{"epochs", c.epochs},
                             {"batch_size", c.batch_size},
                             {"lr", c.lr},
                             {"adam_beta1", c.adam_beta1},
                             {"adam_beta2", c.adam_beta2},
                             {"adam_eps", c.adam_eps},
                             {"seed", c.seed},
                             {"lr_schedule", to_string(c.lr_schedule)},
                             {"lr_final_ratio", c.lr_final_ratio},
                             {"clip_norm", c.clip_norm},
                             {"target_val_acc", c.target_val_acc},
                             {"max_seconds", c.max_seconds}};
}

inline void from_json(const nlohmann::ordered_json& j, TrainConfig& c) {
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lr_schedule = schedule_from_string(j.at("lr_schedule").get<std::string>());
  c.lr_final_ratio = j.at("lr_final_ratio").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.target_val_acc = j.at("target_val_acc").get<double>();
  c.max_seconds = j.at("max_seconds").get<double>();
}

}  // namespace arcflux::training

namespace arcflux::config {

struct SplitConfig {
  double ratio_train = 0.7;
  std::uint64_t seed = 0;
};

struct Paths {
  std::string dataset = "runs/dataset";
  std::string checkpoint = "runs/model.ckpt";
  std::string report_dir = "runs/report";
};

struct SweepConfig {
  std::vector<std::size_t> k{128, 256, 512};
  std::vector<std::size_t> blocks{2, 4, 8, 16};
  std::vector<std::string> heads{"linear-last", "linear-dropout", "mlp", "mean-pool-linear"};
  std::string out_dir = "runs/sweep";
  std::size_t bench_iters = 200;
  std::size_t bench_warmup = 20;
};

struct RunConfig {
  data::GenConfig data;
  SplitConfig split;
  model::ModelConfig model;
  training::TrainConfig train;
  bench::BenchConfig bench;
  Paths paths;
  SweepConfig sweep;

  // Overrides every seed in the document.
  void set_seed(std::uint64_t s) {
    data.seed = s;
    split.seed = s;
    train.seed = s;
    bench.seed = s;
  }

  void validate() const {
    data.validate();
    if (!(split.ratio_train > 0.0 && split.ratio_train < 1.0)) throw ConfigError("split.ratio_train must lie in (0, 1)");
    model.validate();
    train.validate();
    if (bench.iters < 1) throw ConfigError("bench.iters must be >= 1");
    if (sweep.bench_iters < 1) throw ConfigError("sweep.bench_iters must be >= 1");
    for (const auto& h : sweep.heads) model::head_from_string(h);
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = c.data;
  j["split"] = {{"ratio_train", c.split.ratio_train}, {"seed", c.split.seed}};
  j["model"] = c.model;
  j["train"] = c.train;
  j["bench"] = {{"iters", c.bench.iters},
                {"warmup", c.bench.warmup},
                {"width", bench::to_string(c.bench.width)},
                {"seed", c.bench.seed}};
  j["paths"] = {{"dataset", c.paths.dataset}, {"checkpoint", c.paths.checkpoint}, {"report_dir", c.paths.report_dir}};
  j["sweep"] = {{"k", c.sweep.k},
                {"blocks", c.sweep.blocks},
                {"heads", c.sweep.heads},
                {"out_dir", c.sweep.out_dir},
                {"bench_iters", c.sweep.bench_iters},
                {"bench_warmup", c.sweep.bench_warmup}};
  return j;
}

namespace detail {

inline bool compatible(const nlohmann::ordered_json& base, const nlohmann::ordered_json& v) {
  if (base.is_boolean()) return v.is_boolean();
  if (base.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (base.is_number()) return v.is_number();
  if (base.is_string()) return v.is_string();
  if (base.is_array()) {
    if (!v.is_array()) return false;
    if (base.empty()) return true;
    for (const auto& e : v)
      if (!compatible(base.front(), e)) return false;
    return true;
  }
  return false;
}

inline void overlay(nlohmann::ordered_json& base, const nlohmann::ordered_json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + name + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, name);
    } else {
      if (!compatible(slot, value))
        throw ConfigError("config: key '" + name + "' expects a value like " + slot.dump() + ", got " + value.dump());
      slot = value;
    }
  }
}

}  // namespace detail

inline RunConfig from_json(const nlohmann::ordered_json& j) {
  RunConfig c;
  try {
    c.data = j.at("data").get<data::GenConfig>();
    c.split.ratio_train = j.at("split").at("ratio_train").get<double>();
    c.split.seed = j.at("split").at("seed").get<std::uint64_t>();
    c.model = j.at("model").get<model::ModelConfig>();
    c.train = j.at("train").get<training::TrainConfig>();
    const auto& b = j.at("bench");
    c.bench.iters = b.at("iters").get<std::size_t>();
    c.bench.warmup = b.at("warmup").get<std::size_t>();
    c.bench.width = bench::width_from_string(b.at("width").get<std::string>());
    c.bench.seed = b.at("seed").get<std::uint64_t>();
    const auto& p = j.at("paths");
    c.paths.dataset = p.at("dataset").get<std::string>();
    c.paths.checkpoint = p.at("checkpoint").get<std::string>();
    c.paths.report_dir = p.at("report_dir").get<std::string>();
    const auto& s = j.at("sweep");
    c.sweep.k = s.at("k").get<std::vector<std::size_t>>();
    c.sweep.blocks = s.at("blocks").get<std::vector<std::size_t>>();
    c.sweep.heads = s.at("heads").get<std::vector<std::string>>();
    c.sweep.out_dir = s.at("out_dir").get<std::string>();
    c.sweep.bench_iters = s.at("bench_iters").get<std::size_t>();
    c.sweep.bench_warmup = s.at("bench_warmup").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.bench.window_len = c.data.window_len;
  return c;
}

/// Applies `user` on top of `base`; unknown keys and mistyped values throw
/// ConfigError naming the key.
inline RunConfig merge(const RunConfig& base, const nlohmann::ordered_json& user) {
  auto j = to_json(base);
  detail::overlay(j, user, "");
  return from_json(j);
}

/// Applies one dotted override such as "train.lr=3e-4". The value is read as
/// JSON when it parses, otherwise as a string.
inline RunConfig apply_override(const RunConfig& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("config: override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::ordered_json value = nlohmann::ordered_json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::ordered_json doc = value;
  std::string rest = path;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) doc = nlohmann::ordered_json{{*it, doc}};
  return merge(base, doc);
}

inline RunConfig parse(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto c = merge(RunConfig{}, j);
  return c;
}

inline RunConfig load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse(text);
}

}  // namespace arcflux::config
