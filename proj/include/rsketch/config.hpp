#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "residual_sketch.hpp"

namespace rsketch {

// Declarative sketch configuration. Levels are given by prefix length; each
// level's residual threshold is either absolute or beta * theta * expected_window.
struct SketchConfig {
  struct Level {
    unsigned prefix_len = 32;
    std::optional<Value> threshold;
  };

  Granularity granularity = Granularity::ipv4_bits();
  double memory_kb = 256;
  std::vector<Level> levels{{32, {}}, {12, {}}};
  BlockKind kind = BlockKind::coco;
  std::uint32_t g = 2;
  std::uint64_t seed = 1;
  double beta = 0.8;
  Value expected_window = 0;  // 0: the caller supplies the window size
  bool residual_connection = true;

  static std::vector<Level> levels_from_prefixes(const std::vector<unsigned>& prefixes) {
    std::vector<Level> out;
    for (unsigned p : prefixes) out.push_back({p, {}});
    return out;
  }
};

inline std::size_t bucket_bytes(BlockKind kind) {
  return kind == BlockKind::coco ? CocoBlock::bucket_bytes() : UssBlock::bucket_bytes();
}

// Equal memory per level; level thresholds resolved against theta.
inline LevelPlan make_plan(const SketchConfig& cfg, double theta, Value window = 0) {
  cfg.granularity.validate();
  if (cfg.levels.empty()) throw std::invalid_argument("sketch config has no levels");
  if (!(cfg.memory_kb > 0)) throw std::invalid_argument("memory_kb must be positive");
  const std::uint32_t g = cfg.kind == BlockKind::uss ? 1 : cfg.g;
  if (cfg.kind == BlockKind::uss && cfg.g != 1)
    throw std::invalid_argument("a uss block must have g == 1");
  const Value n_hat = cfg.expected_window ? cfg.expected_window : window;

  std::vector<SketchConfig::Level> levels = cfg.levels;
  std::sort(levels.begin(), levels.end(),
            [](const auto& a, const auto& b) { return a.prefix_len > b.prefix_len; });

  LevelPlan plan;
  plan.granularity = cfg.granularity;
  plan.residual_connection = cfg.residual_connection;
  const double level_bytes = cfg.memory_kb * 1024.0 / static_cast<double>(levels.size());
  const auto b = static_cast<std::uint32_t>(
      std::max(1.0, std::floor(level_bytes / static_cast<double>(g * bucket_bytes(cfg.kind)))));
  for (std::size_t i = 0; i < levels.size(); ++i) {
    LevelSpec lv;
    lv.layer = cfg.granularity.layer_for_prefix(levels[i].prefix_len);
    if (levels[i].threshold) {
      lv.threshold = *levels[i].threshold;
    } else {
      if (n_hat == 0) throw std::invalid_argument("level threshold needs expected_window or a window size");
      lv.threshold = std::max<Value>(
          1, static_cast<Value>(std::llround(cfg.beta * theta * static_cast<double>(n_hat))));
    }
    lv.block = BlockConfig{g, b, cfg.seed * 1000003ULL + i, cfg.kind};
    plan.levels.push_back(lv);
  }
  plan.validate();
  return plan;
}

using AnySketch = std::variant<ResidualSketch<CocoBlock>, ResidualSketch<UssBlock>>;

inline AnySketch make_sketch(const LevelPlan& plan) {
  const BlockKind kind = plan.levels.at(0).block.kind;
  for (const LevelSpec& lv : plan.levels)
    if (lv.block.kind != kind) throw std::invalid_argument("all levels must use the same block kind");
  if (kind == BlockKind::coco) return AnySketch{std::in_place_index<0>, plan};
  return AnySketch{std::in_place_index<1>, plan};
}

// ---- JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const SketchConfig& c) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& lv : c.levels) {
    nlohmann::json j{{"prefix_len", lv.prefix_len}};
    if (lv.threshold) j["threshold"] = *lv.threshold;
    levels.push_back(j);
  }
  return {{"granularity", c.granularity.kind == GranularityKind::bit ? "bit" : "byte"},
          {"width_bits", c.granularity.width_bits},
          {"memory_kb", c.memory_kb},
          {"levels", levels},
          {"block", to_string(c.kind)},
          {"g", c.g},
          {"seed", c.seed},
          {"beta", c.beta},
          {"expected_window", c.expected_window},
          {"residual_connection", c.residual_connection}};
}

// Fields absent from `j` keep the values already in `c`.
inline void merge_json(const nlohmann::json& j, SketchConfig& c) {
  if (j.contains("granularity")) {
    const std::string g = j.at("granularity");
    if (g == "bit") c.granularity.kind = GranularityKind::bit;
    else if (g == "byte") c.granularity.kind = GranularityKind::byte;
    else throw std::invalid_argument("granularity must be 'bit' or 'byte'");
  }
  if (j.contains("width_bits")) c.granularity.width_bits = j.at("width_bits");
  if (j.contains("memory_kb")) c.memory_kb = j.at("memory_kb");
  if (j.contains("levels")) {
    c.levels.clear();
    for (const auto& lv : j.at("levels")) {
      SketchConfig::Level l;
      if (lv.is_number()) {
        l.prefix_len = lv;
      } else {
        l.prefix_len = lv.at("prefix_len");
        if (lv.contains("threshold")) l.threshold = lv.at("threshold").get<Value>();
      }
      c.levels.push_back(l);
    }
  }
  if (j.contains("block")) c.kind = block_kind_from_string(j.at("block"));
  if (j.contains("g")) c.g = j.at("g");
  if (j.contains("seed")) c.seed = j.at("seed");
  if (j.contains("beta")) c.beta = j.at("beta");
  if (j.contains("expected_window")) c.expected_window = j.at("expected_window");
  if (j.contains("residual_connection")) c.residual_connection = j.at("residual_connection");
}

}  // namespace rsketch
