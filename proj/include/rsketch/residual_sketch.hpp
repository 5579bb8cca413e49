#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "block_common.hpp"
#include "coco_block.hpp"
#include "hhh.hpp"
#include "hierarchy.hpp"
#include "uss_block.hpp"

namespace rsketch {

struct LevelSpec {
  unsigned layer = 0;        // pivotal layer this level stores keys at
  Value threshold = 0;       // residual threshold; 0 disables locking at this level
  BlockConfig block;
};

struct LevelPlan {
  Granularity granularity = Granularity::ipv4_bits();
  std::vector<LevelSpec> levels;
  bool residual_connection = true;

  void validate() const {
    granularity.validate();
    const unsigned d = granularity.depth();
    if (levels.empty()) throw std::invalid_argument("a plan needs at least one level");
    if (levels.size() > d) throw std::invalid_argument("a plan may have at most d levels");
    if (levels.front().layer != 0) throw std::invalid_argument("the first level must sit at layer 0");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      levels[i].block.validate();
      if (levels[i].layer > d) throw std::invalid_argument("level layer exceeds depth");
      if (i > 0 && levels[i].layer <= levels[i - 1].layer)
        throw std::invalid_argument("level layers must be strictly increasing");
    }
  }

  // First layer past the range owned by level i.
  unsigned range_end(std::size_t i) const {
    return i + 1 < levels.size() ? levels[i + 1].layer : granularity.depth() + 1;
  }
};

// Multi-level sketch for hierarchical heavy hitters. Level i stores keys
// generalized to layer l_i in its own residual block. A key whose count at
// level i crosses that level's threshold is locked there, its forwarded mass is
// withdrawn from every level above, and its later packets stop at level i.
// The top level has nothing above it and never locks.
template <ResidualBlockLike Block>
class ResidualSketch {
 public:
  using LockObserver = std::function<void(std::size_t level, const FlowKey&, Value count)>;

  explicit ResidualSketch(LevelPlan plan) : plan_(std::move(plan)), hier_(plan_.granularity) {
    plan_.validate();
    blocks_.reserve(plan_.levels.size());
    for (const LevelSpec& lv : plan_.levels) blocks_.emplace_back(lv.block, lv.layer);
  }

  void insert(const FlowKey& full_key, Value v) {
    if (full_key.layer != 0) throw std::invalid_argument("insert expects a fully specified key");
    if (v == 0) throw std::invalid_argument("insert value must be >= 1");
    insert_bits(full_key.bits, v);
  }

  // Hot path. `bits` must already fit the hierarchy width.
  void insert_bits(std::uint32_t bits, Value v) {
    ++packets_;
    value_seen_ += v;
    Value pending = 0;
    const std::size_t L = blocks_.size();
    for (std::size_t i = 0; i < L; ++i) {
      const FlowKey k = hier_.generalize_unchecked(bits, plan_.levels[i].layer);
      const UpdateOutcome out = blocks_[i].update(k, v, pending);
      // The top level forwards nowhere, so it never locks.
      if (!plan_.residual_connection || !out.matched || i + 1 == L) continue;
      if (out.locked) break;
      const Value theta_i = plan_.levels[i].threshold;
      if (theta_i != 0 && out.count_before < theta_i && out.count_after >= theta_i) {
        blocks_[i].lock(k);
        if (observer_) observer_(i, k, out.count_after);
        pending += out.count_after;
      }
    }
  }

  // End-of-window HHH extraction; returns HHH_d sorted by (layer, key).
  std::vector<HHHEntry> extract_hhh(double theta) const {
    if (value_seen_ == 0) throw std::logic_error("extract_hhh called on an empty window");
    if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("theta must lie in (0, 1)");
    const HeavyThreshold thr{theta, value_seen_};
    std::vector<HHHEntry> hhh;
    CountMap restore;
    CountMap discount;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::vector<BucketEntry> drained = blocks_[i].drain();
      const bool has_next = i + 1 < blocks_.size();
      CountMap next_restore;
      if (has_next) {
        const std::uint32_t up = hier_.mask(plan_.levels[i + 1].layer);
        for (const auto& [bits, r] : restore) next_restore[bits & up] += r;
        for (const BucketEntry& e : drained)
          if (e.locked) next_restore[e.key.bits & up] += e.value;
      }
      CountMap working = std::move(restore);
      for (const BucketEntry& e : drained) working[e.key.bits] += e.value;
      aggregate_layers(hier_, std::move(working), plan_.levels[i].layer, plan_.range_end(i), thr,
                       discount, hhh);
      restore = std::move(next_restore);
    }
    sort_report(hhh);
    return hhh;
  }

  // Point query for a key stored at one of the pivotal layers.
  Value estimate(const FlowKey& key) const {
    for (const Block& b : blocks_)
      if (b.layer() == key.layer) return b.estimate(key);
    return 0;
  }

  void reset_window() {
    for (Block& b : blocks_) b.clear();
    packets_ = 0;
    value_seen_ = 0;
  }

  void set_lock_observer(LockObserver obs) { observer_ = std::move(obs); }

  const LevelPlan& plan() const { return plan_; }
  const Hierarchy& hierarchy() const { return hier_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::uint64_t packets_seen() const { return packets_; }
  Value value_seen() const { return value_seen_; }

  std::uint64_t block_updates() const {
    std::uint64_t n = 0;
    for (const Block& b : blocks_) n += b.stats().updates;
    return n;
  }

 private:
  LevelPlan plan_;
  Hierarchy hier_;
  std::vector<Block> blocks_;
  std::uint64_t packets_ = 0;
  Value value_seen_ = 0;
  LockObserver observer_;
};

// HHH extraction for a single stand-alone block (no residual levels above it):
// the block's counts at its layer run through the bottom-up aggregation to the
// root. Equivalent to a one-level ResidualSketch.
template <ResidualBlockLike Block>
std::vector<HHHEntry> extract_from_block(const Hierarchy& h, const Block& block, double theta,
                                         Value total) {
  const HeavyThreshold thr{theta, total};
  CountMap counts;
  for (const BucketEntry& e : block.drain()) counts[e.key.bits] += e.value;
  CountMap discount;
  std::vector<HHHEntry> hhh;
  aggregate_layers(h, std::move(counts), block.layer(), h.depth() + 1, thr, discount, hhh);
  sort_report(hhh);
  return hhh;
}

// Debug dump of a drained block, one JSON object per line.
inline void write_drained_jsonl(std::ostream& os, const Hierarchy& h,
                                const std::vector<BucketEntry>& drained) {
  for (const BucketEntry& e : drained)
    os << "{\"key\":\"" << Hierarchy::format_ipv4(e.key.bits) << "\",\"prefix_len\":"
       << h.prefix_length(e.key) << ",\"value\":" << e.value
       << ",\"locked\":" << (e.locked ? "true" : "false") << "}\n";
}

}  // namespace rsketch
