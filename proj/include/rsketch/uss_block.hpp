#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "block_common.hpp"

namespace rsketch {

// Unbiased Space Saving block: a stream summary of at most b entries. The
// summary is a hash map from key to slot plus an indexed min-heap over the
// unlocked slots, so the Case-3 victim (global minimum unlocked entry) is found
// in O(1) and repositioned in O(log b).
class UssBlock {
 public:
  struct Entry {
    std::uint32_t key = 0;
    bool locked = false;
    Value value = 0;
    std::uint32_t heap_pos = kNotInHeap;
  };

  // Approximate per-entry footprint of the summary (entry, index map node, heap
  // slot), used for memory budgeting.
  static constexpr std::size_t bucket_bytes() { return 40; }

  UssBlock(const BlockConfig& cfg, unsigned layer) : cfg_(cfg), layer_(layer), rng_(cfg.seed) {
    cfg_.validate();
    if (cfg_.kind != BlockKind::uss) throw std::invalid_argument("UssBlock requires kind uss");
    entries_.reserve(cfg_.b);
    heap_.reserve(cfg_.b);
    index_.reserve(cfg_.b);
  }

  UpdateOutcome update(const FlowKey& key, Value v, Value decrement_amount) {
    check_layer(key);
    ++stats_.updates;
    if (auto it = index_.find(key.bits); it != index_.end()) {
      const std::uint32_t s = it->second;
      Entry& e = entries_[s];
      const Value before = e.value;
      const bool was_locked = e.locked;
      e.value += v;
      e.value = e.value > decrement_amount ? e.value - decrement_amount : 0;
      const Value after = e.value;
      if (after == 0 && !e.locked) {
        remove(s);
      } else if (!e.locked) {
        heap_fix(e.heap_pos);
      }
      return {after, true, before, was_locked};
    }
    if (index_.size() < cfg_.b) {
      insert_new(key.bits, v);
      return {v, true, 0, false};
    }
    if (heap_.empty()) {
      ++stats_.dropped;
      stats_.dropped_value += v;
      return {};
    }
    ++stats_.replacements_tried;
    const std::uint32_t s = heap_.front();
    Entry& victim = entries_[s];
    victim.value += v;
    heap_down(0);
    if (unit_uniform(rng_) * static_cast<double>(victim.value) < static_cast<double>(v)) {
      index_.erase(victim.key);
      victim.key = key.bits;
      index_.emplace(key.bits, s);
      ++stats_.replacements_won;
    }
    return {};
  }

  bool decrement(const FlowKey& key, Value amount) {
    if (key.layer != layer_) return false;
    auto it = index_.find(key.bits);
    if (it == index_.end()) return false;
    const std::uint32_t s = it->second;
    Entry& e = entries_[s];
    e.value = e.value > amount ? e.value - amount : 0;
    if (e.value == 0 && !e.locked)
      remove(s);
    else if (!e.locked)
      heap_fix(e.heap_pos);
    return true;
  }

  bool lock(const FlowKey& key) {
    if (key.layer != layer_) return false;
    auto it = index_.find(key.bits);
    if (it == index_.end()) return false;
    Entry& e = entries_[it->second];
    if (!e.locked) {
      heap_erase(e.heap_pos);
      e.locked = true;
    }
    return true;
  }

  Value estimate(const FlowKey& key) const {
    if (key.layer != layer_) return 0;
    auto it = index_.find(key.bits);
    return it == index_.end() ? 0 : entries_[it->second].value;
  }

  std::vector<BucketEntry> drain() const {
    std::vector<BucketEntry> out;
    out.reserve(index_.size());
    for (const auto& [bits, s] : index_)
      out.push_back({FlowKey{bits, static_cast<std::uint8_t>(layer_)}, entries_[s].value,
                     entries_[s].locked});
    return out;
  }

  void clear() {
    entries_.clear();
    free_.clear();
    heap_.clear();
    index_.clear();
    rng_.seed(cfg_.seed);
    stats_ = {};
  }

  std::size_t size() const { return index_.size(); }
  unsigned layer() const { return layer_; }
  const BlockConfig& config() const { return cfg_; }
  const BlockStats& stats() const { return stats_; }

  // Minimum unlocked entry, if any. Exposed for tests.
  std::pair<std::uint32_t, Value> min_unlocked() const {
    if (heap_.empty()) return {0, 0};
    const Entry& e = entries_[heap_.front()];
    return {e.key, e.value};
  }

 private:
  static constexpr std::uint32_t kNotInHeap = static_cast<std::uint32_t>(-1);

  void insert_new(std::uint32_t bits, Value v) {
    std::uint32_t s;
    if (!free_.empty()) {
      s = free_.back();
      free_.pop_back();
      entries_[s] = Entry{};
    } else {
      s = static_cast<std::uint32_t>(entries_.size());
      entries_.emplace_back();
    }
    Entry& e = entries_[s];
    e.key = bits;
    e.value = v;
    index_.emplace(bits, s);
    e.heap_pos = static_cast<std::uint32_t>(heap_.size());
    heap_.push_back(s);
    heap_up(e.heap_pos);
  }

  void remove(std::uint32_t s) {
    Entry& e = entries_[s];
    if (e.heap_pos != kNotInHeap) heap_erase(e.heap_pos);
    index_.erase(e.key);
    e = Entry{};
    free_.push_back(s);
  }

  bool less(std::uint32_t a, std::uint32_t b) const {
    const Value va = entries_[a].value, vb = entries_[b].value;
    return va < vb || (va == vb && a < b);
  }

  void place(std::uint32_t pos, std::uint32_t s) {
    heap_[pos] = s;
    entries_[s].heap_pos = pos;
  }

  void heap_up(std::uint32_t pos) {
    const std::uint32_t s = heap_[pos];
    while (pos > 0) {
      const std::uint32_t parent = (pos - 1) / 2;
      if (!less(s, heap_[parent])) break;
      place(pos, heap_[parent]);
      pos = parent;
    }
    place(pos, s);
  }

  void heap_down(std::uint32_t pos) {
    const std::uint32_t n = static_cast<std::uint32_t>(heap_.size());
    const std::uint32_t s = heap_[pos];
    for (;;) {
      std::uint32_t child = 2 * pos + 1;
      if (child >= n) break;
      if (child + 1 < n && less(heap_[child + 1], heap_[child])) ++child;
      if (!less(heap_[child], s)) break;
      place(pos, heap_[child]);
      pos = child;
    }
    place(pos, s);
  }

  void heap_fix(std::uint32_t pos) {
    const std::uint32_t s = heap_[pos];
    heap_up(pos);
    heap_down(entries_[s].heap_pos);
  }

  void heap_erase(std::uint32_t pos) {
    const std::uint32_t s = heap_[pos];
    const std::uint32_t last = heap_.back();
    heap_.pop_back();
    entries_[s].heap_pos = kNotInHeap;
    if (last != s) {
      place(pos, last);
      heap_up(pos);
      heap_down(entries_[last].heap_pos);
    }
  }

  void check_layer(const FlowKey& key) const {
    if (key.layer != layer_)
      throw std::invalid_argument("key at layer " + std::to_string(key.layer) +
                                  " given to block at layer " + std::to_string(layer_));
  }

  BlockConfig cfg_;
  unsigned layer_;
  std::mt19937_64 rng_;
  std::vector<Entry> entries_;
  std::vector<std::uint32_t> free_;
  std::vector<std::uint32_t> heap_;
  std::unordered_map<std::uint32_t, std::uint32_t> index_;
  BlockStats stats_;
};

static_assert(ResidualBlockLike<UssBlock>);

}  // namespace rsketch
