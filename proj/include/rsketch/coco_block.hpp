#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "block_common.hpp"

namespace rsketch {

// CocoSketch-style residual block: g hashed arrays of b buckets, one candidate
// bucket per array, emulated PPS replacement against the minimum unlocked
// candidate. No circular-dependency removal.
class CocoBlock {
 public:
  // sizeof(Bucket) is the unit used for memory budgeting.
  struct Bucket {
    std::uint32_t key = 0;
    bool locked = false;
    Value value = 0;

    bool occupied() const { return value != 0 || locked; }
  };

  CocoBlock(const BlockConfig& cfg, unsigned layer)
      : cfg_(cfg), layer_(layer), rng_(cfg.seed) {
    cfg_.validate();
    if (cfg_.kind != BlockKind::coco) throw std::invalid_argument("CocoBlock requires kind coco");
    buckets_.resize(std::size_t{cfg_.g} * cfg_.b);
    seeds_.resize(cfg_.g);
    for (std::uint32_t j = 0; j < cfg_.g; ++j) seeds_[j] = cfg_.seed * 0x100000001b3ULL + j + 1;
  }

  static constexpr std::size_t bucket_bytes() { return sizeof(Bucket); }

  UpdateOutcome update(const FlowKey& key, Value v, Value decrement_amount) {
    check_layer(key);
    ++stats_.updates;
    Bucket* empty = nullptr;
    Bucket* min = nullptr;
    for (std::uint32_t j = 0; j < cfg_.g; ++j) {
      Bucket& bk = slot(j, key.bits);
      if (bk.occupied()) {
        if (bk.key == key.bits) {
          const UpdateOutcome out{0, true, bk.value, bk.locked};
          bk.value += v;
          bk.value = bk.value > decrement_amount ? bk.value - decrement_amount : 0;
          const Value after = bk.value;
          if (!bk.occupied()) bk.key = 0;
          return {after, true, out.count_before, out.locked};
        }
        if (!bk.locked && (min == nullptr || bk.value < min->value)) min = &bk;
      } else if (empty == nullptr) {
        empty = &bk;
      }
    }
    if (empty != nullptr) {
      empty->key = key.bits;
      empty->value = v;
      empty->locked = false;
      return {v, true, 0, false};
    }
    if (min == nullptr) {
      ++stats_.dropped;
      stats_.dropped_value += v;
      return {};
    }
    ++stats_.replacements_tried;
    min->value += v;
    if (unit_uniform(rng_) * static_cast<double>(min->value) < static_cast<double>(v)) {
      min->key = key.bits;
      ++stats_.replacements_won;
    }
    return {};
  }

  bool decrement(const FlowKey& key, Value amount) {
    Bucket* bk = find(key);
    if (bk == nullptr) return false;
    bk->value = bk->value > amount ? bk->value - amount : 0;
    if (!bk->occupied()) bk->key = 0;
    return true;
  }

  bool lock(const FlowKey& key) {
    Bucket* bk = find(key);
    if (bk == nullptr) return false;
    bk->locked = true;
    return true;
  }

  Value estimate(const FlowKey& key) const {
    const std::size_t i = index_of(key);
    return i == npos ? 0 : buckets_[i].value;
  }

  std::vector<BucketEntry> drain() const {
    std::vector<BucketEntry> out;
    for (const Bucket& bk : buckets_)
      if (bk.occupied())
        out.push_back({FlowKey{bk.key, static_cast<std::uint8_t>(layer_)}, bk.value, bk.locked});
    return out;
  }

  void clear() {
    std::fill(buckets_.begin(), buckets_.end(), Bucket{});
    rng_.seed(cfg_.seed);
    stats_ = {};
  }

  unsigned layer() const { return layer_; }
  const BlockConfig& config() const { return cfg_; }
  const BlockStats& stats() const { return stats_; }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t slot_index(std::uint32_t j, std::uint32_t bits) const {
    return std::size_t{j} * cfg_.b + seeded_hash(bits, seeds_[j]) % cfg_.b;
  }
  Bucket& slot(std::uint32_t j, std::uint32_t bits) { return buckets_[slot_index(j, bits)]; }

  std::size_t index_of(const FlowKey& key) const {
    if (key.layer != layer_) return npos;
    for (std::uint32_t j = 0; j < cfg_.g; ++j) {
      const std::size_t i = slot_index(j, key.bits);
      if (buckets_[i].occupied() && buckets_[i].key == key.bits) return i;
    }
    return npos;
  }

  Bucket* find(const FlowKey& key) {
    const std::size_t i = index_of(key);
    return i == npos ? nullptr : &buckets_[i];
  }

  void check_layer(const FlowKey& key) const {
    if (key.layer != layer_)
      throw std::invalid_argument("key at layer " + std::to_string(key.layer) +
                                  " given to block at layer " + std::to_string(layer_));
  }

  BlockConfig cfg_;
  unsigned layer_;
  std::mt19937_64 rng_;
  std::vector<Bucket> buckets_;
  std::vector<std::uint64_t> seeds_;
  BlockStats stats_;
};

static_assert(ResidualBlockLike<CocoBlock>);

}  // namespace rsketch
