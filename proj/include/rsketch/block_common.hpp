#pragma once

#include <concepts>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierarchy.hpp"

namespace rsketch {

using Value = std::uint64_t;

enum class BlockKind { coco, uss };

inline std::string to_string(BlockKind k) { return k == BlockKind::coco ? "coco" : "uss"; }

inline BlockKind block_kind_from_string(const std::string& s) {
  if (s == "coco") return BlockKind::coco;
  if (s == "uss") return BlockKind::uss;
  throw std::invalid_argument("unknown block kind '" + s + "'");
}

struct BlockConfig {
  std::uint32_t g = 2;       // hashed arrays (1 for uss)
  std::uint32_t b = 1024;    // buckets per array, or stream-summary capacity for uss
  std::uint64_t seed = 1;
  BlockKind kind = BlockKind::coco;

  void validate() const {
    if (g < 1 || b < 1) throw std::invalid_argument("block needs g >= 1 and b >= 1");
    if (kind == BlockKind::uss && g != 1)
      throw std::invalid_argument("a uss block must have g == 1");
  }
};

// Result of one block update. `matched` is false on the replacement path and on
// the all-locked drop path, in which case count_after is 0.
struct UpdateOutcome {
  Value count_after = 0;
  bool matched = false;
  Value count_before = 0;  // bucket value before this update when matched
  bool locked = false;     // bucket lock state before this update when matched
};

struct BucketEntry {
  FlowKey key;
  Value value = 0;
  bool locked = false;

  friend bool operator==(const BucketEntry&, const BucketEntry&) = default;
};

struct BlockStats {
  std::uint64_t updates = 0;
  std::uint64_t replacements_tried = 0;  // Case-3 events
  std::uint64_t replacements_won = 0;
  std::uint64_t dropped = 0;             // all candidates locked
  Value dropped_value = 0;
};

// Seeded 32-bit avalanche hash (murmur3 finalizer over a seed-mixed key).
inline std::uint32_t seeded_hash(std::uint32_t key, std::uint64_t seed) {
  std::uint64_t h = key ^ (seed * 0x9e3779b97f4a7c15ULL);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return static_cast<std::uint32_t>(h);
}

// Uniform double on [0, 1) from 53 random bits. Independent of the standard
// library's distribution implementations, so streams are portable.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// The operations a residual block exposes to the level pipeline.
template <class B>
concept ResidualBlockLike = requires(B b, const B cb, FlowKey k, Value v) {
  { b.update(k, v, v) } -> std::same_as<UpdateOutcome>;
  { b.decrement(k, v) } -> std::same_as<bool>;
  { b.lock(k) } -> std::same_as<bool>;
  { cb.estimate(k) } -> std::same_as<Value>;
  { cb.drain() } -> std::same_as<std::vector<BucketEntry>>;
  { b.clear() };
  { cb.layer() } -> std::convertible_to<unsigned>;
  { cb.stats() } -> std::convertible_to<BlockStats>;
};

}  // namespace rsketch
