#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include <rsketch/coco_block.hpp>
#include <rsketch/uss_block.hpp>

using namespace rsketch;

namespace {

FlowKey k0(std::uint32_t bits) { return FlowKey{bits, 0}; }

template <class B>
B make_block(std::uint32_t b, std::uint64_t seed, std::uint32_t g = 2) {
  if constexpr (std::is_same_v<B, UssBlock>)
    return B(BlockConfig{1, b, seed, BlockKind::uss}, 0);
  else
    return B(BlockConfig{g, b, seed, BlockKind::coco}, 0);
}

std::map<std::uint32_t, std::pair<Value, bool>> snapshot(const std::vector<BucketEntry>& d) {
  std::map<std::uint32_t, std::pair<Value, bool>> m;
  for (const auto& e : d) m[e.key.bits] = {e.value, e.locked};
  return m;
}

// Straightforward model of the coco block written from its description:
// per-array seeded hashing, first empty candidate, minimum unlocked candidate
// for replacement, replacement when u * (min + v) < v.
struct ReferenceCoco {
  struct Cell {
    std::uint32_t key = 0;
    Value value = 0;
    bool locked = false;
    bool used() const { return value > 0 || locked; }
  };
  std::uint32_t g, b;
  std::vector<std::vector<Cell>> arrays;
  std::vector<std::uint64_t> seeds;
  std::mt19937_64 rng;

  ReferenceCoco(std::uint32_t g_, std::uint32_t b_, std::uint64_t seed)
      : g(g_), b(b_), arrays(g_, std::vector<Cell>(b_)), rng(seed) {
    for (std::uint32_t j = 0; j < g; ++j) seeds.push_back(seed * 0x100000001b3ULL + j + 1);
  }
  Cell& cell(std::uint32_t j, std::uint32_t key) { return arrays[j][seeded_hash(key, seeds[j]) % b]; }

  void update(std::uint32_t key, Value v, Value dec) {
    for (std::uint32_t j = 0; j < g; ++j) {
      Cell& c = cell(j, key);
      if (c.used() && c.key == key) {
        c.value = c.value + v > dec ? c.value + v - dec : 0;
        if (!c.used()) c.key = 0;
        return;
      }
    }
    for (std::uint32_t j = 0; j < g; ++j) {
      Cell& c = cell(j, key);
      if (!c.used()) {
        c = {key, v, false};
        return;
      }
    }
    Cell* m = nullptr;
    for (std::uint32_t j = 0; j < g; ++j) {
      Cell& c = cell(j, key);
      if (!c.locked && (m == nullptr || c.value < m->value)) m = &c;
    }
    if (m == nullptr) return;
    m->value += v;
    const double u = static_cast<double>(rng() >> 11) / 9007199254740992.0;
    if (u * static_cast<double>(m->value) < static_cast<double>(v)) m->key = key;
  }
  void lock(std::uint32_t key) {
    for (std::uint32_t j = 0; j < g; ++j) {
      Cell& c = cell(j, key);
      if (c.used() && c.key == key) {
        c.locked = true;
        return;
      }
    }
  }
  std::map<std::uint32_t, std::pair<Value, bool>> state() const {
    std::map<std::uint32_t, std::pair<Value, bool>> m;
    for (const auto& a : arrays)
      for (const Cell& c : a)
        if (c.used()) m[c.key] = {c.value, c.locked};
    return m;
  }
};

}  // namespace

template <class B>
class BlockTest : public ::testing::Test {};
using BlockTypes = ::testing::Types<CocoBlock, UssBlock>;
TYPED_TEST_SUITE(BlockTest, BlockTypes);

TYPED_TEST(BlockTest, InsertUpdateAndEstimate) {
  auto b = make_block<TypeParam>(64, 1);
  EXPECT_EQ(b.update(k0(5), 3, 0).count_after, 3u);
  const UpdateOutcome o = b.update(k0(5), 2, 0);
  EXPECT_TRUE(o.matched);
  EXPECT_EQ(o.count_before, 3u);
  EXPECT_EQ(o.count_after, 5u);
  EXPECT_EQ(b.estimate(k0(5)), 5u);
  EXPECT_EQ(b.estimate(k0(6)), 0u);
  EXPECT_THROW(b.update(FlowKey{5, 1}, 1, 0), std::invalid_argument);
}

TYPED_TEST(BlockTest, DecrementClampsAndEmpties) {
  auto b = make_block<TypeParam>(64, 1);
  b.update(k0(9), 4, 0);
  EXPECT_TRUE(b.decrement(k0(9), 10));
  EXPECT_EQ(b.estimate(k0(9)), 0u);
  EXPECT_TRUE(b.drain().empty());
  EXPECT_FALSE(b.decrement(k0(9), 1));

  // Update with a decrement larger than the value empties the bucket too.
  b.update(k0(9), 4, 0);
  EXPECT_EQ(b.update(k0(9), 1, 50).count_after, 0u);
  EXPECT_TRUE(b.drain().empty());
}

TYPED_TEST(BlockTest, LockedZeroBucketIsKept) {
  auto b = make_block<TypeParam>(64, 1);
  b.update(k0(9), 4, 0);
  EXPECT_TRUE(b.lock(k0(9)));
  b.decrement(k0(9), 10);
  const auto d = b.drain();
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], (BucketEntry{k0(9), 0, true}));
  EXPECT_TRUE(b.update(k0(9), 1, 0).locked);
}

TYPED_TEST(BlockTest, ReplacementProbabilityOneFifth) {
  // A bucket holding value 4 meets a new key of value 1: P(replace) = 1/5.
  const int trials = 20000;
  int won = 0;
  for (int s = 0; s < trials; ++s) {
    auto b = make_block<TypeParam>(1, 1000 + s, 1);
    b.update(k0(1), 4, 0);
    const UpdateOutcome o = b.update(k0(2), 1, 0);
    EXPECT_FALSE(o.matched);
    const auto d = b.drain();
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].value, 5u);
    won += d[0].key.bits == 2;
  }
  const double p = static_cast<double>(won) / trials;
  const double se = std::sqrt(0.2 * 0.8 / trials);
  EXPECT_NEAR(p, 0.2, 3 * se);
}

TYPED_TEST(BlockTest, LockedKeyNeverEvicted) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 20; ++round) {
    auto b = make_block<TypeParam>(16, round + 1);
    std::map<std::uint32_t, Value> locked;
    for (int step = 0; step < 3000; ++step) {
      const std::uint32_t key = rng() % 200;
      b.update(k0(key), 1 + rng() % 3, 0);
      if (rng() % 50 == 0 && b.estimate(k0(key)) > 0 && b.lock(k0(key)))
        locked[key] = b.estimate(k0(key));
      for (auto& [lk, v] : locked) {
        const Value now = b.estimate(k0(lk));
        ASSERT_GE(now, v) << "locked key " << lk << " lost mass";
        v = now;
      }
    }
    const auto snap = snapshot(b.drain());
    for (const auto& [lk, v] : locked) {
      ASSERT_TRUE(snap.contains(lk));
      EXPECT_TRUE(snap.at(lk).second);
    }
  }
}

TYPED_TEST(BlockTest, ConservationLedger) {
  std::mt19937_64 rng(23);
  for (int round = 0; round < 20; ++round) {
    auto b = make_block<TypeParam>(8, round + 1);
    Value inserted = 0, removed = 0;
    for (int step = 0; step < 2000; ++step) {
      const std::uint32_t key = rng() % 100;
      const Value v = 1 + rng() % 4;
      const Value dec = rng() % 10 == 0 ? rng() % 6 : 0;
      const UpdateOutcome o = b.update(k0(key), v, dec);
      inserted += v;
      if (o.matched) removed += o.count_before + v - o.count_after;
      if (rng() % 20 == 0) {
        const Value before = b.estimate(k0(key));
        b.decrement(k0(key), rng() % 5);
        removed += before - b.estimate(k0(key));
      }
      if (rng() % 40 == 0) b.lock(k0(key));
    }
    Value drained = 0;
    for (const auto& e : b.drain()) drained += e.value;
    EXPECT_EQ(drained, inserted - removed - b.stats().dropped_value);
  }
}

TYPED_TEST(BlockTest, ReplayIsDeterministic) {
  auto run = [](std::uint64_t seed) {
    auto b = make_block<TypeParam>(8, seed);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 5000; ++i) b.update(k0(rng() % 300), 1, 0);
    return snapshot(b.drain());
  };
  EXPECT_EQ(run(4), run(4));

  auto b = make_block<TypeParam>(8, 4);
  std::mt19937_64 rng(99);
  for (int i = 0; i < 100; ++i) b.update(k0(rng() % 300), 1, 0);
  b.clear();
  EXPECT_TRUE(b.drain().empty());
  rng.seed(99);
  for (int i = 0; i < 5000; ++i) b.update(k0(rng() % 300), 1, 0);
  EXPECT_EQ(snapshot(b.drain()), run(4));
}

TYPED_TEST(BlockTest, UnbiasedForAdversarialKey) {
  // Key 0 arrives in small pieces among many heavier competitors.
  const int trials = 3000;
  double sum = 0, sum_sq = 0;
  Value truth = 0;
  for (int s = 0; s < trials; ++s) {
    auto b = make_block<TypeParam>(4, 5000 + s, 1);
    std::mt19937_64 rng(1);
    truth = 0;
    for (int i = 0; i < 400; ++i) {
      if (i % 5 == 0) {
        b.update(k0(0), 1, 0);
        ++truth;
      } else {
        b.update(k0(1 + rng() % 12), 1 + rng() % 3, 0);
      }
    }
    const double e = static_cast<double>(b.estimate(k0(0)));
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / trials;
  const double sd = std::sqrt(std::max(0.0, sum_sq / trials - mean * mean));
  EXPECT_NEAR(mean, static_cast<double>(truth), 3 * sd / std::sqrt(trials) + 1e-9);
}

TEST(CocoBlock, MatchesReferenceModel) {
  std::mt19937_64 rng(31);
  for (std::uint32_t g : {1u, 2u, 3u}) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t seed = 100 + round;
      CocoBlock blk(BlockConfig{g, 7, seed, BlockKind::coco}, 0);
      ReferenceCoco ref(g, 7, seed);
      for (int step = 0; step < 4000; ++step) {
        const std::uint32_t key = rng() % 150;
        const Value v = 1 + rng() % 5;
        const Value dec = rng() % 8 == 0 ? rng() % 7 : 0;
        blk.update(k0(key), v, dec);
        ref.update(key, v, dec);
        if (rng() % 60 == 0) {
          blk.lock(k0(key));
          ref.lock(key);
        }
      }
      EXPECT_EQ(snapshot(blk.drain()), ref.state()) << "g=" << g << " round=" << round;
    }
  }
}

TEST(CocoBlock, AllCandidatesLockedDropsUpdate) {
  CocoBlock b(BlockConfig{1, 1, 1, BlockKind::coco}, 0);
  b.update(k0(1), 3, 0);
  b.lock(k0(1));
  const UpdateOutcome o = b.update(k0(2), 5, 0);
  EXPECT_FALSE(o.matched);
  EXPECT_EQ(b.stats().dropped, 1u);
  EXPECT_EQ(b.stats().dropped_value, 5u);
  EXPECT_EQ(snapshot(b.drain()), (std::map<std::uint32_t, std::pair<Value, bool>>{{1, {3, true}}}));
}

TEST(CocoBlock, KeyZeroIsStorable) {
  CocoBlock b(BlockConfig{2, 4, 1, BlockKind::coco}, 0);
  b.update(k0(0), 2, 0);
  EXPECT_EQ(b.estimate(k0(0)), 2u);
  EXPECT_EQ(b.drain().size(), 1u);
}

TEST(UssBlock, MinUnlockedTracksBruteForce) {
  std::mt19937_64 rng(41);
  UssBlock b(BlockConfig{1, 16, 3, BlockKind::uss}, 0);
  for (int step = 0; step < 20000; ++step) {
    const std::uint32_t key = rng() % 120;
    b.update(k0(key), 1 + rng() % 4, rng() % 10 == 0 ? rng() % 6 : 0);
    if (rng() % 100 == 0) b.lock(k0(key));
    if (rng() % 30 == 0) b.decrement(k0(rng() % 120), rng() % 4);
    ASSERT_LE(b.size(), 16u);
    Value m = 0;
    bool any = false;
    for (const auto& e : b.drain())
      if (!e.locked && (!any || e.value < m)) {
        m = e.value;
        any = true;
      }
    if (any) {
      ASSERT_EQ(b.min_unlocked().second, m);
      ASSERT_GT(m, 0u);
    }
  }
}

TEST(UssBlock, RejectsMultipleArrays) {
  EXPECT_THROW(UssBlock(BlockConfig{2, 4, 1, BlockKind::uss}, 0), std::invalid_argument);
}

TEST(BlockEquivalence, UssAndSingleBucketCocoAgreeWithoutEviction) {
  // With room for every key neither block ever replaces, so both hold exact counts.
  std::mt19937_64 rng(8);
  CocoBlock c(BlockConfig{4, 4096, 1, BlockKind::coco}, 0);
  UssBlock u(BlockConfig{1, 256, 1, BlockKind::uss}, 0);
  std::map<std::uint32_t, Value> exact;
  for (int i = 0; i < 20000; ++i) {
    const std::uint32_t key = rng() % 200;
    const Value v = 1 + rng() % 3;
    c.update(k0(key), v, 0);
    u.update(k0(key), v, 0);
    exact[key] += v;
  }
  ASSERT_EQ(c.stats().replacements_tried, 0u);
  ASSERT_EQ(u.stats().replacements_tried, 0u);
  EXPECT_EQ(snapshot(c.drain()), snapshot(u.drain()));
  for (const auto& [k, v] : exact) EXPECT_EQ(c.estimate(k0(k)), v);
}
