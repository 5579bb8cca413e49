#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "block_common.hpp"
#include "hierarchy.hpp"

namespace rsketch {

// One reported hierarchical heavy hitter. `estimated_count` is the conditional
// count that qualified the prefix; `total_count` is the prefix's full
// (unconditioned) count, which is what ancestors discount.
struct HHHEntry {
  FlowKey key;
  Value estimated_count = 0;
  Value total_count = 0;

  unsigned layer() const { return key.layer; }

  friend bool operator==(const HHHEntry&, const HHHEntry&) = default;
};

inline void sort_report(std::vector<HHHEntry>& hhh) {
  std::sort(hhh.begin(), hhh.end(),
            [](const HHHEntry& a, const HHHEntry& b) { return a.key < b.key; });
}

// count >= theta * total. Shared by the sketch and the exact oracle so both
// apply the identical comparison.
struct HeavyThreshold {
  double theta = 0.0;
  Value total = 0;

  double bound() const { return theta * static_cast<double>(total); }
  bool reached(Value count) const { return static_cast<double>(count) >= bound(); }
};

using CountMap = std::unordered_map<std::uint32_t, Value>;

// Conditional count of `p` given a set of already reported prefixes: the
// estimate of p minus the full counts of its maximal reported descendants,
// clamped at zero. Direct form, O(|hhh|^2); used by tests and small callers.
inline Value conditional_count(const Hierarchy& h, const FlowKey& p,
                               const std::vector<HHHEntry>& hhh_so_far,
                               const std::unordered_map<FlowKey, Value, FlowKeyHash>& layer_estimates) {
  const auto it = layer_estimates.find(p);
  const Value raw = it == layer_estimates.end() ? 0 : it->second;
  std::vector<const HHHEntry*> desc;
  for (const HHHEntry& e : hhh_so_far)
    if (e.key != p && h.is_ancestor(p, e.key)) desc.push_back(&e);
  Value discount = 0;
  for (const HHHEntry* e : desc) {
    const bool covered = std::any_of(desc.begin(), desc.end(), [&](const HHHEntry* o) {
      return o != e && o->key != e->key && h.is_ancestor(o->key, e->key);
    });
    if (!covered) discount += e->total_count;
  }
  return raw > discount ? raw - discount : 0;
}

// Bottom-up HHH detection over layers [from, to) given full counts at layer
// `from`. `discount` holds, per prefix at layer `from`, the summed full counts
// of its maximal descendants already in `hhh`; on return it is lifted to layer
// `to`. When to == depth + 1 the final layer's merge is skipped.
inline void aggregate_layers(const Hierarchy& h, CountMap counts, unsigned from, unsigned to,
                             const HeavyThreshold& thr, CountMap& discount,
                             std::vector<HHHEntry>& hhh) {
  const unsigned d = h.depth();
  for (unsigned j = from; j < to; ++j) {
    const bool lift = j < d;
    const std::uint32_t up_mask = lift ? h.mask(j + 1) : 0;
    CountMap next_counts;
    CountMap next_discount;
    if (lift) {
      next_counts.reserve(counts.size());
      next_discount.reserve(discount.size());
    }
    for (const auto& [bits, c] : counts) {
      const auto dit = discount.find(bits);
      const Value disc = dit == discount.end() ? 0 : dit->second;
      bool heavy = false;
      if (thr.reached(c)) {
        const Value cond = c > disc ? c - disc : 0;
        if (thr.reached(cond)) {
          hhh.push_back({FlowKey{bits, static_cast<std::uint8_t>(j)}, cond, c});
          heavy = true;
        }
      }
      if (lift) {
        next_counts[bits & up_mask] += c;
        const Value carried = heavy ? c : disc;
        if (carried) next_discount[bits & up_mask] += carried;
      }
    }
    if (!lift) break;
    for (const auto& [bits, disc] : discount)
      if (!counts.contains(bits)) next_discount[bits & up_mask] += disc;
    counts = std::move(next_counts);
    discount = std::move(next_discount);
  }
}

}  // namespace rsketch
