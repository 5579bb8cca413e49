#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hhh.hpp"
#include "hierarchy.hpp"

namespace rsketch {

// Exact per-flow counts for one window.
class ExactCounts {
 public:
  static constexpr std::size_t kDefaultCardinalityCap = 10'000'000;

  explicit ExactCounts(std::size_t cardinality_cap = kDefaultCardinalityCap)
      : cap_(cardinality_cap) {}

  void add(std::uint32_t full_key, Value v) {
    auto [it, inserted] = counts_.try_emplace(full_key, 0);
    if (inserted && counts_.size() > cap_) {
      counts_.erase(it);
      throw std::length_error("exact oracle cardinality cap of " + std::to_string(cap_) +
                              " distinct keys exceeded");
    }
    it->second += v;
    ++packets_;
    value_total_ += v;
  }

  const CountMap& counts() const { return counts_; }
  std::uint64_t packets() const { return packets_; }
  Value value_total() const { return value_total_; }
  std::size_t cardinality_cap() const { return cap_; }

  void clear() {
    counts_.clear();
    packets_ = 0;
    value_total_ = 0;
  }

 private:
  std::size_t cap_;
  CountMap counts_;
  std::uint64_t packets_ = 0;
  Value value_total_ = 0;
};

// Exact aggregate of every prefix at `layer`.
inline CountMap layer_counts(const ExactCounts& exact, const Hierarchy& h, unsigned layer) {
  const std::uint32_t m = h.mask(layer);
  CountMap out;
  for (const auto& [bits, c] : exact.counts()) out[bits & m] += c;
  return out;
}

// Heavy hitters of a single layer: prefixes whose exact aggregate reaches theta * total.
inline std::unordered_set<FlowKey, FlowKeyHash> exact_layer_hh(const ExactCounts& exact,
                                                               double theta, const Hierarchy& h,
                                                               unsigned layer) {
  if (layer > h.depth()) throw std::out_of_range("layer exceeds hierarchy depth");
  const HeavyThreshold thr{theta, exact.value_total()};
  std::unordered_set<FlowKey, FlowKeyHash> out;
  for (const auto& [bits, c] : layer_counts(exact, h, layer))
    if (thr.reached(c)) out.insert(FlowKey{bits, static_cast<std::uint8_t>(layer)});
  return out;
}

// Exact HHH_d. Each candidate's conditional count is its exact aggregate minus
// the conditional counts of every previously reported descendant; summing all
// descendants' conditional counts telescopes to the full counts of the maximal
// ones, so the result matches the maximal-descendant definition.
inline std::vector<HHHEntry> exact_hhh(const ExactCounts& exact, double theta, const Hierarchy& h) {
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("theta must lie in (0, 1)");
  const HeavyThreshold thr{theta, exact.value_total()};
  std::vector<HHHEntry> hhh;
  if (exact.value_total() == 0) return hhh;
  for (unsigned layer = 0; layer <= h.depth(); ++layer) {
    const std::size_t reported_below = hhh.size();
    for (const auto& [bits, c] : layer_counts(exact, h, layer)) {
      if (!thr.reached(c)) continue;
      const FlowKey p{bits, static_cast<std::uint8_t>(layer)};
      Value below = 0;
      for (std::size_t i = 0; i < reported_below; ++i)
        if (h.is_ancestor(p, hhh[i].key)) below += hhh[i].estimated_count;
      const Value cond = c > below ? c - below : 0;
      if (thr.reached(cond)) hhh.push_back({p, cond, c});
    }
  }
  sort_report(hhh);
  return hhh;
}

// Ground-truth export: "key,prefix_len,conditional_count" sorted by (layer, key).
inline void write_hhh_csv(std::ostream& os, const Hierarchy& h, const std::vector<HHHEntry>& hhh) {
  os << "key,prefix_len,conditional_count\n";
  for (const HHHEntry& e : hhh)
    os << Hierarchy::format_ipv4(e.key.bits) << ',' << h.prefix_length(e.key) << ','
       << e.estimated_count << '\n';
}

}  // namespace rsketch
