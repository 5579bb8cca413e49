#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <rsketch/hhh.hpp>
#include <rsketch/hierarchy.hpp>
#include <rsketch/traces.hpp>

namespace rsketch::support {

inline Granularity bits8() { return {GranularityKind::bit, 8}; }

// Random unit-value stream over an 8-bit domain. Mass is concentrated on a few
// random subtrees so every layer has some heavy prefixes.
inline std::vector<std::uint32_t> small_domain_stream(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::vector<double> w(256);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& x : w) x = std::pow(u(rng), 6.0);
  const unsigned hot = rng() % 256;
  for (unsigned k = 0; k < 8; ++k) w[(hot + k) % 256] += 0.02;
  std::discrete_distribution<unsigned> pick(w.begin(), w.end());
  std::vector<std::uint32_t> out(n);
  for (auto& k : out) k = pick(rng);
  return out;
}

// Literal hierarchical heavy hitter definition over a domain of `width` bits
// (bit granularity): visit every node of the prefix tree layer by layer;
// a node's conditional count is its exact count minus the exact counts of its
// maximal descendants already selected. Entirely independent of library code
// except the HHHEntry/FlowKey types.
inline std::vector<HHHEntry> brute_force_hhh(const std::map<std::uint32_t, std::uint64_t>& counts,
                                             unsigned width, double theta,
                                             unsigned max_layer = 32) {
  std::uint64_t n = 0;
  for (const auto& [k, c] : counts) n += c;
  const double bound = theta * static_cast<double>(n);
  auto under = [](std::uint32_t node, unsigned layer, std::uint32_t key) {
    return layer >= 32 || (key >> layer) == (node >> layer);
  };
  std::vector<HHHEntry> out;
  for (unsigned layer = 0; layer <= std::min(width, max_layer); ++layer) {
    const std::vector<HHHEntry> below = out;
    for (std::uint32_t idx = 0; idx < (1u << (width - layer)); ++idx) {
      const std::uint32_t node = idx << layer;
      std::uint64_t c = 0;
      for (const auto& [k, v] : counts)
        if (under(node, layer, k)) c += v;
      std::uint64_t disc = 0;
      for (const HHHEntry& e : below) {
        if (!under(node, layer, e.key.bits)) continue;
        bool maximal = true;
        for (const HHHEntry& o : below)
          if (o.key.layer > e.key.layer && under(node, layer, o.key.bits) &&
              under(o.key.bits, o.key.layer, e.key.bits))
            maximal = false;
        if (maximal) disc += e.total_count;
      }
      const std::uint64_t cond = c > disc ? c - disc : 0;
      if (static_cast<double>(c) >= bound && static_cast<double>(cond) >= bound)
        out.push_back({FlowKey{node, static_cast<std::uint8_t>(layer)}, cond, c});
    }
  }
  std::sort(out.begin(), out.end(), [](const HHHEntry& a, const HHHEntry& b) { return a.key < b.key; });
  return out;
}

inline std::map<std::uint32_t, std::uint64_t> histogram(const std::vector<std::uint32_t>& keys) {
  std::map<std::uint32_t, std::uint64_t> m;
  for (auto k : keys) ++m[k];
  return m;
}

inline std::vector<HHHEntry> filter_upto(const std::vector<HHHEntry>& v, unsigned max_layer) {
  std::vector<HHHEntry> out;
  for (const auto& e : v)
    if (e.key.layer <= max_layer) out.push_back(e);
  return out;
}

}  // namespace rsketch::support
