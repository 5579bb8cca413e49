#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "block_common.hpp"
#include "hierarchy.hpp"

namespace rsketch {

struct PacketRecord {
  std::uint32_t src_ip = 0;
  std::uint32_t value = 1;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

using Trace = std::vector<PacketRecord>;

enum class TraceFormat { csv, bin };

inline TraceFormat trace_format_from_string(const std::string& s) {
  if (s == "csv") return TraceFormat::csv;
  if (s == "bin") return TraceFormat::bin;
  throw std::invalid_argument("unknown trace format '" + s + "'");
}

inline std::string to_string(TraceFormat f) { return f == TraceFormat::csv ? "csv" : "bin"; }

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sequential reader. CSV lines are "src_ip_dotted,value"; bin is packed
// little-endian (u32 ip, u32 value) pairs.
class TraceReader {
 public:
  TraceReader(const std::string& path, TraceFormat fmt) : in_(path, std::ios::binary), fmt_(fmt) {
    if (!in_) throw TraceError("cannot open trace '" + path + "'");
  }

  std::optional<PacketRecord> next() { return fmt_ == TraceFormat::csv ? next_csv() : next_bin(); }

 private:
  std::optional<PacketRecord> next_csv() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto comma = line.find(',');
      try {
        if (comma == std::string::npos) throw std::invalid_argument("missing ','");
        PacketRecord r;
        r.src_ip = Hierarchy::parse_ipv4(std::string_view(line).substr(0, comma));
        const std::string_view tail = std::string_view(line).substr(comma + 1);
        auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), r.value);
        if (ec != std::errc{} || ptr != tail.data() + tail.size() || r.value == 0)
          throw std::invalid_argument("bad value field");
        return r;
      } catch (const std::invalid_argument& e) {
        throw TraceError("malformed trace line " + std::to_string(line_no_) + ": " + e.what());
      }
    }
    return std::nullopt;
  }

  std::optional<PacketRecord> next_bin() {
    unsigned char buf[8];
    in_.read(reinterpret_cast<char*>(buf), sizeof buf);
    const auto got = in_.gcount();
    if (got == 0) return std::nullopt;
    if (got != sizeof buf)
      throw TraceError("truncated binary trace at byte offset " + std::to_string(offset_));
    offset_ += sizeof buf;
    auto le32 = [&](int o) {
      return std::uint32_t{buf[o]} | (std::uint32_t{buf[o + 1]} << 8) |
             (std::uint32_t{buf[o + 2]} << 16) | (std::uint32_t{buf[o + 3]} << 24);
    };
    PacketRecord r{le32(0), le32(4)};
    if (r.value == 0)
      throw TraceError("zero value in binary trace at byte offset " + std::to_string(offset_ - 8));
    return r;
  }

  std::ifstream in_;
  TraceFormat fmt_;
  std::uint64_t line_no_ = 0;
  std::uint64_t offset_ = 0;
};

inline Trace read_trace(const std::string& path, TraceFormat fmt) {
  TraceReader reader(path, fmt);
  Trace out;
  while (auto r = reader.next()) out.push_back(*r);
  return out;
}

inline void write_trace(std::ostream& os, const Trace& trace, TraceFormat fmt) {
  if (fmt == TraceFormat::csv) {
    for (const PacketRecord& r : trace) os << Hierarchy::format_ipv4(r.src_ip) << ',' << r.value << '\n';
    return;
  }
  for (const PacketRecord& r : trace) {
    unsigned char buf[8];
    for (int i = 0; i < 4; ++i) {
      buf[i] = static_cast<unsigned char>(r.src_ip >> (8 * i));
      buf[4 + i] = static_cast<unsigned char>(r.value >> (8 * i));
    }
    os.write(reinterpret_cast<const char*>(buf), sizeof buf);
  }
}

inline void write_trace(const std::string& path, const Trace& trace, TraceFormat fmt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TraceError("cannot create trace '" + path + "'");
  write_trace(os, trace, fmt);
  if (!os) throw TraceError("write failed for '" + path + "'");
}

struct ZipfSpec {
  double skew = 1.0;
  std::uint32_t keys = 100'000;
  std::uint64_t length = 1'000'000;
  std::uint64_t seed = 1;
  // Subnet locality. With subnets > 0, keys are dealt round-robin by rank into
  // `subnets` distinct random prefixes of length subnet_prefix; otherwise every
  // key gets an independent pseudo-random address.
  std::uint32_t subnets = 0;
  unsigned subnet_prefix = 24;
};

// Bijective 32-bit mixer; distinct ranks map to distinct addresses.
inline std::uint32_t mix32(std::uint32_t x) {
  x ^= x >> 16;
  x *= 0x85ebca6bu;
  x ^= x >> 13;
  x *= 0xc2b2ae35u;
  x ^= x >> 16;
  return x;
}

inline std::uint32_t zipf_rank_address(std::uint32_t rank, std::uint64_t seed) {
  return mix32(rank + static_cast<std::uint32_t>(seed * 0x9e3779b9u) + 0x6a09e667u);
}

// Distinct address per rank, honoring the configured subnet layout.
class ZipfAddressMap {
 public:
  explicit ZipfAddressMap(const ZipfSpec& spec) : spec_(spec) {
    if (spec.subnets == 0) return;
    if (spec.subnet_prefix < 1 || spec.subnet_prefix > 31)
      throw std::invalid_argument("subnet_prefix must lie in [1, 31]");
    host_bits_ = 32 - spec.subnet_prefix;
    const std::uint64_t per_subnet = (std::uint64_t{spec.keys} + spec.subnets - 1) / spec.subnets;
    if (per_subnet > (std::uint64_t{1} << host_bits_))
      throw std::invalid_argument("too many keys per subnet for the host space");
    if (spec.subnets > (std::uint64_t{1} << spec.subnet_prefix))
      throw std::invalid_argument("more subnets than prefixes of that length");
    std::mt19937_64 rng(spec.seed ^ 0x2545f4914f6cdd1dULL);
    std::unordered_set<std::uint32_t> seen;
    const std::uint32_t net_mask = ~0u << host_bits_;
    while (bases_.size() < spec.subnets) {
      const std::uint32_t base = static_cast<std::uint32_t>(rng()) & net_mask;
      if (seen.insert(base).second) bases_.push_back(base);
    }
    host_mul_ = (static_cast<std::uint32_t>(rng()) | 1u);
    host_add_ = static_cast<std::uint32_t>(rng());
  }

  std::uint32_t operator()(std::uint32_t rank) const {
    if (bases_.empty()) return zipf_rank_address(rank, spec_.seed);
    const std::uint32_t s = rank % spec_.subnets;
    const std::uint32_t idx = rank / spec_.subnets;
    const std::uint32_t host_mask = (1u << host_bits_) - 1u;
    return bases_[s] | ((idx * host_mul_ + host_add_) & host_mask);
  }

 private:
  ZipfSpec spec_;
  unsigned host_bits_ = 0;
  std::vector<std::uint32_t> bases_;
  std::uint32_t host_mul_ = 1, host_add_ = 0;
};

// Unit-valued records whose key ranks follow Zipf(skew) over `keys` keys,
// mapped to pseudo-random addresses. Fully determined by the spec.
inline Trace gen_zipf(const ZipfSpec& spec) {
  if (!(spec.skew > 0.0)) throw std::invalid_argument("zipf skew must be positive");
  if (spec.keys < 1) throw std::invalid_argument("zipf needs at least one key");
  const ZipfAddressMap address(spec);
  std::vector<double> cdf(spec.keys);
  double acc = 0.0;
  for (std::uint32_t r = 0; r < spec.keys; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), spec.skew);
    cdf[r] = acc;
  }
  std::mt19937_64 rng(spec.seed);
  Trace out;
  out.reserve(spec.length);
  for (std::uint64_t i = 0; i < spec.length; ++i) {
    const double u = unit_uniform(rng) * acc;
    const auto rank = static_cast<std::uint32_t>(
        std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), spec.keys - 1));
    out.push_back({address(rank), 1});
  }
  return out;
}

// Parameters of the top-K skew modification.
struct SynthSpec {
  std::uint32_t top_k = 1000;          // 0 disables the modification
  double replace_ratio = 0.3;          // target mass fraction of the replaced flows
  unsigned min_prefix = 20;
  unsigned max_prefix = 24;
  std::uint32_t fanout = 64;           // suffix addresses per replaced flow
  std::uint32_t clusters = 0;          // aggregation prefixes; 0 = max(1, top_k / 10)
  std::uint64_t seed = 1;

  std::uint32_t cluster_count() const {
    return clusters ? clusters : std::max<std::uint32_t>(1, top_k / 10);
  }

  void validate() const {
    if (!(replace_ratio > 0.0 && replace_ratio <= 1.0))
      throw std::invalid_argument("replace_ratio must lie in (0, 1]");
    if (min_prefix > max_prefix || max_prefix > 32)
      throw std::invalid_argument("need min_prefix <= max_prefix <= 32");
    if (max_prefix == 32 && min_prefix == 32)
      throw std::invalid_argument("aggregation prefixes must leave host bits");
    if (fanout < 1) throw std::invalid_argument("fanout must be >= 1");
  }
};

struct SkewModifyInfo {
  std::vector<FlowKey> cluster_prefixes;        // as (bits, layer) at bit granularity
  std::vector<std::uint32_t> replaced_keys;     // original top-k addresses, by rank
  std::unordered_set<std::uint32_t> new_addresses;
  double base_ratio = 0.0;                      // top-k mass fraction before modification
};

// Replaces the top_k heaviest source addresses with fresh addresses that only
// aggregate into heavy hitters at prefix lengths in [min_prefix, max_prefix].
// Each replaced flow maps to one cluster prefix and spreads its packets over
// `fanout` suffixes under it. Packets are then moved between the replaced and
// the remaining population so the replaced mass approaches replace_ratio. The
// record count and every record's value are preserved.
inline Trace skew_modify(const Trace& base, const SynthSpec& spec, SkewModifyInfo* info = nullptr) {
  spec.validate();
  if (spec.top_k == 0) return base;

  std::unordered_map<std::uint32_t, Value> mass;
  Value total = 0;
  for (const PacketRecord& r : base) {
    mass[r.src_ip] += r.value;
    total += r.value;
  }
  if (spec.top_k > mass.size())
    throw std::invalid_argument("top_k " + std::to_string(spec.top_k) + " exceeds the " +
                                std::to_string(mass.size()) + " distinct keys of the base trace");

  std::vector<std::pair<std::uint32_t, Value>> ranked(mass.begin(), mass.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  ranked.resize(spec.top_k);

  std::mt19937_64 rng(spec.seed ^ 0x5bd1e995u);
  const Hierarchy h(Granularity::ipv4_bits());

  // Cluster prefixes: uniform length, random bits, pairwise non-nested.
  const std::uint32_t C = spec.cluster_count();
  std::vector<FlowKey> clusters;
  while (clusters.size() < C) {
    const unsigned plen = spec.min_prefix +
                          static_cast<unsigned>(rng() % (spec.max_prefix - spec.min_prefix + 1));
    const FlowKey cand = h.key(static_cast<std::uint32_t>(rng()), 32 - plen);
    const bool clash = std::any_of(clusters.begin(), clusters.end(), [&](const FlowKey& o) {
      return h.is_ancestor(o, cand) || h.is_ancestor(cand, o);
    });
    if (!clash) clusters.push_back(cand);
  }

  std::unordered_map<std::uint32_t, std::uint32_t> top_index;
  std::vector<std::vector<std::uint32_t>> suffix_addrs(spec.top_k);
  std::vector<double> top_cdf(spec.top_k);
  Value top_mass = 0;
  for (std::uint32_t i = 0; i < spec.top_k; ++i) {
    top_index[ranked[i].first] = i;
    top_mass += ranked[i].second;
    top_cdf[i] = static_cast<double>(top_mass);
    const FlowKey& c = clusters[i % C];
    const unsigned host_bits = c.layer;
    const std::uint64_t space = std::uint64_t{1} << host_bits;
    const std::uint32_t f = static_cast<std::uint32_t>(std::min<std::uint64_t>(spec.fanout, space));
    std::unordered_set<std::uint32_t> chosen;
    while (chosen.size() < f) chosen.insert(static_cast<std::uint32_t>(rng() % space));
    std::vector<std::uint32_t> addrs(chosen.begin(), chosen.end());
    std::sort(addrs.begin(), addrs.end());
    for (std::uint32_t& a : addrs) a |= c.bits;
    suffix_addrs[i] = std::move(addrs);
  }

  std::vector<std::uint32_t> rest_keys;
  std::vector<double> rest_cdf;
  {
    std::vector<std::pair<std::uint32_t, Value>> rest;
    for (const auto& [k, m] : mass)
      if (!top_index.contains(k)) rest.emplace_back(k, m);
    std::sort(rest.begin(), rest.end());
    double acc = 0.0;
    for (const auto& [k, m] : rest) {
      acc += static_cast<double>(m);
      rest_keys.push_back(k);
      rest_cdf.push_back(acc);
    }
  }

  const double r0 = static_cast<double>(top_mass) / static_cast<double>(total);
  const double r = spec.replace_ratio;
  double to_top = 0.0, to_rest = 0.0;
  if (r > r0 && r0 < 1.0) to_top = (r - r0) / (1.0 - r0);
  if (r < r0 && !rest_keys.empty()) to_rest = (r0 - r) / r0;

  auto pick = [&](const std::vector<double>& cdf) {
    const double u = unit_uniform(rng) * cdf.back();
    return static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                 static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };

  Trace out;
  out.reserve(base.size());
  for (const PacketRecord& rec : base) {
    const auto it = top_index.find(rec.src_ip);
    std::optional<std::uint32_t> top;
    std::uint32_t ip = rec.src_ip;
    if (it != top_index.end()) {
      top = it->second;
      if (to_rest > 0.0 && unit_uniform(rng) < to_rest) {
        top.reset();
        ip = rest_keys[pick(rest_cdf)];
      }
    } else if (to_top > 0.0 && unit_uniform(rng) < to_top) {
      top = static_cast<std::uint32_t>(pick(top_cdf));
    }
    if (top) {
      const auto& addrs = suffix_addrs[*top];
      ip = addrs[rng() % addrs.size()];
    }
    out.push_back({ip, rec.value});
  }

  if (info) {
    info->cluster_prefixes = clusters;
    info->replaced_keys.clear();
    for (const auto& [k, m] : ranked) info->replaced_keys.push_back(k);
    info->new_addresses.clear();
    for (const auto& a : suffix_addrs) info->new_addresses.insert(a.begin(), a.end());
    info->base_ratio = r0;
  }
  return out;
}

}  // namespace rsketch
