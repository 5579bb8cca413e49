#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rsketch {

enum class GranularityKind { bit, byte };

// Aggregation granularity of a 1D prefix hierarchy. Keys occupy the low
// `width_bits` of a 32-bit word; narrower widths exist so small domains can be
// enumerated exhaustively in tests.
struct Granularity {
  GranularityKind kind = GranularityKind::bit;
  unsigned width_bits = 32;

  constexpr unsigned unit_bits() const { return kind == GranularityKind::bit ? 1u : 8u; }
  constexpr unsigned depth() const { return width_bits / unit_bits(); }
  constexpr unsigned prefix_length(unsigned layer) const { return width_bits - layer * unit_bits(); }

  // Inverse of prefix_length. Throws if the prefix does not fall on a unit boundary.
  unsigned layer_for_prefix(unsigned prefix_len) const {
    if (prefix_len > width_bits || (width_bits - prefix_len) % unit_bits() != 0)
      throw std::invalid_argument("prefix length " + std::to_string(prefix_len) +
                                  " is not a layer of this hierarchy");
    return (width_bits - prefix_len) / unit_bits();
  }

  void validate() const {
    if (width_bits == 0 || width_bits > 32)
      throw std::invalid_argument("width_bits must be in [1, 32]");
    if (width_bits % unit_bits() != 0)
      throw std::invalid_argument("width_bits must be a multiple of the granularity unit");
  }

  static constexpr Granularity ipv4_bits() { return {GranularityKind::bit, 32}; }
  static constexpr Granularity ipv4_bytes() { return {GranularityKind::byte, 32}; }

  friend constexpr bool operator==(const Granularity&, const Granularity&) = default;
};

// A (possibly generalized) flow identifier. `layer` 0 is fully specified, the
// hierarchy depth d is the "*" root. Bits below the retained prefix are zero
// whenever the key was produced by a Hierarchy.
struct FlowKey {
  std::uint32_t bits = 0;
  std::uint8_t layer = 0;

  friend constexpr bool operator==(const FlowKey&, const FlowKey&) = default;
  friend constexpr auto operator<=>(const FlowKey& a, const FlowKey& b) {
    if (auto c = a.layer <=> b.layer; c != 0) return c;
    return a.bits <=> b.bits;
  }
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::uint64_t x = (std::uint64_t{k.layer} << 32) | k.bits;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

// masks[j] keeps the prefix that survives generalization to layer j.
class PrefixMaskTable {
 public:
  explicit PrefixMaskTable(const Granularity& g) : depth_(g.depth()) {
    g.validate();
    const std::uint32_t full = g.width_bits == 32 ? ~0u : ((1u << g.width_bits) - 1u);
    for (unsigned j = 0; j <= depth_; ++j) {
      const unsigned cleared = j * g.unit_bits();
      const std::uint32_t low = cleared >= 32 ? ~0u : ((1u << cleared) - 1u);
      masks_[j] = full & ~low;
    }
  }

  std::uint32_t operator[](unsigned layer) const { return masks_[layer]; }
  unsigned depth() const { return depth_; }

 private:
  unsigned depth_;
  std::array<std::uint32_t, 33> masks_{};
};

// Generalization and ancestry over one prefix hierarchy. Cheap to copy.
class Hierarchy {
 public:
  explicit Hierarchy(Granularity g = Granularity::ipv4_bits()) : gran_(g), masks_(g) {}

  const Granularity& granularity() const { return gran_; }
  unsigned depth() const { return masks_.depth(); }
  std::uint32_t mask(unsigned layer) const { return masks_[layer]; }

  FlowKey key(std::uint32_t bits, unsigned layer = 0) const {
    if (layer > depth()) throw std::out_of_range("layer exceeds hierarchy depth");
    return FlowKey{bits & masks_[layer], static_cast<std::uint8_t>(layer)};
  }

  FlowKey generalize(const FlowKey& k, unsigned target_layer) const {
    if (target_layer > depth()) throw std::out_of_range("target layer exceeds hierarchy depth");
    if (target_layer < k.layer)
      throw std::invalid_argument("cannot specialize a key to a lower layer");
    return FlowKey{k.bits & masks_[target_layer], static_cast<std::uint8_t>(target_layer)};
  }

  // Hot-path variant: no range checks.
  FlowKey generalize_unchecked(std::uint32_t bits, unsigned target_layer) const {
    return FlowKey{bits & masks_[target_layer], static_cast<std::uint8_t>(target_layer)};
  }

  // True iff q generalizes p (reflexive).
  bool is_ancestor(const FlowKey& q, const FlowKey& p) const {
    return q.layer >= p.layer && q.layer <= depth() && (p.bits & masks_[q.layer]) == q.bits;
  }

  unsigned prefix_length(const FlowKey& k) const { return gran_.prefix_length(k.layer); }

  // "a.b.c.d/p"
  std::string format(const FlowKey& k) const {
    std::string out;
    for (int shift = 24; shift >= 0; shift -= 8) {
      out += std::to_string((k.bits >> shift) & 0xffu);
      out += shift ? '.' : '/';
    }
    out += std::to_string(prefix_length(k));
    return out;
  }

  FlowKey parse(std::string_view text) const {
    const auto slash = text.find('/');
    const std::uint32_t ip = parse_ipv4(text.substr(0, slash));
    unsigned plen = gran_.width_bits;
    if (slash != std::string_view::npos) {
      const auto tail = text.substr(slash + 1);
      auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), plen);
      if (ec != std::errc{} || ptr != tail.data() + tail.size())
        throw std::invalid_argument("bad prefix length in '" + std::string(text) + "'");
    }
    const unsigned layer = gran_.layer_for_prefix(plen);
    if (gran_.width_bits < 32 && (ip >> gran_.width_bits) != 0)
      throw std::invalid_argument("address does not fit the hierarchy width");
    if ((ip & ~masks_[layer]) != 0)
      throw std::invalid_argument("host bits set below prefix in '" + std::string(text) + "'");
    return FlowKey{ip, static_cast<std::uint8_t>(layer)};
  }

  static std::uint32_t parse_ipv4(std::string_view s) {
    std::uint32_t ip = 0;
    const char* p = s.data();
    const char* end = s.data() + s.size();
    for (int octet = 0; octet < 4; ++octet) {
      unsigned v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{} || v > 255 || next == p)
        throw std::invalid_argument("malformed IPv4 address '" + std::string(s) + "'");
      ip = (ip << 8) | v;
      p = next;
      if (octet < 3) {
        if (p == end || *p != '.')
          throw std::invalid_argument("malformed IPv4 address '" + std::string(s) + "'");
        ++p;
      }
    }
    if (p != end) throw std::invalid_argument("trailing characters in '" + std::string(s) + "'");
    return ip;
  }

  static std::string format_ipv4(std::uint32_t ip) {
    std::string out;
    for (int shift = 24; shift >= 0; shift -= 8) {
      out += std::to_string((ip >> shift) & 0xffu);
      if (shift) out += '.';
    }
    return out;
  }

 private:
  Granularity gran_;
  PrefixMaskTable masks_;
};

}  // namespace rsketch
