#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include <rsketch/oracle.hpp>
#include <rsketch/traces.hpp>

using namespace rsketch;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("rsketch_test_" + std::to_string(::getpid()) + "_" + name);
}

Trace random_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Trace t(n);
  for (auto& r : t) r = {static_cast<std::uint32_t>(rng()), 1 + static_cast<std::uint32_t>(rng() % 1500)};
  return t;
}

std::string error_of(const std::string& path, TraceFormat fmt) {
  try {
    read_trace(path, fmt);
  } catch (const TraceError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(TraceIO, ParsesCsvLine) {
  const auto p = temp_file("one.csv");
  std::ofstream(p) << "192.168.0.1,1\n\n10.0.0.7,1500\r\n";
  const Trace t = read_trace(p, TraceFormat::csv);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0], (PacketRecord{0xC0A80001u, 1}));
  EXPECT_EQ(t[1], (PacketRecord{0x0A000007u, 1500}));
  fs::remove(p);
}

TEST(TraceIO, EmptyFile) {
  for (TraceFormat f : {TraceFormat::csv, TraceFormat::bin}) {
    const auto p = temp_file("empty");
    std::ofstream(p).close();
    EXPECT_TRUE(read_trace(p, f).empty());
    fs::remove(p);
  }
}

TEST(TraceIO, RoundTrip) {
  const Trace t = random_records(100000, 5);
  for (TraceFormat f : {TraceFormat::csv, TraceFormat::bin}) {
    const auto p = temp_file("rt." + to_string(f));
    write_trace(p.string(), t, f);
    EXPECT_EQ(read_trace(p, f), t);
    fs::remove(p);
  }
}

TEST(TraceIO, BinaryIsLittleEndianPairs) {
  std::ostringstream os;
  write_trace(os, {{0x01020304u, 5}}, TraceFormat::bin);
  EXPECT_EQ(os.str(), std::string("\x04\x03\x02\x01\x05\x00\x00\x00", 8));
}

TEST(TraceIO, ErrorsCarryLocation) {
  const auto csv = temp_file("bad.csv");
  std::ofstream(csv) << "1.2.3.4,1\n1.2.3.5,2\n1.2.3,1\n";
  EXPECT_NE(error_of(csv, TraceFormat::csv).find("line 3"), std::string::npos);
  std::ofstream(csv) << "1.2.3.4,0\n";
  EXPECT_NE(error_of(csv, TraceFormat::csv).find("line 1"), std::string::npos);
  std::ofstream(csv) << "1.2.3.4;1\n";
  EXPECT_NE(error_of(csv, TraceFormat::csv).find("line 1"), std::string::npos);
  fs::remove(csv);

  const auto bin = temp_file("bad.bin");
  {
    std::ofstream os(bin, std::ios::binary);
    write_trace(os, random_records(3, 1), TraceFormat::bin);
    os.write("\x01\x02\x03", 3);
  }
  EXPECT_NE(error_of(bin, TraceFormat::bin).find("byte offset 24"), std::string::npos);
  fs::remove(bin);
  EXPECT_THROW(read_trace("/nonexistent/trace.csv", TraceFormat::csv), TraceError);
}

TEST(Zipf, SingleKeyAndDeterminism) {
  const Trace one = gen_zipf({1.2, 1, 1000, 3});
  for (const auto& r : one) EXPECT_EQ(r.src_ip, one[0].src_ip);
  EXPECT_EQ(gen_zipf({1.1, 5000, 20000, 9}), gen_zipf({1.1, 5000, 20000, 9}));
  EXPECT_NE(gen_zipf({1.1, 5000, 20000, 9}), gen_zipf({1.1, 5000, 20000, 10}));
  EXPECT_THROW(gen_zipf({0.0, 10, 10, 1}), std::invalid_argument);
  EXPECT_THROW(gen_zipf({1.0, 0, 10, 1}), std::invalid_argument);
}

TEST(Zipf, TopFrequencyMatchesHarmonicSum) {
  const ZipfSpec spec{1.03, 100000, 1000000, 21};
  double harmonic = 0.0;
  for (std::uint32_t k = 1; k <= spec.keys; ++k) harmonic += std::pow(k, -spec.skew);
  std::unordered_map<std::uint32_t, std::uint64_t> counts;
  for (const auto& r : gen_zipf(spec)) ++counts[r.src_ip];
  std::uint64_t top = 0;
  for (const auto& [k, c] : counts) top = std::max(top, c);
  const double expected = 1.0 / harmonic;
  const double got = static_cast<double>(top) / static_cast<double>(spec.length);
  EXPECT_NEAR(got, expected, 0.2 * expected);
}

TEST(Zipf, SubnetsConfineKeys) {
  ZipfSpec spec{1.0, 20000, 100000, 4};
  spec.subnets = 100;
  spec.subnet_prefix = 24;
  std::unordered_set<std::uint32_t> nets, keys;
  for (const auto& r : gen_zipf(spec)) {
    nets.insert(r.src_ip >> 8);
    keys.insert(r.src_ip);
  }
  EXPECT_LE(nets.size(), 100u);
  EXPECT_GT(keys.size(), 1000u);
  spec.subnets = 10;  // 2000 keys per /24 cannot fit
  EXPECT_THROW(gen_zipf(spec), std::invalid_argument);
}

class SkewModify : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { base_ = new Trace(gen_zipf({1.0, 100000, 1000000, 5})); }
  static void TearDownTestSuite() { delete base_; }
  static Trace* base_;
};
Trace* SkewModify::base_ = nullptr;

TEST_F(SkewModify, PreservesLengthAndValues) {
  Trace base = *base_;
  std::mt19937_64 rng(1);
  for (auto& r : base) r.value = 1 + rng() % 100;
  const Trace out = skew_modify(base, SynthSpec{});
  ASSERT_EQ(out.size(), base.size());
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i].value, base[i].value);
}

TEST_F(SkewModify, DisabledIsIdentity) {
  SynthSpec s;
  s.top_k = 0;
  EXPECT_EQ(skew_modify(*base_, s), *base_);
}

TEST_F(SkewModify, ReplacedMassFollowsRatio) {
  for (double ratio : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    SynthSpec s;
    s.replace_ratio = ratio;
    SkewModifyInfo info;
    const Trace out = skew_modify(*base_, s, &info);
    std::size_t moved = 0;
    for (const auto& r : out) moved += info.new_addresses.contains(r.src_ip);
    EXPECT_NEAR(static_cast<double>(moved) / static_cast<double>(out.size()), ratio, 0.01);
  }
}

TEST_F(SkewModify, HeavinessMovesToAggregationPrefixes) {
  SynthSpec s;
  SkewModifyInfo info;
  const Trace out = skew_modify(*base_, s, &info);
  const Hierarchy h;
  ExactCounts exact;
  for (const auto& r : out) exact.add(r.src_ip, r.value);
  const double theta = 0.001;
  for (const FlowKey& k : exact_layer_hh(exact, theta, h, 0)) {
    EXPECT_FALSE(info.new_addresses.contains(k.bits)) << h.format(k);
    EXPECT_EQ(std::count(info.replaced_keys.begin(), info.replaced_keys.end(), k.bits), 0);
  }
  std::size_t heavy_clusters = 0;
  for (const FlowKey& c : info.cluster_prefixes) {
    const unsigned plen = h.prefix_length(c);
    EXPECT_GE(plen, 20u);
    EXPECT_LE(plen, 24u);
    heavy_clusters += exact_layer_hh(exact, theta, h, c.layer).contains(c);
  }
  EXPECT_GE(heavy_clusters, info.cluster_prefixes.size() * 9 / 10);
}

TEST_F(SkewModify, PrefixLengthsUniform) {
  SynthSpec s;
  s.clusters = 1000;
  SkewModifyInfo info;
  skew_modify(*base_, s, &info);
  std::array<double, 5> n{};
  for (const FlowKey& c : info.cluster_prefixes) n[32 - c.layer - 20] += 1;
  const double e = static_cast<double>(info.cluster_prefixes.size()) / 5.0;
  double chi2 = 0.0;
  for (double x : n) chi2 += (x - e) * (x - e) / e;
  EXPECT_LT(chi2, 13.277);  // chi-square, 4 dof, alpha 0.01
}

TEST_F(SkewModify, Validation) {
  SynthSpec s;
  s.replace_ratio = 0.0;
  EXPECT_THROW(skew_modify(*base_, s), std::invalid_argument);
  s = SynthSpec{};
  s.min_prefix = 25;
  EXPECT_THROW(skew_modify(*base_, s), std::invalid_argument);
  s = SynthSpec{};
  s.top_k = 50;
  EXPECT_THROW(skew_modify(gen_zipf({1.0, 10, 100, 1}), s), std::invalid_argument);
}
