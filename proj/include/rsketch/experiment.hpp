#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "metrics.hpp"
#include "oracle.hpp"
#include "residual_sketch.hpp"
#include "traces.hpp"

namespace rsketch {

enum class Algorithm { residual_coco, residual_uss, coco, uss, per_layer };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::residual_coco: return "residual_coco";
    case Algorithm::residual_uss: return "residual_uss";
    case Algorithm::coco: return "coco";
    case Algorithm::uss: return "uss";
    case Algorithm::per_layer: return "per_layer";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  for (Algorithm a : {Algorithm::residual_coco, Algorithm::residual_uss, Algorithm::coco,
                      Algorithm::uss, Algorithm::per_layer})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

// Row label used in result tables. The single-level configurations are the
// APK baselines; per_layer stands in for the per-layer HH-based family.
inline std::string baseline_label(Algorithm a) {
  switch (a) {
    case Algorithm::residual_coco: return "Residual+COCO";
    case Algorithm::residual_uss: return "Residual+USS";
    case Algorithm::coco: return "COCO";
    case Algorithm::uss: return "USS";
    case Algorithm::per_layer: return "PerLayer(HH-based stand-in)";
  }
  return "?";
}

enum class CountingUnit { packets, bytes };

struct SyntheticTrace {
  ZipfSpec zipf;
  std::optional<SynthSpec> skew;  // absent: plain Zipf
};

struct ExperimentConfig {
  std::optional<std::string> trace_path;
  TraceFormat trace_format = TraceFormat::csv;
  SyntheticTrace synthetic;
  std::vector<Algorithm> algorithms{Algorithm::residual_coco};
  SketchConfig sketch;  // memory, levels, g, beta, granularity; kind/levels adjusted per algorithm
  std::vector<double> thetas{0.001};
  std::vector<std::uint64_t> seeds;
  CountingUnit unit = CountingUnit::packets;
  unsigned upper_layer_min = 8;
  std::size_t oracle_cap = ExactCounts::kDefaultCardinalityCap;

  void validate() const {
    if (!(sketch.memory_kb >= 1)) throw std::invalid_argument("memory_kb must be >= 1");
    if (thetas.empty()) throw std::invalid_argument("at least one theta is required");
    for (double t : thetas)
      if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("theta values must lie in (0, 1)");
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (algorithms.empty()) throw std::invalid_argument("at least one algorithm is required");
    if (sketch.kind == BlockKind::uss && sketch.g != 1)
      throw std::invalid_argument("config contradiction: uss blocks require g == 1");
  }
};

// Sketch configuration an algorithm actually runs with.
inline SketchConfig sketch_for(const ExperimentConfig& cfg, Algorithm a, std::uint64_t seed) {
  SketchConfig s = cfg.sketch;
  s.seed = seed;
  const unsigned width = s.granularity.width_bits;
  switch (a) {
    case Algorithm::residual_coco: s.kind = BlockKind::coco; break;
    case Algorithm::residual_uss: s.kind = BlockKind::uss; s.g = 1; break;
    case Algorithm::coco: s.kind = BlockKind::coco; s.levels = {{width, {}}}; break;
    case Algorithm::uss: s.kind = BlockKind::uss; s.g = 1; s.levels = {{width, {}}}; break;
    case Algorithm::per_layer: {
      s.kind = BlockKind::coco;
      s.levels.clear();
      const unsigned d = s.granularity.depth();
      for (unsigned j = 0; j < d; ++j) s.levels.push_back({s.granularity.prefix_length(j), {}});
      break;
    }
  }
  return s;
}

inline Trace materialize_trace(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.trace_path) return read_trace(*cfg.trace_path, cfg.trace_format);
  ZipfSpec z = cfg.synthetic.zipf;
  z.seed = seed;
  Trace base = gen_zipf(z);
  if (!cfg.synthetic.skew) return base;
  SynthSpec s = *cfg.synthetic.skew;
  s.seed = seed;
  return skew_modify(base, s);
}

struct RunResult {
  std::string algorithm;
  std::string label;
  std::string config_hash;
  std::uint64_t seed = 0;
  double theta = 0;
  double memory_kb = 0;
  std::string levels;  // prefix lengths, e.g. "32/12"
  bool residual_connection = true;
  std::uint64_t packets = 0;
  Value total = 0;
  std::size_t reported = 0;
  std::size_t true_hhh = 0;
  std::uint64_t block_updates = 0;
  EvalResult eval;
};

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string levels_string(const SketchConfig& s) {
  std::string out;
  for (const auto& lv : s.levels) {
    if (!out.empty()) out += '/';
    out += std::to_string(lv.prefix_len);
  }
  return out;
}

// Trace prepared for the timed loop: keys already in the hierarchy's width,
// values already in the counting unit.
struct PreparedTrace {
  std::vector<std::uint32_t> keys;
  std::vector<Value> values;
  Value total = 0;
};

inline PreparedTrace prepare(const Trace& trace, const Granularity& g, CountingUnit unit) {
  PreparedTrace p;
  p.keys.reserve(trace.size());
  p.values.reserve(trace.size());
  const std::uint32_t wmask = g.width_bits == 32 ? ~0u : ((1u << g.width_bits) - 1u);
  for (const PacketRecord& r : trace) {
    p.keys.push_back(r.src_ip & wmask);
    const Value v = unit == CountingUnit::packets ? 1 : r.value;
    p.values.push_back(v);
    p.total += v;
  }
  return p;
}

struct TimedRun {
  std::vector<HHHEntry> hhh;
  double seconds = 0;
  std::uint64_t block_updates = 0;
};

// Replays a prepared trace into a fresh sketch; only the insert loop is timed.
// With repeats > 1 the replay runs that many times on fresh sketches and the
// fastest insert loop is kept, which filters out scheduler interference.
inline TimedRun timed_run(const LevelPlan& plan, const PreparedTrace& trace, double theta,
                          unsigned repeats = 1) {
  TimedRun out;
  for (unsigned r = 0; r < std::max(repeats, 1u); ++r) {
    AnySketch sketch = make_sketch(plan);
    std::visit(
        [&](auto& sk) {
          const std::size_t n = trace.keys.size();
          const auto t0 = std::chrono::steady_clock::now();
          for (std::size_t i = 0; i < n; ++i) sk.insert_bits(trace.keys[i], trace.values[i]);
          const auto t1 = std::chrono::steady_clock::now();
          const double secs = std::chrono::duration<double>(t1 - t0).count();
          if (r == 0 || secs < out.seconds) out.seconds = secs;
          if (r == 0) {
            out.block_updates = sk.block_updates();
            if (sk.value_seen() > 0) out.hhh = sk.extract_hhh(theta);
          }
        },
        sketch);
  }
  return out;
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json algos = nlohmann::json::array();
  for (Algorithm a : cfg.algorithms) algos.push_back(to_string(a));
  nlohmann::json j{{"algorithms", algos},
                   {"sketch", to_json(cfg.sketch)},
                   {"thetas", cfg.thetas},
                   {"seeds", cfg.seeds},
                   {"unit", cfg.unit == CountingUnit::packets ? "packets" : "bytes"},
                   {"upper_layer_min", cfg.upper_layer_min}};
  if (cfg.trace_path) {
    j["trace"] = {{"path", *cfg.trace_path}, {"format", to_string(cfg.trace_format)}};
  } else {
    const auto& z = cfg.synthetic.zipf;
    j["trace"] = {{"zipf",
                   {{"skew", z.skew},
                    {"keys", z.keys},
                    {"length", z.length},
                    {"subnets", z.subnets},
                    {"subnet_prefix", z.subnet_prefix}}}};
    if (cfg.synthetic.skew) {
      const auto& s = *cfg.synthetic.skew;
      j["trace"]["skew"] = {{"top_k", s.top_k},       {"replace_ratio", s.replace_ratio},
                            {"min_prefix", s.min_prefix}, {"max_prefix", s.max_prefix},
                            {"fanout", s.fanout},     {"clusters", s.clusters}};
    }
  }
  return j;
}

// Fields absent from `j` keep their current values. Accepts the layout
// produced by experiment_to_json.
inline void merge_experiment_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  if (j.contains("algorithms")) {
    cfg.algorithms.clear();
    for (const auto& a : j.at("algorithms")) cfg.algorithms.push_back(algorithm_from_string(a));
  }
  if (j.contains("sketch")) merge_json(j.at("sketch"), cfg.sketch);
  if (j.contains("thetas")) cfg.thetas = j.at("thetas").get<std::vector<double>>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("unit")) {
    const std::string u = j.at("unit");
    if (u == "packets") cfg.unit = CountingUnit::packets;
    else if (u == "bytes") cfg.unit = CountingUnit::bytes;
    else throw std::invalid_argument("unit must be 'packets' or 'bytes'");
  }
  if (j.contains("upper_layer_min")) cfg.upper_layer_min = j.at("upper_layer_min");
  if (j.contains("oracle_cap")) cfg.oracle_cap = j.at("oracle_cap");
  if (!j.contains("trace")) return;
  const auto& t = j.at("trace");
  if (t.contains("path")) {
    cfg.trace_path = t.at("path").get<std::string>();
    if (t.contains("format")) cfg.trace_format = trace_format_from_string(t.at("format"));
  }
  if (t.contains("zipf")) {
    const auto& z = t.at("zipf");
    auto& spec = cfg.synthetic.zipf;
    if (z.contains("skew")) spec.skew = z.at("skew");
    if (z.contains("keys")) spec.keys = z.at("keys");
    if (z.contains("length")) spec.length = z.at("length");
    if (z.contains("subnets")) spec.subnets = z.at("subnets");
    if (z.contains("subnet_prefix")) spec.subnet_prefix = z.at("subnet_prefix");
  }
  if (t.contains("skew")) {
    const auto& k = t.at("skew");
    SynthSpec s = cfg.synthetic.skew.value_or(SynthSpec{});
    if (k.contains("top_k")) s.top_k = k.at("top_k");
    if (k.contains("replace_ratio")) s.replace_ratio = k.at("replace_ratio");
    if (k.contains("min_prefix")) s.min_prefix = k.at("min_prefix");
    if (k.contains("max_prefix")) s.max_prefix = k.at("max_prefix");
    if (k.contains("fanout")) s.fanout = k.at("fanout");
    if (k.contains("clusters")) s.clusters = k.at("clusters");
    cfg.synthetic.skew = s;
  }
}

// Every (algorithm, theta, seed) combination: build, replay, extract, score.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Hierarchy h(cfg.sketch.granularity);
  std::vector<RunResult> rows;
  for (std::uint64_t seed : cfg.seeds) {
    const PreparedTrace trace = prepare(materialize_trace(cfg, seed), cfg.sketch.granularity, cfg.unit);
    ExactCounts exact(cfg.oracle_cap);
    for (std::size_t i = 0; i < trace.keys.size(); ++i) exact.add(trace.keys[i], trace.values[i]);
    for (double theta : cfg.thetas) {
      const std::vector<HHHEntry> truth = exact_hhh(exact, theta, h);
      for (Algorithm a : cfg.algorithms) {
        const SketchConfig sc = sketch_for(cfg, a, seed);
        const LevelPlan plan = make_plan(sc, theta, std::max<Value>(trace.total, 1));
        const TimedRun run = timed_run(plan, trace, theta);
        RunResult r;
        r.algorithm = to_string(a);
        r.label = baseline_label(a);
        r.config_hash = fnv1a_hex(experiment_to_json(cfg).dump() + r.algorithm);
        r.seed = seed;
        r.theta = theta;
        r.memory_kb = sc.memory_kb;
        r.levels = levels_string(sc);
        r.residual_connection = sc.residual_connection;
        r.packets = trace.keys.size();
        r.total = trace.total;
        r.reported = run.hhh.size();
        r.true_hhh = truth.size();
        r.block_updates = run.block_updates;
        r.eval = evaluate(run.hhh, truth, h.depth(), cfg.upper_layer_min);
        r.eval.throughput_mpps =
            r.packets == 0 || run.seconds <= 0 ? 0.0 : throughput_mpps(r.packets, run.seconds);
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

// Paired with/without residual-connection runs on the same trace.
struct AblationRow {
  std::string algorithm;
  std::uint64_t seed = 0;
  double theta = 0;
  unsigned rep = 0;
  double with_mpps = 0, without_mpps = 0;
  double with_f1 = 0, without_f1 = 0;
  std::uint64_t with_updates = 0, without_updates = 0;
};

struct PairedSummary {
  std::size_t n = 0;
  double mean_diff = 0;   // with - without (Mpps)
  double sd_diff = 0;
  double t_stat = 0;
  double relative_gain = 0;  // mean(with) / mean(without) - 1
};

inline PairedSummary summarize_pairs(const std::vector<AblationRow>& rows) {
  PairedSummary s;
  s.n = rows.size();
  if (s.n == 0) return s;
  double sum_w = 0, sum_wo = 0;
  for (const auto& r : rows) {
    s.mean_diff += r.with_mpps - r.without_mpps;
    sum_w += r.with_mpps;
    sum_wo += r.without_mpps;
  }
  s.mean_diff /= static_cast<double>(s.n);
  for (const auto& r : rows) {
    const double d = r.with_mpps - r.without_mpps - s.mean_diff;
    s.sd_diff += d * d;
  }
  s.sd_diff = s.n > 1 ? std::sqrt(s.sd_diff / static_cast<double>(s.n - 1)) : 0.0;
  s.t_stat = s.sd_diff > 0 ? s.mean_diff / (s.sd_diff / std::sqrt(static_cast<double>(s.n)))
                           : (s.mean_diff > 0 ? INFINITY : 0.0);
  s.relative_gain = sum_wo > 0 ? sum_w / sum_wo - 1.0 : 0.0;
  return s;
}

// One-sided 95% Student-t critical values for 1..30 degrees of freedom.
inline double t_critical_95(std::size_t dof) {
  static constexpr double table[] = {6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860,
                                     1.833, 1.812, 1.796, 1.782, 1.771, 1.761, 1.753, 1.746,
                                     1.740, 1.734, 1.729, 1.725, 1.721, 1.717, 1.714, 1.711,
                                     1.708, 1.706, 1.703, 1.701, 1.699, 1.697};
  if (dof == 0) return INFINITY;
  return dof <= 30 ? table[dof - 1] : 1.645;
}

// Each of the `reps` pairs times both sides as the fastest of timing_repeats
// interleaved replays.
inline std::vector<AblationRow> run_connection_ablation(const ExperimentConfig& cfg, unsigned reps,
                                                        unsigned timing_repeats = 5) {
  cfg.validate();
  const Hierarchy h(cfg.sketch.granularity);
  std::vector<AblationRow> rows;
  for (Algorithm a : cfg.algorithms)
    if (a != Algorithm::residual_coco && a != Algorithm::residual_uss)
      throw std::invalid_argument("connection ablation needs a residual algorithm");
  for (std::uint64_t seed : cfg.seeds) {
    const PreparedTrace trace = prepare(materialize_trace(cfg, seed), cfg.sketch.granularity, cfg.unit);
    ExactCounts exact(cfg.oracle_cap);
    for (std::size_t i = 0; i < trace.keys.size(); ++i) exact.add(trace.keys[i], trace.values[i]);
    for (double theta : cfg.thetas) {
      const auto truth = exact_hhh(exact, theta, h);
      for (Algorithm a : cfg.algorithms) {
        SketchConfig sc = sketch_for(cfg, a, seed);
        sc.residual_connection = true;
        const LevelPlan with_plan = make_plan(sc, theta, std::max<Value>(trace.total, 1));
        sc.residual_connection = false;
        const LevelPlan without_plan = make_plan(sc, theta, std::max<Value>(trace.total, 1));
        for (unsigned rep = 0; rep < reps; ++rep) {
          // Single replays of the two sides alternate, starting side flipping
          // each round, so both see the same machine conditions; each side
          // keeps its fastest replay.
          TimedRun w, wo;
          for (unsigned t = 0; t < std::max(timing_repeats, 1u); ++t) {
            const bool with_first = (rep + t) % 2 == 0;
            for (int side = 0; side < 2; ++side) {
              const bool with = (side == 0) == with_first;
              TimedRun run = timed_run(with ? with_plan : without_plan, trace, theta);
              TimedRun& best = with ? w : wo;
              if (t == 0) {
                best = std::move(run);
              } else if (run.seconds < best.seconds) {
                best.seconds = run.seconds;
              }
            }
          }
          AblationRow r;
          r.algorithm = to_string(a);
          r.seed = seed;
          r.theta = theta;
          r.rep = rep;
          const auto n = trace.keys.size();
          r.with_mpps = n && w.seconds > 0 ? throughput_mpps(n, w.seconds) : 0;
          r.without_mpps = n && wo.seconds > 0 ? throughput_mpps(n, wo.seconds) : 0;
          r.with_f1 = evaluate(w.hhh, truth, h.depth(), cfg.upper_layer_min).f1;
          r.without_f1 = evaluate(wo.hhh, truth, h.depth(), cfg.upper_layer_min).f1;
          r.with_updates = w.block_updates;
          r.without_updates = wo.block_updates;
          rows.push_back(r);
        }
      }
    }
  }
  return rows;
}

// ---- output ---------------------------------------------------------------

inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

inline const char* kResultsCsvHeader =
    "algorithm,label,config_hash,seed,theta,memory_kb,levels,residual_connection,packets,total,"
    "reported,true_hhh,precision,recall,f1,are,upper_are,throughput_mpps,block_updates";

// Accuracy columns are deterministic for a given config and seed; only
// throughput_mpps depends on wall-clock time.
inline void write_results_csv(std::ostream& os, const std::vector<RunResult>& rows) {
  os << kResultsCsvHeader << '\n';
  for (const RunResult& r : rows) {
    os << r.algorithm << ',' << r.label << ',' << r.config_hash << ',' << r.seed << ','
       << fmt_double(r.theta) << ',' << fmt_double(r.memory_kb) << ',' << r.levels << ','
       << (r.residual_connection ? 1 : 0) << ',' << r.packets << ',' << r.total << ','
       << r.reported << ',' << r.true_hhh << ',' << fmt_double(r.eval.precision) << ','
       << fmt_double(r.eval.recall) << ',' << fmt_double(r.eval.f1) << ','
       << fmt_double(r.eval.are) << ',' << fmt_double(r.eval.upper_are) << ','
       << fmt_double(r.eval.throughput_mpps) << ',' << r.block_updates << '\n';
  }
}

inline nlohmann::json results_to_json(const std::vector<RunResult>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const RunResult& r : rows) {
    auto num = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    out.push_back({{"algorithm", r.algorithm},
                   {"label", r.label},
                   {"config_hash", r.config_hash},
                   {"seed", r.seed},
                   {"theta", r.theta},
                   {"memory_kb", r.memory_kb},
                   {"levels", r.levels},
                   {"residual_connection", r.residual_connection},
                   {"packets", r.packets},
                   {"reported", r.reported},
                   {"true_hhh", r.true_hhh},
                   {"precision", r.eval.precision},
                   {"recall", r.eval.recall},
                   {"f1", r.eval.f1},
                   {"are", num(r.eval.are)},
                   {"upper_are", num(r.eval.upper_are)},
                   {"throughput_mpps", r.eval.throughput_mpps},
                   {"per_layer_f1", r.eval.per_layer_f1}});
  }
  return out;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "algorithm,seed,theta,rep,with_mpps,without_mpps,with_f1,without_f1,with_updates,"
        "without_updates\n";
  for (const AblationRow& r : rows)
    os << r.algorithm << ',' << r.seed << ',' << fmt_double(r.theta) << ',' << r.rep << ','
       << fmt_double(r.with_mpps) << ',' << fmt_double(r.without_mpps) << ','
       << fmt_double(r.with_f1) << ',' << fmt_double(r.without_f1) << ',' << r.with_updates
       << ',' << r.without_updates << '\n';
}

}  // namespace rsketch
