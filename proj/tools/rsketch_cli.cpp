// rsketch_cli: trace generation, experiments, connection ablation and
// ground-truth export.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <rsketch/experiment.hpp>

namespace fs = std::filesystem;
using namespace rsketch;

namespace {

struct TraceFlags {
  std::string trace_path;
  std::string format = "csv";
  double zipf_skew = 1.0;
  std::uint32_t keys = 100'000;
  std::uint64_t length = 1'000'000;
  std::uint32_t subnets = 0;
  unsigned subnet_prefix = 24;
  bool skew_modify = false;
  SynthSpec synth;
};

void add_trace_flags(CLI::App* app, TraceFlags& f) {
  app->add_option("--trace", f.trace_path, "Input trace file (default: synthetic)");
  app->add_option("--format", f.format, "Trace format")->check(CLI::IsMember({"csv", "bin"}));
  app->add_option("--zipf-skew", f.zipf_skew, "Zipf exponent of the synthetic base trace");
  app->add_option("--keys", f.keys, "Distinct keys in the synthetic base trace");
  app->add_option("--length", f.length, "Records in the synthetic base trace");
  app->add_option("--subnets", f.subnets, "Subnets the synthetic keys are dealt into (0: none)");
  app->add_option("--subnet-prefix", f.subnet_prefix, "Prefix length of those subnets");
  app->add_flag("--skew-modify", f.skew_modify, "Apply the top-K skew modification");
  app->add_option("--top-k", f.synth.top_k, "Flows replaced by the skew modification");
  app->add_option("--replace-ratio", f.synth.replace_ratio, "Target mass of the replaced flows");
  app->add_option("--min-prefix", f.synth.min_prefix, "Shortest aggregation prefix");
  app->add_option("--max-prefix", f.synth.max_prefix, "Longest aggregation prefix");
  app->add_option("--fanout", f.synth.fanout, "Suffix addresses per replaced flow");
  app->add_option("--clusters", f.synth.clusters, "Aggregation prefixes (0: top-k / 10)");
}

void apply_trace_flags(const TraceFlags& f, ExperimentConfig& cfg) {
  cfg.trace_format = trace_format_from_string(f.format);
  if (!f.trace_path.empty()) cfg.trace_path = f.trace_path;
  cfg.synthetic.zipf.skew = f.zipf_skew;
  cfg.synthetic.zipf.keys = f.keys;
  cfg.synthetic.zipf.length = f.length;
  cfg.synthetic.zipf.subnets = f.subnets;
  cfg.synthetic.zipf.subnet_prefix = f.subnet_prefix;
  if (f.skew_modify) cfg.synthetic.skew = f.synth;
}

struct ExperimentFlags {
  TraceFlags trace;
  std::vector<std::string> algorithms{"residual_coco"};
  double memory_kb = 256;
  std::vector<unsigned> levels{32, 12};
  std::uint32_t g = 2;
  double beta = 0.8;
  Value expected_window = 0;
  std::vector<double> thetas{0.001};
  std::vector<std::uint64_t> seeds;
  std::string unit = "packets";
  unsigned upper_layer_min = 8;
  bool no_connection = false;
  std::string config_file;
  std::string out_dir = ".";
};

void add_experiment_flags(CLI::App* app, ExperimentFlags& f, bool seed_required) {
  add_trace_flags(app, f.trace);
  app->add_option("--algorithms", f.algorithms,
                  "residual_coco, residual_uss, coco, uss, per_layer");
  app->add_option("--memory-kb", f.memory_kb, "Sketch memory in KB");
  app->add_option("--levels", f.levels, "Level prefix lengths");
  app->add_option("--g", f.g, "Hashed arrays per coco block");
  app->add_option("--beta", f.beta, "Level threshold factor");
  app->add_option("--expected-window", f.expected_window, "Expected window size (0: trace size)");
  app->add_option("--theta", f.thetas, "HHH thresholds");
  auto* seed = app->add_option("--seed", f.seeds, "Seeds (trace and sketch)");
  if (seed_required) seed->required();
  app->add_option("--unit", f.unit, "Counting unit")->check(CLI::IsMember({"packets", "bytes"}));
  app->add_option("--upper-layer-min", f.upper_layer_min, "First layer counted by upper_are");
  app->add_flag("--no-connection", f.no_connection, "Disable the residual connection");
  app->add_option("--config", f.config_file, "JSON config; its fields override flags")
      ->check(CLI::ExistingFile);
  app->add_option("--out-dir", f.out_dir, "Output directory");
}

ExperimentConfig build_config(const ExperimentFlags& f) {
  ExperimentConfig cfg;
  apply_trace_flags(f.trace, cfg);
  cfg.algorithms.clear();
  for (const std::string& a : f.algorithms) cfg.algorithms.push_back(algorithm_from_string(a));
  cfg.sketch.memory_kb = f.memory_kb;
  cfg.sketch.levels = SketchConfig::levels_from_prefixes(f.levels);
  cfg.sketch.g = f.g;
  cfg.sketch.beta = f.beta;
  cfg.sketch.expected_window = f.expected_window;
  cfg.sketch.residual_connection = !f.no_connection;
  cfg.thetas = f.thetas;
  cfg.seeds = f.seeds;
  cfg.unit = f.unit == "bytes" ? CountingUnit::bytes : CountingUnit::packets;
  cfg.upper_layer_min = f.upper_layer_min;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    merge_experiment_json(nlohmann::json::parse(in), cfg);
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const std::vector<std::string>& outputs) {
  nlohmann::json m{{"command", command},
                   {"config", experiment_to_json(cfg)},
                   {"config_hash", fnv1a_hex(experiment_to_json(cfg).dump())},
                   {"outputs", outputs}};
  open_out(dir / "manifest.json") << m.dump(2) << '\n';
}

int cmd_gen(const TraceFlags& f, std::uint64_t seed, const std::string& out) {
  ExperimentConfig cfg;
  apply_trace_flags(f, cfg);
  cfg.trace_path.reset();
  const Trace t = materialize_trace(cfg, seed);
  const TraceFormat fmt = trace_format_from_string(f.format);
  write_trace(out, t, fmt);
  nlohmann::json m = experiment_to_json(cfg)["trace"];
  m["seed"] = seed;
  m["format"] = f.format;
  m["records"] = t.size();
  m["file"] = fs::path(out).filename().string();
  open_out(out + ".manifest.json") << m.dump(2) << '\n';
  std::cerr << "wrote " << t.size() << " records to " << out << '\n';
  return 0;
}

int cmd_run(const ExperimentFlags& f) {
  const ExperimentConfig cfg = build_config(f);
  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  const auto rows = run_experiment(cfg);
  {
    auto os = open_out(dir / "results.csv");
    write_results_csv(os, rows);
  }
  open_out(dir / "results.json") << results_to_json(rows).dump(2) << '\n';
  write_manifest(dir, "run", cfg, {"results.csv", "results.json"});
  write_results_csv(std::cout, rows);
  return 0;
}

int cmd_ablate(const ExperimentFlags& f, unsigned reps, unsigned timing_repeats) {
  const ExperimentConfig cfg = build_config(f);
  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  const auto rows = run_connection_ablation(cfg, reps, timing_repeats);
  {
    auto os = open_out(dir / "ablation.csv");
    write_ablation_csv(os, rows);
  }
  const PairedSummary s = summarize_pairs(rows);
  const double crit = t_critical_95(s.n > 0 ? s.n - 1 : 0);
  nlohmann::json summary{{"pairs", s.n},
                         {"mean_diff_mpps", s.mean_diff},
                         {"sd_diff_mpps", s.sd_diff},
                         {"t_stat", s.t_stat},
                         {"t_critical_95", crit},
                         {"with_faster_95", s.t_stat > crit},
                         {"relative_gain", s.relative_gain}};
  open_out(dir / "ablation_summary.json") << summary.dump(2) << '\n';
  write_manifest(dir, "ablate", cfg, {"ablation.csv", "ablation_summary.json"});
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_oracle(const ExperimentFlags& f, const std::string& out) {
  const ExperimentConfig cfg = build_config(f);
  if (cfg.seeds.size() != 1 || cfg.thetas.size() != 1)
    throw std::invalid_argument("oracle export takes exactly one seed and one theta");
  const Hierarchy h(cfg.sketch.granularity);
  const PreparedTrace trace =
      prepare(materialize_trace(cfg, cfg.seeds[0]), cfg.sketch.granularity, cfg.unit);
  ExactCounts exact(cfg.oracle_cap);
  for (std::size_t i = 0; i < trace.keys.size(); ++i) exact.add(trace.keys[i], trace.values[i]);
  const auto hhh = exact_hhh(exact, cfg.thetas[0], h);
  if (out == "-") {
    write_hhh_csv(std::cout, h, hhh);
  } else {
    auto os = open_out(out);
    write_hhh_csv(os, h, hhh);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical heavy hitter sketch benchmarks"};
  app.require_subcommand(1);

  TraceFlags gen_flags;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic trace");
  add_trace_flags(gen, gen_flags);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("-o,--output", gen_out, "Output trace file")->required();

  ExperimentFlags run_flags;
  auto* run = app.add_subcommand("run", "Run accuracy and throughput experiments");
  add_experiment_flags(run, run_flags, true);

  ExperimentFlags abl_flags;
  unsigned reps = 10;
  unsigned timing_repeats = 5;
  auto* abl = app.add_subcommand("ablate", "Paired with/without residual connection timing");
  add_experiment_flags(abl, abl_flags, false);
  abl->add_option("--reps", reps, "Paired runs per seed and theta");
  abl->add_option("--timing-repeats", timing_repeats, "Replays per timed side; the fastest counts");

  ExperimentFlags ora_flags;
  std::string ora_out = "-";
  auto* ora = app.add_subcommand("oracle", "Export the exact HHH set as CSV");
  add_experiment_flags(ora, ora_flags, false);
  ora->add_option("-o,--output", ora_out, "Output CSV ('-' for stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(gen_flags, gen_seed, gen_out);
    if (*run) return cmd_run(run_flags);
    if (*abl) {
      if (abl_flags.seeds.empty()) abl_flags.seeds = {1};
      return cmd_ablate(abl_flags, reps, timing_repeats);
    }
    if (*ora) {
      if (ora_flags.seeds.empty()) ora_flags.seeds = {1};
      return cmd_oracle(ora_flags, ora_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
