#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hhh.hpp"

namespace rsketch {

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double are = 0.0;              // NaN when the query set is empty
  double upper_are = 0.0;        // ARE restricted to upper layers; NaN when empty
  double throughput_mpps = 0.0;
  std::vector<double> per_layer_f1;  // index = layer
};

inline double f1_score(double pr, double rr) {
  return pr + rr == 0.0 ? 0.0 : 2.0 * pr * rr / (pr + rr);
}

// (PR, RR) with membership by (key, layer). reported = Theta, truth = Phi.
// Both empty counts as perfect; exactly one empty scores zero.
inline std::pair<double, double> precision_recall(const std::vector<HHHEntry>& reported,
                                                  const std::vector<HHHEntry>& truth) {
  if (reported.empty() && truth.empty()) return {1.0, 1.0};
  if (reported.empty() || truth.empty()) return {0.0, 0.0};
  std::unordered_set<FlowKey, FlowKeyHash> truth_keys;
  for (const HHHEntry& e : truth) truth_keys.insert(e.key);
  std::unordered_set<FlowKey, FlowKeyHash> rep_keys;
  for (const HHHEntry& e : reported) rep_keys.insert(e.key);
  std::size_t hit = 0;
  for (const FlowKey& k : rep_keys) hit += truth_keys.contains(k);
  return {static_cast<double>(hit) / static_cast<double>(rep_keys.size()),
          static_cast<double>(hit) / static_cast<double>(truth_keys.size())};
}

// Mean relative error of reported conditional counts over the query set
// (default: the true HHH set). Query members missing from `reported` are
// estimated as 0. Throws on an empty query set.
inline double average_relative_error(const std::vector<HHHEntry>& reported,
                                     const std::vector<HHHEntry>& query) {
  if (query.empty()) throw std::invalid_argument("ARE needs a nonempty query set");
  std::unordered_map<FlowKey, Value, FlowKeyHash> est;
  for (const HHHEntry& e : reported) est[e.key] = e.estimated_count;
  double sum = 0.0;
  for (const HHHEntry& q : query) {
    if (q.estimated_count == 0) throw std::invalid_argument("ARE query member with zero true count");
    const auto it = est.find(q.key);
    const double fhat = it == est.end() ? 0.0 : static_cast<double>(it->second);
    const double f = static_cast<double>(q.estimated_count);
    sum += std::fabs(f - fhat) / f;
  }
  return sum / static_cast<double>(query.size());
}

inline double throughput_mpps(std::uint64_t packets, double elapsed_seconds) {
  if (!(elapsed_seconds > 0.0)) throw std::invalid_argument("elapsed time must be positive");
  return static_cast<double>(packets) / elapsed_seconds / 1e6;
}

inline std::vector<HHHEntry> filter_layers(const std::vector<HHHEntry>& v, unsigned lo,
                                           unsigned hi) {
  std::vector<HHHEntry> out;
  for (const HHHEntry& e : v)
    if (e.layer() >= lo && e.layer() <= hi) out.push_back(e);
  return out;
}

// F1 per layer 0..depth, each computed on the layer's slice of both sets.
inline std::vector<double> per_layer_f1(const std::vector<HHHEntry>& reported,
                                        const std::vector<HHHEntry>& truth, unsigned depth) {
  std::vector<double> out(depth + 1);
  for (unsigned j = 0; j <= depth; ++j) {
    const auto [pr, rr] = precision_recall(filter_layers(reported, j, j), filter_layers(truth, j, j));
    out[j] = f1_score(pr, rr);
  }
  return out;
}

inline double min_over_layers(const std::vector<double>& per_layer, unsigned lo, unsigned hi) {
  double m = 1.0;
  for (unsigned j = lo; j <= hi && j < per_layer.size(); ++j) m = std::min(m, per_layer[j]);
  return m;
}

// Accuracy part of an EvalResult. upper_layer_min selects the layers counted
// by upper_are.
inline EvalResult evaluate(const std::vector<HHHEntry>& reported,
                           const std::vector<HHHEntry>& truth, unsigned depth,
                           unsigned upper_layer_min) {
  EvalResult r;
  std::tie(r.precision, r.recall) = precision_recall(reported, truth);
  r.f1 = f1_score(r.precision, r.recall);
  r.are = truth.empty() ? std::nan("") : average_relative_error(reported, truth);
  const auto upper = filter_layers(truth, upper_layer_min, depth);
  r.upper_are = upper.empty() ? std::nan("") : average_relative_error(reported, upper);
  r.per_layer_f1 = per_layer_f1(reported, truth, depth);
  return r;
}

}  // namespace rsketch
