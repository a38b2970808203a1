#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hopgate/checkpoint.hpp"
#include "hopgate/cost_model.hpp"
#include "hopgate/gate.hpp"

namespace hopgate {

struct EvalOptions {
  GateMode scenario = GateMode::Global;
  std::optional<double> theta_zs;
  AppMode mode = AppMode::PreEmbedded;
  bool avoid_reembed = false;
  bool use_pruned = true;
  /// Diagnostic: bypass the gate and force every query down one route.
  std::optional<Route> force_route;
  std::uint64_t seed = 0;  // recorded in the report for provenance
};

/// Per-task (and pooled, task_id 0) comparison of the plain full-depth
/// model against gated+pruned(+zero-skip) inference.
struct TaskReport {
  unsigned task_id = 0;
  std::size_t n_queries = 0;
  double accuracy_baseline = 0.0;
  double accuracy_adaptive = 0.0;
  double easy_ratio = 0.0;       // zeta_E
  double false_positive = 0.0;   // Hard-labelled routed Easy / Hard-labelled
  double false_negative = 0.0;   // Easy-labelled routed Hard / Easy-labelled
  double pruned_ratio = 0.0;     // P_R, blended over the routes taken
  std::optional<double> skip_ratio_easy;  // Psi_E
  std::optional<double> skip_ratio_hard;  // Psi_H
  double flops_baseline_mean = 0.0;
  double flops_adaptive_mean = 0.0;
  double cr_analytic = 0.0;
  double cr_measured = 0.0;
  double gap_rel = 0.0;
  std::uint64_t wall_ns_baseline = 0;  // mean per query
  std::uint64_t wall_ns_adaptive = 0;
};

struct RunReport {
  std::vector<TaskReport> tasks;
  TaskReport pooled;
  std::string scenario;
  std::string mode;
  std::optional<double> theta_zs;
  std::uint64_t seed = 0;
};

RunReport evaluate(const Checkpoint& ckpt, const std::vector<Sample>& test,
                   const GateConfig& gate, const EvalOptions& options);

std::string report_json(const RunReport& report);
std::string report_csv(const RunReport& report);
RunReport report_from_json(const std::string& text);
std::vector<CostTableRow> report_cost_rows(const RunReport& report);

/// Wall-clock comparison of the two serving paths. Story embedding runs
/// once per query outside the timed region (pre-embedded serving); the
/// timers cover hops, gate and answer head only.
struct BenchOptions {
  std::size_t repeats = 11;
  std::size_t limit = 200;
  std::optional<std::size_t> inflate_ns;
  GateMode scenario = GateMode::Global;
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::uint64_t baseline_median_ns = 0;  // whole-pass totals
  std::uint64_t adaptive_median_ns = 0;
  double easy_ratio = 0.0;
  std::size_t n_queries = 0;
  std::size_t repeats = 0;
  std::size_t n_s = 0;
  std::uint64_t seed = 0;
};

BenchReport bench(const Checkpoint& ckpt, const std::vector<Sample>& test,
                  const GateConfig& gate, const BenchOptions& options);

std::string bench_json(const BenchReport& report);

}  // namespace hopgate
