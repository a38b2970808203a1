#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hopgate/engine.hpp"

namespace hopgate {

/// Everything the closed-form cost expressions consume.
struct CostParams {
  std::size_t d = 40;
  std::size_t vocab_size = 174;
  std::size_t n_s = 50;
  std::size_t n_w = 8;
  std::size_t hops = 3;        // m
  std::size_t icn_hidden = 32;  // L1
  Variant variant = Variant::Conventional;
  AppMode app_mode = AppMode::PreEmbedded;
  double easy_ratio = 0.0;      // zeta_E
  double pruned_ratio = 0.0;    // P_R
  double skip_ratio_easy = 0.0; // Psi_E
  double skip_ratio_hard = 0.0; // Psi_H

  void validate() const;
};

/// Per-operation FLOP costs, one function per cost-table row.
namespace opcost {
std::uint64_t query_pe_embedding(std::size_t d, std::size_t n_w);     // (2nw-1)d
std::uint64_t query_embedding(std::size_t d, std::size_t n_w);        // (nw-1)d
std::uint64_t story_pe_embedding(std::size_t d, std::size_t n_s, std::size_t n_w);
std::uint64_t window_key_embedding(std::size_t d, std::size_t n_s, std::size_t n_w);
std::uint64_t inner_product(std::size_t d, std::size_t n_s);          // ns(2d-1)
std::uint64_t softmax_attention(std::size_t n_s);                     // 13ns-1
std::uint64_t weighted_sum(std::size_t d, std::size_t n_s);           // (2ns-1)d
std::uint64_t output_key_sum(std::size_t d);                          // d
std::uint64_t output_key_generation(std::size_t d);                   // 2d^2-d
std::uint64_t fc_layer(std::size_t d, std::size_t vocab_size);        // V(2d-1)
}  // namespace opcost

/// Cost of one attention-inference hop.
/// Conventional pre-embedded: ns(4d+12)-1; key-value adds 2d^2;
/// interactive (conventional only): ns[(4nw+2)d+12]-1.
std::uint64_t cc_hop(const CostParams& p);

/// Whole-query cost including query embedding, m hops and the full FC:
/// conventional (2nw-1)d + m*cc_hop + V(2d-1); key-value (nw-1)d + ....
std::uint64_t cc_total(const CostParams& p);

/// Gate overhead term 2*L1*(d+2) + 25 used by the reduction formulas.
std::uint64_t icn_overhead(const CostParams& p);

/// Expected per-query computation reduction of gated+pruned inference:
/// pre-embedded  zeta_E*(m-1)*cc_hop + P_R*V(2d-1) - overhead;
/// interactive   zeta_E*2*cc_hop     + P_R*V(2d-1) - overhead.
double cr(const CostParams& p);

/// cr() plus the zero-skipping term:
/// pre-embedded  (zeta*Psi_E + (1-zeta)*m*Psi_H) * (2ns-1)d;
/// interactive   (zeta*Psi_E + (1-zeta)*3*Psi_H) * d*(ns*(2nw+1)-1).
double cr_zero_skip(const CostParams& p);

/// Mean skipped-slot ratios over a batch of predictions: Psi_E over
/// Easy-routed hop-1 traces, Psi_H over every hop of Hard-routed queries.
/// A route class with no members yields an absent value.
struct PsiEstimate {
  std::optional<double> easy;
  std::optional<double> hard;
};
PsiEstimate measure_psi(std::span<const Prediction> predictions);

/// Pooled skipped/slots ratio over every hop of every prediction.
double overall_skip_ratio(std::span<const Prediction> predictions);

/// Analytic-vs-measured comparison for one query set.
struct CrossCheckReport {
  double measured_mean_reduction = 0.0;
  double analytic_cr = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;  // abs_gap / |analytic_cr|, infinity when analytic is 0
};
CrossCheckReport cross_check(const FlopLedger& baseline, const FlopLedger& adaptive,
                             std::size_t n_queries, const CostParams& analytic);

/// Cost-table CSV: task, mode, scenario, cc_baseline, cc_adaptive_measured,
/// cr_analytic, gap_rel.
struct CostTableRow {
  std::string task;
  std::string mode;
  std::string scenario;
  double cc_baseline = 0.0;
  double cc_adaptive_measured = 0.0;
  double cr_analytic = 0.0;
  double gap_rel = 0.0;
};
std::string cost_table_csv(const std::vector<CostTableRow>& rows);

}  // namespace hopgate
