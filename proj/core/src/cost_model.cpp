#include "hopgate/cost_model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace hopgate {

void CostParams::validate() const {
  if (d == 0 || vocab_size == 0 || n_s == 0 || n_w == 0 || hops == 0 || icn_hidden == 0) {
    throw ParameterError("cost parameters must all be >= 1");
  }
  auto rate = [](double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw ParameterError(std::string(name) + " must be in [0, 1]");
    }
  };
  rate(easy_ratio, "easy_ratio");
  rate(pruned_ratio, "pruned_ratio");
  rate(skip_ratio_easy, "skip_ratio_easy");
  rate(skip_ratio_hard, "skip_ratio_hard");
}

namespace opcost {

std::uint64_t query_pe_embedding(std::size_t d, std::size_t n_w) {
  return (2 * static_cast<std::uint64_t>(n_w) - 1) * d;
}
std::uint64_t query_embedding(std::size_t d, std::size_t n_w) {
  return (static_cast<std::uint64_t>(n_w) - 1) * d;
}
std::uint64_t story_pe_embedding(std::size_t d, std::size_t n_s, std::size_t n_w) {
  return static_cast<std::uint64_t>(n_s) * (2 * static_cast<std::uint64_t>(n_w) - 1) * d;
}
std::uint64_t window_key_embedding(std::size_t d, std::size_t n_s, std::size_t n_w) {
  return static_cast<std::uint64_t>(n_s) * (static_cast<std::uint64_t>(n_w) - 1) * d;
}
std::uint64_t inner_product(std::size_t d, std::size_t n_s) {
  return static_cast<std::uint64_t>(n_s) * (2 * static_cast<std::uint64_t>(d) - 1);
}
std::uint64_t softmax_attention(std::size_t n_s) {
  return 13 * static_cast<std::uint64_t>(n_s) - 1;
}
std::uint64_t weighted_sum(std::size_t d, std::size_t n_s) {
  return (2 * static_cast<std::uint64_t>(n_s) - 1) * d;
}
std::uint64_t output_key_sum(std::size_t d) { return d; }
std::uint64_t output_key_generation(std::size_t d) {
  return 2 * static_cast<std::uint64_t>(d) * d - d;
}
std::uint64_t fc_layer(std::size_t d, std::size_t vocab_size) {
  return static_cast<std::uint64_t>(vocab_size) * (2 * static_cast<std::uint64_t>(d) - 1);
}

}  // namespace opcost

std::uint64_t cc_hop(const CostParams& p) {
  p.validate();
  const std::uint64_t d = p.d, n_s = p.n_s, n_w = p.n_w;
  if (p.app_mode == AppMode::Interactive) {
    if (p.variant == Variant::KeyValue) {
      throw ConfigError("no hop cost is defined for interactive key-value serving");
    }
    return n_s * ((4 * n_w + 2) * d + 12) - 1;
  }
  const std::uint64_t conventional = n_s * (4 * d + 12) - 1;
  return p.variant == Variant::KeyValue ? conventional + 2 * d * d : conventional;
}

std::uint64_t cc_total(const CostParams& p) {
  const std::uint64_t embed = p.variant == Variant::KeyValue
                                  ? opcost::query_embedding(p.d, p.n_w)
                                  : opcost::query_pe_embedding(p.d, p.n_w);
  return embed + p.hops * cc_hop(p) + opcost::fc_layer(p.d, p.vocab_size);
}

std::uint64_t icn_overhead(const CostParams& p) {
  return 2 * static_cast<std::uint64_t>(p.icn_hidden) * (p.d + 2) + 25;
}

double cr(const CostParams& p) {
  p.validate();
  const double fc_saving =
      p.pruned_ratio * static_cast<double>(opcost::fc_layer(p.d, p.vocab_size));
  const double hop_saving =
      p.app_mode == AppMode::Interactive
          ? p.easy_ratio * 2.0 * static_cast<double>(cc_hop(p))
          : p.easy_ratio * static_cast<double>(p.hops - 1) * static_cast<double>(cc_hop(p));
  return hop_saving + fc_saving - static_cast<double>(icn_overhead(p));
}

double cr_zero_skip(const CostParams& p) {
  p.validate();
  const double zeta = p.easy_ratio;
  double term;
  if (p.app_mode == AppMode::Interactive) {
    const double base = static_cast<double>(p.d) *
                        (static_cast<double>(p.n_s) * (2.0 * static_cast<double>(p.n_w) + 1.0) - 1.0);
    term = (zeta * p.skip_ratio_easy + (1.0 - zeta) * 3.0 * p.skip_ratio_hard) * base;
  } else {
    const double base = static_cast<double>(opcost::weighted_sum(p.d, p.n_s));
    term = (zeta * p.skip_ratio_easy +
            (1.0 - zeta) * static_cast<double>(p.hops) * p.skip_ratio_hard) *
           base;
  }
  return cr(p) + term;
}

PsiEstimate measure_psi(std::span<const Prediction> predictions) {
  double easy_sum = 0.0, hard_sum = 0.0;
  std::size_t easy_n = 0, hard_n = 0;
  for (const auto& pred : predictions) {
    if (pred.route == Route::Easy) {
      const auto& hop1 = pred.trace.front();
      easy_sum += static_cast<double>(hop1.skipped) / static_cast<double>(hop1.slots);
      ++easy_n;
    } else if (pred.route == Route::Hard) {
      for (const auto& hop : pred.trace) {
        hard_sum += static_cast<double>(hop.skipped) / static_cast<double>(hop.slots);
        ++hard_n;
      }
    }
  }
  PsiEstimate out;
  if (easy_n > 0) out.easy = easy_sum / static_cast<double>(easy_n);
  if (hard_n > 0) out.hard = hard_sum / static_cast<double>(hard_n);
  return out;
}

double overall_skip_ratio(std::span<const Prediction> predictions) {
  std::uint64_t skipped = 0, slots = 0;
  for (const auto& pred : predictions) {
    for (const auto& hop : pred.trace) {
      skipped += hop.skipped;
      slots += hop.slots;
    }
  }
  return slots == 0 ? 0.0 : static_cast<double>(skipped) / static_cast<double>(slots);
}

CrossCheckReport cross_check(const FlopLedger& baseline, const FlopLedger& adaptive,
                             std::size_t n_queries, const CostParams& analytic) {
  if (n_queries == 0) throw ParameterError("cross_check needs at least one query");
  CrossCheckReport report;
  const double base = static_cast<double>(baseline.total());
  const double adapt = static_cast<double>(adaptive.total());
  report.measured_mean_reduction = (base - adapt) / static_cast<double>(n_queries);
  report.analytic_cr = analytic.skip_ratio_easy > 0.0 || analytic.skip_ratio_hard > 0.0
                           ? cr_zero_skip(analytic)
                           : cr(analytic);
  report.abs_gap = std::abs(report.measured_mean_reduction - report.analytic_cr);
  report.rel_gap = report.analytic_cr == 0.0 ? std::numeric_limits<double>::infinity()
                                             : report.abs_gap / std::abs(report.analytic_cr);
  return report;
}

std::string cost_table_csv(const std::vector<CostTableRow>& rows) {
  std::ostringstream out;
  out << "task,mode,scenario,cc_baseline,cc_adaptive_measured,cr_analytic,gap_rel\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.task << ',' << r.mode << ',' << r.scenario << ',' << r.cc_baseline << ','
        << r.cc_adaptive_measured << ',' << r.cr_analytic << ',' << r.gap_rel << '\n';
  }
  return out.str();
}

}  // namespace hopgate
