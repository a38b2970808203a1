#include "hopgate/pruner.hpp"

#include <algorithm>
#include <cmath>

namespace hopgate {

void PrunedFC::validate(const Mat& origin) const {
  if (important_indices.empty()) throw ParameterError("PrunedFC: empty index list");
  if (rows.rows() != important_indices.size() || rows.cols() != origin.cols()) {
    throw DimensionError("PrunedFC: row matrix does not match index list");
  }
  std::uint32_t prev = 0;
  bool first = true;
  for (std::size_t r = 0; r < important_indices.size(); ++r) {
    const auto idx = important_indices[r];
    if (!first && idx <= prev) throw ParameterError("PrunedFC: indices not strictly increasing");
    if (idx >= origin.rows()) throw ParameterError("PrunedFC: index out of vocab range");
    if (!std::equal(rows.row(r).begin(), rows.row(r).end(), origin.row(idx).begin())) {
      throw ParameterError("PrunedFC: row does not equal origin row");
    }
    prev = idx;
    first = false;
  }
}

std::set<std::uint32_t> find_unused(const std::set<std::uint32_t>& train_labels,
                                    std::uint32_t vocab_size) {
  std::set<std::uint32_t> unused;
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    if (!train_labels.contains(i)) unused.insert(i);
  }
  unused.insert(0);  // answers are never the padding token
  return unused;
}

std::set<std::uint32_t> find_unimportant(const Mat& w, const PruneParams& params) {
  if (params.theta_p < 0) throw ParameterError("theta_p must be >= 0");
  if (params.n_p > w.cols()) {
    throw ParameterError("n_p = " + std::to_string(params.n_p) + " exceeds row width " +
                         std::to_string(w.cols()));
  }
  std::set<std::uint32_t> out;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    std::size_t small = 0;
    for (double x : w.row(r)) {
      if (std::abs(x) < params.theta_p) ++small;
    }
    if (small >= params.n_p) out.insert(static_cast<std::uint32_t>(r));
  }
  return out;
}

PrunedFC prune(const Mat& w, const std::set<std::uint32_t>& drop,
               const std::set<std::uint32_t>& keep_labels) {
  std::vector<std::uint32_t> kept;
  for (std::uint32_t r = 0; r < w.rows(); ++r) {
    if (drop.contains(r) && !keep_labels.contains(r)) continue;
    kept.push_back(r);
  }
  if (kept.empty()) throw ParameterError("prune would drop every row");

  PrunedFC pfc{Mat(kept.size(), w.cols()), kept};
  for (std::size_t r = 0; r < kept.size(); ++r) {
    std::copy(w.row(kept[r]).begin(), w.row(kept[r]).end(), pfc.rows.row(r).begin());
  }
  return pfc;
}

PrunedOutput pruned_output(const PrunedFC& pfc, const Vec& u_out, FlopLedger& ledger) {
  PrunedOutput out;
  out.logits = matvec(pfc.rows, u_out, ledger, FlopCategory::Fc);
  out.answer_id = pfc.important_indices[argmax(out.logits)];
  return out;
}

}  // namespace hopgate
