#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "hopgate/tensor.hpp"

namespace hopgate {

/// Magnitude rule for unimportant rows: a row is unimportant when at
/// least `n_p` of its weights have absolute value below `theta_p`.
struct PruneParams {
  double theta_p = 0.1;
  std::size_t n_p = 13;
};

/// Row subset of a V x d answer head. `important_indices[r]` is the vocab
/// index of `rows.row(r)`, strictly increasing.
struct PrunedFC {
  Mat rows;
  std::vector<std::uint32_t> important_indices;

  std::size_t kept() const { return important_indices.size(); }
  double pruned_ratio(std::size_t vocab_size) const {
    return static_cast<double>(vocab_size - kept()) / static_cast<double>(vocab_size);
  }
  void validate(const Mat& origin) const;
};

/// Vocab indices that never appear as a training label. Index 0 (padding)
/// is always unused.
std::set<std::uint32_t> find_unused(const std::set<std::uint32_t>& train_labels,
                                    std::uint32_t vocab_size);

/// Rows matching the theta_p / n_p magnitude rule. Rejects n_p > d (the
/// rule could never fire meaningfully).
std::set<std::uint32_t> find_unimportant(const Mat& w, const PruneParams& params);

/// Drops `drop` rows except those in `keep_labels` (training-label rows
/// are never pruned). Throws when nothing would be kept.
PrunedFC prune(const Mat& w, const std::set<std::uint32_t>& drop,
               const std::set<std::uint32_t>& keep_labels);

/// Argmax over the kept rows, reported in the original vocab index space.
/// Charges kept*(2d-1) to the fc bucket.
struct PrunedOutput {
  std::uint32_t answer_id = 0;
  Vec logits{1};
};
PrunedOutput pruned_output(const PrunedFC& pfc, const Vec& u_out, FlopLedger& ledger);

}  // namespace hopgate
