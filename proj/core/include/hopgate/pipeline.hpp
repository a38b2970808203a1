#pragma once

#include <filesystem>
#include <set>
#include <vector>

#include "hopgate/dataset.hpp"

namespace hopgate {

/// Encoded corpus with a held-out slice: the last `validation_fraction` of
/// each task's training file becomes the validation split. The vocabulary
/// is built jointly over train and test; n_w is the longest sentence or
/// question seen.
struct DataBundle {
  Vocab vocab;
  std::size_t n_w = 0;
  std::size_t n_s = 0;
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

DataBundle load_babi_bundle(const std::filesystem::path& dir, const std::vector<unsigned>& tasks,
                            std::size_t n_s, double validation_fraction = 0.1);

/// Distinct answer ids of the training split.
std::set<std::uint32_t> train_label_set(const std::vector<Sample>& train);

}  // namespace hopgate
