#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "hopgate/engine.hpp"
#include "hopgate/pruner.hpp"

namespace hopgate {

/// Everything one model run needs, serialized as a single JSON document:
/// {format_version, hyper: {...}, tensors: {name: {rows, cols, data}}}
/// plus an optional top-level important_indices array shared by the
/// pruned heads. Tensor names: E0..En, W, W_E, R1..Rm, icn.W1, icn.b1,
/// icn.W2, icn.b2, W.pruned, W_E.pruned. Reals round-trip exactly.
struct Checkpoint {
  HyperParams hyper;
  ModelWeights weights;
  std::optional<PrunedFC> pruned_w;
  std::optional<PrunedFC> pruned_w_e;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Atomic text-file write (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace hopgate
