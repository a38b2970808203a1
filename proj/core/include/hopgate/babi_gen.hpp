#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hopgate {

/// Writes story/question files in the bAbI v1.2 line format, one train and
/// one test file per task, each holding exactly `questions_per_file`
/// questions. Supported tasks: 1 (single supporting fact), 6 (yes/no
/// questions), 20 (motivations). Deterministic per seed.
struct BabiGenConfig {
  std::uint64_t seed = 7;
  std::size_t questions_per_file = 1000;
  std::vector<unsigned> tasks = {1, 6, 20};
};

std::string babi_task_slug(unsigned task);

/// One file's worth of lines for the given task.
std::string generate_babi_task(unsigned task, std::uint64_t seed, std::size_t n_questions);

void generate_babi_dir(const std::filesystem::path& dir, const BabiGenConfig& config);

}  // namespace hopgate
