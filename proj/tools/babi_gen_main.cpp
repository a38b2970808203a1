// babi-gen: write story/question task files in the bAbI v1.2 line format,
// for exercising the pipeline when the original corpus is not on disk.

#include <iostream>

#include <CLI11.hpp>

#include "hopgate/babi_gen.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthesize bAbI-format task files (tasks 1, 6, 20)"};
  std::string out_dir;
  hopgate::BabiGenConfig cfg;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
  app.add_option("--questions", cfg.questions_per_file, "questions per file")->capture_default_str();
  app.add_option("--tasks", cfg.tasks, "task ids (subset of 1,6,20)")->capture_default_str()->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  try {
    hopgate::generate_babi_dir(out_dir, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "wrote " << cfg.tasks.size() * 2 << " files under " << out_dir << "\n";
  return 0;
}
