#include "hopgate/pipeline.hpp"

#include <algorithm>
#include <map>

#include "hopgate/errors.hpp"

namespace hopgate {

DataBundle load_babi_bundle(const std::filesystem::path& dir, const std::vector<unsigned>& tasks,
                            std::size_t n_s, double validation_fraction) {
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw ParameterError("validation_fraction must be in [0, 1)");
  }
  TaskFiles files = load_babi_dir(dir, tasks);
  if (files.train.empty() || files.test.empty()) {
    throw ConfigError("need both train and test files under " + dir.string());
  }

  std::vector<RawSample> all = files.train;
  all.insert(all.end(), files.test.begin(), files.test.end());

  DataBundle bundle;
  bundle.vocab = build_vocab(all);
  bundle.n_w = max_sentence_words(all);
  bundle.n_s = n_s;

  std::map<unsigned, std::vector<const RawSample*>> by_task;
  for (const auto& s : files.train) by_task[s.task_id].push_back(&s);
  for (const auto& [task, group] : by_task) {
    const std::size_t val_n = static_cast<std::size_t>(
        validation_fraction * static_cast<double>(group.size()));
    const std::size_t train_n = group.size() - val_n;
    for (std::size_t i = 0; i < group.size(); ++i) {
      auto& dst = i < train_n ? bundle.train : bundle.validation;
      dst.push_back(encode(*group[i], bundle.vocab, n_s, bundle.n_w));
    }
  }
  for (const auto& s : files.test) {
    bundle.test.push_back(encode(s, bundle.vocab, n_s, bundle.n_w));
  }
  return bundle;
}

std::set<std::uint32_t> train_label_set(const std::vector<Sample>& train) {
  std::set<std::uint32_t> labels;
  for (const auto& s : train) labels.insert(s.answer_id);
  return labels;
}

}  // namespace hopgate
