#include "hopgate/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hopgate {

namespace {

std::string lowercased(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Uniform integer in [0, n) from a raw 64-bit draw. Modulo bias is
// irrelevant at these ranges; what matters is that the mapping is fixed,
// unlike std::uniform_int_distribution.
std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

}  // namespace

Vocab::Vocab() : words_{kPadWord} { index_[kPadWord] = kPad; }

Vocab Vocab::build(std::vector<std::string> words) {
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  Vocab v;
  for (auto& w : words) {
    if (w == kPadWord || w.empty()) continue;
    v.index_[w] = static_cast<std::uint32_t>(v.words_.size());
    v.words_.push_back(w);
  }
  return v;
}

std::optional<std::uint32_t> Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(lowercased(text));
  std::string tok;
  while (ss >> tok) {
    while (!tok.empty() && (tok.back() == '.' || tok.back() == '?')) tok.pop_back();
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<RawSample> parse_babi(std::istream& text, unsigned task_id) {
  std::vector<RawSample> out;
  std::vector<std::vector<std::string>> story;
  std::string line;
  std::size_t line_no = 0;
  long prev_id = 0;
  bool saw_content = false;

  while (std::getline(text, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    saw_content = true;

    const auto space = line.find(' ');
    if (space == std::string::npos) throw ParseError("missing sentence id", line_no);
    long id = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + space, id);
    if (ec != std::errc() || ptr != line.data() + space || id <= 0) {
      throw ParseError("malformed sentence id '" + line.substr(0, space) + "'", line_no);
    }
    if (id == 1) {
      story.clear();
    } else if (id != prev_id + 1) {
      throw ParseError("non-consecutive sentence id " + std::to_string(id), line_no);
    }
    prev_id = id;

    const std::string rest = line.substr(space + 1);
    const auto tab1 = rest.find('\t');
    if (tab1 == std::string::npos) {
      if (rest.find('?') != std::string::npos) {
        throw ParseError("question line needs two tabs", line_no);
      }
      auto tokens = tokenize(rest);
      if (tokens.empty()) throw ParseError("empty sentence", line_no);
      story.push_back(std::move(tokens));
      continue;
    }

    const auto tab2 = rest.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) throw ParseError("question line needs two tabs", line_no);
    if (story.empty()) throw ParseError("question before any story sentence", line_no);

    RawSample sample;
    sample.story = story;
    sample.query = tokenize(rest.substr(0, tab1));
    if (sample.query.empty()) throw ParseError("empty question", line_no);
    sample.answer = lowercased(rest.substr(tab1 + 1, tab2 - tab1 - 1));
    while (!sample.answer.empty() && std::isspace(static_cast<unsigned char>(sample.answer.back()))) {
      sample.answer.pop_back();
    }
    if (sample.answer.empty()) throw ParseError("empty answer", line_no);
    if (sample.answer.find(' ') != std::string::npos) {
      throw ParseError("multi-word answer '" + sample.answer + "'", line_no);
    }
    sample.task_id = task_id;
    std::istringstream support(rest.substr(tab2 + 1));
    unsigned sid = 0;
    while (support >> sid) sample.supporting_ids.push_back(sid);
    out.push_back(std::move(sample));
  }

  if (!saw_content) throw ParseError("empty file", line_no == 0 ? 1 : line_no);
  return out;
}

std::vector<RawSample> load_babi_file(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  unsigned task_id = 0;
  if (name.size() > 2 && name.rfind("qa", 0) == 0) {
    std::size_t i = 2;
    while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) {
      task_id = task_id * 10 + static_cast<unsigned>(name[i] - '0');
      ++i;
    }
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_babi(in, task_id);
}

TaskFiles load_babi_dir(const std::filesystem::path& dir, const std::vector<unsigned>& tasks) {
  TaskFiles out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  auto wanted = [&](unsigned task) {
    return tasks.empty() || std::find(tasks.begin(), tasks.end(), task) != tasks.end();
  };
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    const bool is_train = name.ends_with("_train.txt");
    const bool is_test = name.ends_with("_test.txt");
    if (!name.starts_with("qa") || (!is_train && !is_test)) continue;
    auto samples = load_babi_file(path);
    if (samples.empty() || !wanted(samples.front().task_id)) continue;
    auto& dst = is_train ? out.train : out.test;
    dst.insert(dst.end(), std::make_move_iterator(samples.begin()),
               std::make_move_iterator(samples.end()));
  }
  if (out.train.empty() && out.test.empty()) {
    throw ConfigError("no bAbI task files found under " + dir.string());
  }
  return out;
}

Vocab build_vocab(const std::vector<RawSample>& samples) {
  std::vector<std::string> words;
  for (const auto& s : samples) {
    for (const auto& sentence : s.story) {
      words.insert(words.end(), sentence.begin(), sentence.end());
    }
    words.insert(words.end(), s.query.begin(), s.query.end());
    words.push_back(s.answer);
  }
  return Vocab::build(std::move(words));
}

Sample encode(const RawSample& raw, const Vocab& vocab, std::size_t n_s, std::size_t n_w) {
  if (n_s == 0 || n_w == 0) throw ParameterError("encode: n_s and n_w must be >= 1");
  auto lookup = [&](const std::string& word) {
    auto id = vocab.id(word);
    if (!id) throw EncodingError("token '" + word + "' not in vocabulary");
    return *id;
  };

  Sample s{IndexGrid(n_s, n_w), {}, 0, raw.task_id, {}};
  // Keep the most recent n_s sentences, order preserved.
  const std::size_t n_sentences = raw.story.size();
  const std::size_t first = n_sentences > n_s ? n_sentences - n_s : 0;
  for (std::size_t i = first; i < n_sentences; ++i) {
    const auto& sentence = raw.story[i];
    const std::size_t row = i - first;
    for (std::size_t j = 0; j < std::min(sentence.size(), n_w); ++j) {
      s.story_grid.at(row, j) = lookup(sentence[j]);
    }
  }
  s.query_ids.assign(n_w, Vocab::kPad);
  for (std::size_t j = 0; j < std::min(raw.query.size(), n_w); ++j) {
    s.query_ids[j] = lookup(raw.query[j]);
  }
  s.answer_id = lookup(raw.answer);
  return s;
}

std::vector<std::string> decode_row(const IndexGrid& grid, std::size_t row, const Vocab& vocab) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < grid.cols; ++c) {
    const auto id = grid.at(row, c);
    if (id != Vocab::kPad) out.push_back(vocab.word(id));
  }
  return out;
}

std::size_t max_sentence_words(const std::vector<RawSample>& samples) {
  std::size_t best = 1;
  for (const auto& s : samples) {
    for (const auto& sentence : s.story) best = std::max(best, sentence.size());
    best = std::max(best, s.query.size());
  }
  return best;
}

std::size_t max_story_sentences(const std::vector<RawSample>& samples) {
  std::size_t best = 1;
  for (const auto& s : samples) best = std::max(best, s.story.size());
  return best;
}

Mat positional_encoding(std::size_t n_w, std::size_t d) {
  if (n_w == 0 || d == 0) throw ParameterError("positional_encoding: dims must be >= 1");
  Mat pe(n_w, d);
  const double big_j = static_cast<double>(n_w);
  for (std::size_t j = 1; j <= n_w; ++j) {
    for (std::size_t k = 1; k <= d; ++k) {
      const double jj = static_cast<double>(j), kk = static_cast<double>(k);
      pe.at(j - 1, k - 1) =
          (1.0 - jj / big_j) - (kk / static_cast<double>(d)) * (1.0 - 2.0 * jj / big_j);
    }
  }
  return pe;
}

KvDataset synth_kv(std::uint64_t seed, std::size_t n_pairs, std::size_t n_w,
                   std::uint32_t vocab_size) {
  if (n_pairs == 0) throw ParameterError("synth_kv: n_pairs must be >= 1");
  if (n_w == 0) throw ParameterError("synth_kv: n_w must be >= 1");
  if (vocab_size < 4) throw ParameterError("synth_kv: vocab_size must be >= 4");

  std::mt19937_64 rng(seed);
  const std::uint32_t n_values = std::max<std::uint32_t>(2, vocab_size / 8);
  // Values take 1..n_values; key tokens take the rest of the dictionary.
  const std::uint32_t key_lo = 1 + n_values;
  const std::uint32_t key_span = vocab_size - key_lo;
  if (key_span == 0) throw ParameterError("synth_kv: vocabulary too small for keys");

  KvDataset ds;
  ds.n_pairs = n_pairs;
  ds.n_w = n_w;
  ds.vocab_size = vocab_size;

  IndexGrid keys(n_pairs, n_w);
  std::vector<std::uint32_t> values(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    for (std::size_t j = 0; j < n_w; ++j) {
      keys.at(i, j) = key_lo + static_cast<std::uint32_t>(draw(rng, key_span));
    }
    values[i] = 1 + static_cast<std::uint32_t>(i % n_values);
  }

  for (std::size_t i = 0; i < n_pairs; ++i) {
    Sample s{keys, {}, values[i], 0, values};
    s.query_ids.resize(n_w);
    for (std::size_t j = 0; j < n_w; ++j) s.query_ids[j] = keys.at(i, j);
    // One-token perturbation; the query still overlaps its key best.
    if (n_w > 1) {
      const std::size_t pos = draw(rng, n_w);
      s.query_ids[pos] = key_lo + static_cast<std::uint32_t>(draw(rng, key_span));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::uint32_t nearest_key_value(const KvDataset& ds, const std::vector<std::uint32_t>& query) {
  const auto& grid = ds.samples.front().story_grid;
  std::size_t best_slot = 0;
  std::size_t best_overlap = 0;
  for (std::size_t i = 0; i < grid.rows; ++i) {
    std::size_t overlap = 0;
    for (std::size_t j = 0; j < grid.cols && j < query.size(); ++j) {
      if (grid.at(i, j) == query[j]) ++overlap;
    }
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best_slot = i;
    }
  }
  return ds.samples.front().value_ids[best_slot];
}

std::string dataset_summary_json(const std::vector<RawSample>& samples, std::uint32_t vocab_size) {
  std::map<unsigned, std::vector<const RawSample*>> by_task;
  for (const auto& s : samples) by_task[s.task_id].push_back(&s);

  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [task, group] : by_task) {
    std::size_t ns_max = 0, nw_max = 0;
    for (const auto* s : group) {
      ns_max = std::max(ns_max, s->story.size());
      for (const auto& sentence : s->story) nw_max = std::max(nw_max, sentence.size());
      nw_max = std::max(nw_max, s->query.size());
    }
    arr.push_back({{"task_id", task},
                   {"n_samples", group.size()},
                   {"n_s_max", ns_max},
                   {"n_w_max", nw_max},
                   {"vocab_size", vocab_size}});
  }
  return arr.dump(2);
}

}  // namespace hopgate
