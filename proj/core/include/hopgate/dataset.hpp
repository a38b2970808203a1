#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hopgate/tensor.hpp"

namespace hopgate {

/// Closed word<->index bijection. Index 0 is reserved for the padding
/// token "nil"; real words occupy 1..V-1 in lexicographic order. V counts
/// the padding token.
class Vocab {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr const char* kPadWord = "nil";

  Vocab();

  /// Inserts words in sorted order; duplicates and "nil" are ignored.
  static Vocab build(std::vector<std::string> words);

  std::uint32_t size() const { return static_cast<std::uint32_t>(words_.size()); }
  std::optional<std::uint32_t> id(const std::string& word) const;
  const std::string& word(std::uint32_t id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// One parsed question: the story sentences visible so far, the question
/// tokens, and the single-token answer. Supporting sentence ids are kept
/// for diagnostics only.
struct RawSample {
  std::vector<std::vector<std::string>> story;
  std::vector<std::string> query;
  std::string answer;
  unsigned task_id = 0;
  std::vector<unsigned> supporting_ids;
};

/// Fixed-size integer grid (rows x cols), row-major, 0 = padding.
struct IndexGrid {
  IndexGrid(std::size_t rows, std::size_t cols) : rows(rows), cols(cols), cells(rows * cols, 0) {}
  std::size_t rows, cols;
  std::vector<std::uint32_t> cells;

  std::uint32_t at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  std::uint32_t& at(std::size_t r, std::size_t c) { return cells[r * cols + c]; }
};

/// Encoded instance. `value_ids` is used by the key-value variant only
/// (one value token per memory slot) and stays empty otherwise.
struct Sample {
  IndexGrid story_grid;
  std::vector<std::uint32_t> query_ids;
  std::uint32_t answer_id = 0;
  unsigned task_id = 0;
  std::vector<std::uint32_t> value_ids;
};

/// Lowercases, splits on whitespace, strips trailing '.' / '?'.
std::vector<std::string> tokenize(const std::string& text);

/// Parses bAbI v1.2 lines ("N tokens...", question lines carrying two tab
/// separators "N question?\tanswer\tsupport-ids"). A line number of 1
/// starts a new story. Yields one RawSample per question line. LF and CRLF
/// are both accepted.
std::vector<RawSample> parse_babi(std::istream& text, unsigned task_id);

/// parse_babi over a file whose name encodes the task id ("qa{K}_...").
std::vector<RawSample> load_babi_file(const std::filesystem::path& path);

/// Loads qa{K}_*_{train,test}.txt for the requested task ids (all tasks
/// present in the directory when `tasks` is empty).
struct TaskFiles {
  std::vector<RawSample> train;
  std::vector<RawSample> test;
};
TaskFiles load_babi_dir(const std::filesystem::path& dir, const std::vector<unsigned>& tasks);

/// Deterministic joint vocabulary over every token of the given samples.
Vocab build_vocab(const std::vector<RawSample>& samples);

/// Pads/truncates into an n_s x n_w grid. Stories longer than n_s keep the
/// most recent n_s sentences; sentences longer than n_w are truncated.
Sample encode(const RawSample& raw, const Vocab& vocab, std::size_t n_s, std::size_t n_w);

/// Inverse of encode for diagnostics: grid row -> words (padding skipped).
std::vector<std::string> decode_row(const IndexGrid& grid, std::size_t row, const Vocab& vocab);

/// Longest sentence/question, in tokens, over the given samples.
std::size_t max_sentence_words(const std::vector<RawSample>& samples);
/// Longest story, in sentences, over the given samples.
std::size_t max_story_sentences(const std::vector<RawSample>& samples);

/// Position-by-dimension weighting matrix (n_w x d):
///   entry(j,k) = (1 - j/J) - (k/d) * (1 - 2j/J),  1-based j,k, J = n_w.
Mat positional_encoding(std::size_t n_w, std::size_t d);

/// Synthetic key-value retrieval set: n_pairs key windows of n_w tokens
/// with planted single-token values. Each sample's query is a noisy copy
/// of one key and its answer is that key's value. Deterministic per seed.
struct KvDataset {
  std::vector<Sample> samples;   // all share the same key/value memory
  std::size_t n_pairs = 0;
  std::size_t n_w = 0;
  std::uint32_t vocab_size = 0;
};
KvDataset synth_kv(std::uint64_t seed, std::size_t n_pairs, std::size_t n_w,
                   std::uint32_t vocab_size);

/// Exhaustive nearest-key lookup by token overlap; ties break toward the
/// lowest slot. Returns the matched slot's value token.
std::uint32_t nearest_key_value(const KvDataset& ds, const std::vector<std::uint32_t>& query);

/// One {task_id, n_samples, n_s_max, n_w_max, vocab_size} object per task,
/// serialized as a JSON array.
std::string dataset_summary_json(const std::vector<RawSample>& samples, std::uint32_t vocab_size);

}  // namespace hopgate
