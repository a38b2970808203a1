#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hopgate/dataset.hpp"
#include "hopgate/gate.hpp"
#include "hopgate/tensor.hpp"

namespace hopgate {

enum class Variant { Conventional, KeyValue };
enum class AppMode { PreEmbedded, Interactive };
enum class Tying { Adjacent, HopSpecific };
enum class HopPolicy { AllHops, OneHop, Gated };

std::string_view to_string(Variant v);
std::string_view to_string(AppMode m);
std::string_view to_string(Tying t);

struct HyperParams {
  std::size_t d = 40;
  std::size_t vocab_size = 0;
  std::size_t n_s = 50;
  std::size_t n_w = 0;
  std::size_t hops = 3;  // m
  Variant variant = Variant::Conventional;
  AppMode app_mode = AppMode::PreEmbedded;
  Tying tying = Tying::Adjacent;
  std::size_t icn_hidden = 32;  // L1

  /// Number of embedding matrices the variant/tying scheme needs.
  /// Conventional adjacent: m+1 (E0..Em, A_k = E_{k-1}, C_k = E_k, B = E0).
  /// Conventional hop-specific: 2m+1 (B, A_1, C_1, ..., A_m, C_m).
  /// KeyValue: 1 (keys, values and the query share one matrix).
  std::size_t embed_count() const;

  std::size_t query_embed_index() const { return 0; }
  std::size_t input_embed_index(std::size_t hop) const;   // 1-based hop
  std::size_t output_embed_index(std::size_t hop) const;  // 1-based hop

  void validate() const;
};

struct ModelWeights {
  /// Embedding matrices, stored word-major (V x d; row w is the d-vector
  /// of word w — the transpose of the logical d x V shape). Count per
  /// variant/tying comes from hyper.embed_count().
  std::vector<Mat> embeds;
  Mat w;                         // V x d, full-depth answer head (FC_H)
  std::optional<Mat> w_e;        // V x d, early-exit answer head (FC_E)
  std::vector<Mat> r;            // KeyValue only: m matrices, d x d
  std::optional<Mat> pe;         // Conventional only: n_w x d
  std::optional<IcnWeights> icn;

  void validate(const HyperParams& hyper) const;
};

/// Input/output memory pair one hop attends over. Stored sentence-major:
/// row i is the d-vector internal state of slot i (the logical shape in
/// the cost model is the transpose, d x n_s).
struct EmbeddedMemory {
  Mat m_in;
  Mat m_out;
  std::size_t hop_index = 0;
};

/// BoW(+PE) sentence embedding: out row i = sum_j pe(j,:) .* E(:, grid[i][j]).
/// Padding cells contribute column 0 like any word. Without `pe` the rows
/// are plain BoW sums. Charges n_s*(2n_w-1)*d (with PE) or n_s*(n_w-1)*d
/// (without) when a ledger is supplied; pass nullptr for amortized
/// (pre-embedded) construction.
Mat embed_story(const IndexGrid& grid, const Mat& embed, const Mat* pe, FlopLedger* ledger);

/// Single-token value embedding for the key-value variant: row i = E(:, v_i).
Mat embed_values(const std::vector<std::uint32_t>& value_ids, const Mat& embed);

/// Query embedding; charges (2n_w-1)*d with PE, (n_w-1)*d without.
Vec embed_query(const std::vector<std::uint32_t>& query_ids, const Mat& embed, const Mat* pe,
                FlopLedger& ledger);

/// Per-hop record: scores k, attention p^a, weighted sum o, output key
/// u_out, and how many memory slots zero-skipping dropped.
struct HopTrace {
  Vec scores{1};
  Vec attention{1};
  Vec weighted{1};
  Vec u_out{1};
  std::size_t slots = 0;
  std::size_t skipped = 0;
};

/// One attention-inference hop. Zero-skipping drops weighted-sum terms
/// whose attention probability is below theta_zs (disabled when absent;
/// theta_zs = 0 keeps every term and is bit-identical to disabled).
/// `r` selects the key-value output-key generation u_out = R*(o+u);
/// nullptr gives the conventional u_out = o + u.
HopTrace attention_hop(const Vec& u, const EmbeddedMemory& mem, std::optional<double> theta_zs,
                       const Mat* r, FlopLedger& ledger);

/// Row subset of a full answer head with index remapping (fc-pruner
/// builds these; declared here so forward() can route through one).
struct PrunedFC;

struct ForwardOptions {
  HopPolicy policy = HopPolicy::AllHops;
  std::optional<double> theta_zs;
  /// Interactive only: slots skipped in hop 1 are not re-embedded (and not
  /// attended) in later hops. Requires theta_zs; theta_zs = 0 changes nothing.
  bool avoid_reembed = false;
  const GateConfig* gate_cfg = nullptr;  // required for HopPolicy::Gated
  const PrunedFC* pruned_fc_h = nullptr;
  const PrunedFC* pruned_fc_e = nullptr;
};

struct Prediction {
  std::uint32_t answer_id = 0;
  Vec logits{1};  // full vocab length, or pruned length when a PrunedFC ran
  Route route = Route::Forced;
  std::size_t hops_executed = 0;
  FlopLedger ledger;  // this query's cost
  std::vector<HopTrace> trace;
  RouteProbs gate_probs;  // meaningful for Gated predictions
};

/// Full forward pass. Story embedding cost is charged per hop in
/// Interactive mode and never in PreEmbedded mode; the arithmetic is
/// identical in both. The final softmax is omitted; the answer is the
/// argmax of the head output with ties toward the lowest index.
Prediction forward(const ModelWeights& weights, const HyperParams& hyper, const Sample& sample,
                   const ForwardOptions& options);

/// Hop memories for one sample, embedded without charging any ledger.
/// Conventional: one entry per hop; KeyValue: a single shared entry.
std::vector<EmbeddedMemory> embed_story_memory(const ModelWeights& weights,
                                               const HyperParams& hyper, const Sample& sample);

/// forward() with the story memories supplied by the caller (pre-embedded
/// serving path; story cost is never charged).
Prediction forward_with_memory(const ModelWeights& weights, const HyperParams& hyper,
                               const Sample& sample, const std::vector<EmbeddedMemory>& memory,
                               const ForwardOptions& options);

}  // namespace hopgate
