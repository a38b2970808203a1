#include "hopgate/engine.hpp"

#include <algorithm>

#include "hopgate/pruner.hpp"

namespace hopgate {

std::string_view to_string(Variant v) {
  return v == Variant::Conventional ? "conventional" : "key_value";
}
std::string_view to_string(AppMode m) {
  return m == AppMode::PreEmbedded ? "pre_embedded" : "interactive";
}
std::string_view to_string(Tying t) { return t == Tying::Adjacent ? "adjacent" : "hop_specific"; }

std::size_t HyperParams::embed_count() const {
  if (variant == Variant::KeyValue) return 1;
  return tying == Tying::Adjacent ? hops + 1 : 2 * hops + 1;
}

std::size_t HyperParams::input_embed_index(std::size_t hop) const {
  if (variant == Variant::KeyValue) return 0;
  return tying == Tying::Adjacent ? hop - 1 : 2 * hop - 1;
}

std::size_t HyperParams::output_embed_index(std::size_t hop) const {
  if (variant == Variant::KeyValue) return 0;
  return tying == Tying::Adjacent ? hop : 2 * hop;
}

void HyperParams::validate() const {
  if (d == 0 || vocab_size == 0 || n_s == 0 || n_w == 0 || hops == 0) {
    throw ParameterError("hyperparameters must all be >= 1");
  }
  if (variant == Variant::KeyValue && app_mode == AppMode::Interactive) {
    throw ConfigError("the key-value variant supports pre-embedded serving only");
  }
}

void ModelWeights::validate(const HyperParams& hyper) const {
  hyper.validate();
  if (embeds.size() != hyper.embed_count()) {
    throw DimensionError("expected " + std::to_string(hyper.embed_count()) +
                         " embedding matrices, got " + std::to_string(embeds.size()));
  }
  for (const auto& e : embeds) {
    if (e.rows() != hyper.vocab_size || e.cols() != hyper.d) {
      throw DimensionError("embedding matrix must be V x d");
    }
  }
  if (w.rows() != hyper.vocab_size || w.cols() != hyper.d) {
    throw DimensionError("W must be V x d");
  }
  if (w_e && (w_e->rows() != hyper.vocab_size || w_e->cols() != hyper.d)) {
    throw DimensionError("W_E must be V x d");
  }
  if (hyper.variant == Variant::KeyValue) {
    if (r.size() != hyper.hops) throw DimensionError("KeyValue needs one R matrix per hop");
    for (const auto& m : r) {
      if (m.rows() != hyper.d || m.cols() != hyper.d) throw DimensionError("R must be d x d");
    }
    if (pe) throw ConfigError("KeyValue does not use positional encoding");
  } else {
    if (!r.empty()) throw ConfigError("R matrices are key-value only");
    if (!pe) throw ConfigError("Conventional needs a positional-encoding matrix");
    if (pe->rows() != hyper.n_w || pe->cols() != hyper.d) {
      throw DimensionError("PE must be n_w x d");
    }
  }
  if (icn) icn->validate(hyper.d);
}

Mat embed_story(const IndexGrid& grid, const Mat& embed, const Mat* pe, FlopLedger* ledger) {
  const std::size_t n_s = grid.rows, n_w = grid.cols, d = embed.cols();
  if (pe && (pe->rows() != n_w || pe->cols() != d)) {
    throw DimensionError("embed_story: PE shape mismatch");
  }
  Mat out(n_s, d);
  for (std::size_t i = 0; i < n_s; ++i) {
    auto dst = out.row(i);
    for (std::size_t j = 0; j < n_w; ++j) {
      const std::uint32_t word = grid.at(i, j);
      if (word >= embed.rows()) throw EncodingError("story index out of vocab range");
      auto src = embed.row(word);
      if (pe) {
        auto weights = pe->row(j);
        for (std::size_t k = 0; k < d; ++k) dst[k] += weights[k] * src[k];
      } else {
        for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
      }
    }
  }
  if (ledger) {
    const std::uint64_t per_row = pe ? (2 * static_cast<std::uint64_t>(n_w) - 1)
                                     : (static_cast<std::uint64_t>(n_w) - 1);
    ledger->add(FlopCategory::EmbedStory, static_cast<std::uint64_t>(n_s) * per_row * d);
  }
  return out;
}

Mat embed_values(const std::vector<std::uint32_t>& value_ids, const Mat& embed) {
  if (value_ids.empty()) throw DimensionError("embed_values: no value tokens");
  Mat out(value_ids.size(), embed.cols());
  for (std::size_t i = 0; i < value_ids.size(); ++i) {
    if (value_ids[i] >= embed.rows()) throw EncodingError("value index out of vocab range");
    auto src = embed.row(value_ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Vec embed_query(const std::vector<std::uint32_t>& query_ids, const Mat& embed, const Mat* pe,
                FlopLedger& ledger) {
  const std::size_t n_w = query_ids.size(), d = embed.cols();
  if (n_w == 0) throw DimensionError("embed_query: empty query");
  if (pe && (pe->rows() != n_w || pe->cols() != d)) {
    throw DimensionError("embed_query: PE shape mismatch");
  }
  Vec u(d);
  for (std::size_t j = 0; j < n_w; ++j) {
    if (query_ids[j] >= embed.rows()) throw EncodingError("query index out of vocab range");
    auto src = embed.row(query_ids[j]);
    if (pe) {
      auto weights = pe->row(j);
      for (std::size_t k = 0; k < d; ++k) u[k] += weights[k] * src[k];
    } else {
      for (std::size_t k = 0; k < d; ++k) u[k] += src[k];
    }
  }
  const std::uint64_t cost = pe ? (2 * static_cast<std::uint64_t>(n_w) - 1) * d
                                : (static_cast<std::uint64_t>(n_w) - 1) * d;
  ledger.add(FlopCategory::EmbedQuery, cost);
  return u;
}

HopTrace attention_hop(const Vec& u, const EmbeddedMemory& mem, std::optional<double> theta_zs,
                       const Mat* r, FlopLedger& ledger) {
  if (mem.m_in.cols() != u.size() || mem.m_out.cols() != u.size() ||
      mem.m_in.rows() != mem.m_out.rows()) {
    throw DimensionError("attention_hop: memory/query shape mismatch");
  }
  HopTrace tr{Vec(1), Vec(1), Vec(1), Vec(1), mem.m_in.rows(), 0};
  tr.scores = matvec(mem.m_in, u, ledger, FlopCategory::InnerProduct);
  tr.attention = softmax(tr.scores, ledger);
  std::size_t kept = 0;
  tr.weighted =
      weighted_row_sum(mem.m_out, tr.attention, theta_zs, ledger, FlopCategory::WeightedSum, &kept);
  tr.skipped = mem.m_in.rows() - kept;
  Vec keyed = add(tr.weighted, u, ledger, FlopCategory::KeySum);
  if (r) {
    tr.u_out = matvec(*r, keyed, ledger, FlopCategory::KeyGen);
    // Output-key generation carries the nominal 2d^2 charge in the cost
    // model's hop totals; the matvec above accounts 2d^2-d, so top up by d.
    ledger.add(FlopCategory::KeyGen, u.size());
  } else {
    tr.u_out = std::move(keyed);
  }
  return tr;
}

std::vector<EmbeddedMemory> embed_story_memory(const ModelWeights& weights,
                                               const HyperParams& hyper, const Sample& sample) {
  std::vector<EmbeddedMemory> memory;
  if (hyper.variant == Variant::KeyValue) {
    if (sample.value_ids.size() != sample.story_grid.rows) {
      throw DimensionError("key-value sample needs one value per memory slot");
    }
    memory.push_back({embed_story(sample.story_grid, weights.embeds[0], nullptr, nullptr),
                      embed_values(sample.value_ids, weights.embeds[0]), 0});
    return memory;
  }
  const Mat* pe = &*weights.pe;
  for (std::size_t hop = 1; hop <= hyper.hops; ++hop) {
    memory.push_back(
        {embed_story(sample.story_grid, weights.embeds[hyper.input_embed_index(hop)], pe, nullptr),
         embed_story(sample.story_grid, weights.embeds[hyper.output_embed_index(hop)], pe, nullptr),
         hop});
  }
  return memory;
}

namespace {

EmbeddedMemory filter_rows(const EmbeddedMemory& mem, const std::vector<std::size_t>& keep) {
  EmbeddedMemory out{Mat(keep.size(), mem.m_in.cols()), Mat(keep.size(), mem.m_out.cols()),
                     mem.hop_index};
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy(mem.m_in.row(keep[i]).begin(), mem.m_in.row(keep[i]).end(), out.m_in.row(i).begin());
    std::copy(mem.m_out.row(keep[i]).begin(), mem.m_out.row(keep[i]).end(),
              out.m_out.row(i).begin());
  }
  return out;
}

Prediction run_forward(const ModelWeights& weights, const HyperParams& hyper,
                       const Sample& sample, const std::vector<EmbeddedMemory>& memory,
                       const ForwardOptions& opt, bool charge_story) {
  weights.validate(hyper);
  const bool key_value = hyper.variant == Variant::KeyValue;
  if (opt.policy == HopPolicy::Gated) {
    if (!weights.icn) throw ConfigError("gated forward needs trained ICN weights");
    if (!opt.gate_cfg) throw ConfigError("gated forward needs a gate configuration");
    if (!weights.w_e) throw ConfigError("gated forward needs the early-exit head W_E");
  }
  if (opt.avoid_reembed) {
    if (hyper.app_mode != AppMode::Interactive || !opt.theta_zs) {
      throw ConfigError("re-embedding avoidance needs interactive mode and a zero-skip threshold");
    }
  }

  Prediction pred;
  const Mat* pe = weights.pe ? &*weights.pe : nullptr;
  Vec u = embed_query(sample.query_ids, weights.embeds[hyper.query_embed_index()], pe, pred.ledger);

  const std::uint64_t story_embed_cost =
      static_cast<std::uint64_t>(2 * hyper.n_w - 1) * hyper.d;
  std::vector<std::size_t> keep_slots;  // re-embedding avoidance, fixed after hop 1
  bool filtered = false;
  bool routed_easy = false;
  pred.hops_executed = 0;

  for (std::size_t hop = 1; hop <= hyper.hops; ++hop) {
    const EmbeddedMemory& base = key_value ? memory[0] : memory[hop - 1];
    EmbeddedMemory reduced_mem{Mat(1, 1), Mat(1, 1), 0};
    const EmbeddedMemory* mem = &base;
    if (filtered && hop > 1) {
      reduced_mem = filter_rows(base, keep_slots);
      mem = &reduced_mem;
    }
    if (charge_story) {
      // Interactive serving re-embeds the story into both memories each hop.
      pred.ledger.add(FlopCategory::EmbedStory, 2 * mem->m_in.rows() * story_embed_cost);
    }
    const Mat* r = key_value ? &weights.r[hop - 1] : nullptr;
    HopTrace tr = attention_hop(u, *mem, opt.theta_zs, r, pred.ledger);
    u = tr.u_out;
    ++pred.hops_executed;

    if (hop == 1) {
      if (opt.policy == HopPolicy::Gated) {
        pred.gate_probs = icn_forward(u, *weights.icn, pred.ledger);
        pred.route = decide_route(pred.gate_probs, sample.task_id, *opt.gate_cfg);
        routed_easy = pred.route == Route::Easy;
      }
      if (opt.avoid_reembed) {
        for (std::size_t i = 0; i < tr.attention.size(); ++i) {
          if (tr.attention[i] >= *opt.theta_zs) keep_slots.push_back(i);
        }
        // An empty keep set would leave nothing to attend over; keep the
        // full memory in that degenerate case.
        filtered = !keep_slots.empty() && keep_slots.size() < tr.attention.size();
      }
    }
    pred.trace.push_back(std::move(tr));
    if (opt.policy == HopPolicy::OneHop || routed_easy) break;
  }

  const bool early_head = opt.policy == HopPolicy::OneHop || routed_easy;
  const PrunedFC* pruned = early_head ? opt.pruned_fc_e : opt.pruned_fc_h;
  if (pruned) {
    PrunedOutput out = pruned_output(*pruned, u, pred.ledger);
    pred.answer_id = out.answer_id;
    pred.logits = std::move(out.logits);
  } else {
    const Mat& head = early_head && weights.w_e ? *weights.w_e : weights.w;
    pred.logits = matvec(head, u, pred.ledger, FlopCategory::Fc);
    pred.answer_id = static_cast<std::uint32_t>(argmax(pred.logits));
  }
  return pred;
}

}  // namespace

Prediction forward(const ModelWeights& weights, const HyperParams& hyper, const Sample& sample,
                   const ForwardOptions& options) {
  const auto memory = embed_story_memory(weights, hyper, sample);
  const bool charge_story =
      hyper.app_mode == AppMode::Interactive && hyper.variant == Variant::Conventional;
  return run_forward(weights, hyper, sample, memory, options, charge_story);
}

Prediction forward_with_memory(const ModelWeights& weights, const HyperParams& hyper,
                               const Sample& sample, const std::vector<EmbeddedMemory>& memory,
                               const ForwardOptions& options) {
  return run_forward(weights, hyper, sample, memory, options, /*charge_story=*/false);
}

}  // namespace hopgate
