#include "hopgate/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "hopgate/rng.hpp"

namespace hopgate {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5851f42d4c957f2dULL;
constexpr double kInitStdev = 0.1;

/// Adam over a fixed list of flat parameter views. The view order must be
/// identical on every step.
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg)
      : lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.epsilon) {}

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i];
      auto g = grads[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
        v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
        p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

void clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (const auto& g : grads) {
    for (double& x : g) x *= scale;
  }
}

std::vector<std::span<double>> grad_views(ModelGrads& g) {
  std::vector<std::span<double>> out;
  for (auto& e : g.embeds) out.push_back(e.span());
  out.push_back(g.w.span());
  for (auto& r : g.r) out.push_back(r.span());
  return out;
}

std::vector<std::span<double>> param_views(ModelWeights& w) {
  std::vector<std::span<double>> out;
  for (auto& e : w.embeds) out.push_back(e.span());
  out.push_back(w.w.span());
  for (auto& r : w.r) out.push_back(r.span());
  return out;
}

std::vector<std::span<const double>> const_views(const std::vector<std::span<double>>& views) {
  return {views.begin(), views.end()};
}

void zero_pad_rows(std::vector<Mat>& embeds) {
  for (auto& e : embeds) {
    std::fill(e.row(0).begin(), e.row(0).end(), 0.0);
  }
}

struct HopCache {
  Vec u_in{1};
  Vec attention{1};
  Vec weighted{1};
  const EmbeddedMemory* memory = nullptr;
};

}  // namespace

void TrainConfig::validate() const {
  // Zero is allowed so a no-op training run stays expressible.
  if (learning_rate < 0.0) throw ParameterError("learning_rate must be >= 0");
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  if (grad_clip_norm && *grad_clip_norm <= 0.0) throw ParameterError("grad_clip_norm must be > 0");
}

ModelWeights init_weights(const HyperParams& hyper, std::uint64_t seed) {
  hyper.validate();
  Rng rng(seed);
  ModelWeights w{.embeds = {}, .w = Mat(hyper.vocab_size, hyper.d)};
  auto fill_gaussian = [&](Mat& m, double stdev) {
    for (double& x : m.span()) x = rng.gaussian(stdev);
  };
  for (std::size_t i = 0; i < hyper.embed_count(); ++i) {
    Mat e(hyper.vocab_size, hyper.d);
    fill_gaussian(e, kInitStdev);
    w.embeds.push_back(std::move(e));
  }
  zero_pad_rows(w.embeds);
  fill_gaussian(w.w, kInitStdev);
  if (hyper.variant == Variant::KeyValue) {
    for (std::size_t hop = 0; hop < hyper.hops; ++hop) {
      Mat r(hyper.d, hyper.d);
      fill_gaussian(r, kInitStdev);
      for (std::size_t i = 0; i < hyper.d; ++i) r.at(i, i) += 1.0;  // near identity
      w.r.push_back(std::move(r));
    }
  } else {
    w.pe = positional_encoding(hyper.n_w, hyper.d);
  }
  return w;
}

ModelGrads ModelGrads::zeros_like(const ModelWeights& weights) {
  ModelGrads g;
  for (const auto& e : weights.embeds) g.embeds.emplace_back(e.rows(), e.cols());
  g.w = Mat(weights.w.rows(), weights.w.cols());
  for (const auto& r : weights.r) g.r.emplace_back(r.rows(), r.cols());
  return g;
}

void ModelGrads::zero() {
  for (auto& e : embeds) std::fill(e.span().begin(), e.span().end(), 0.0);
  std::fill(w.span().begin(), w.span().end(), 0.0);
  for (auto& m : r) std::fill(m.span().begin(), m.span().end(), 0.0);
}

double model_loss_and_grads(const ModelWeights& weights, const HyperParams& hyper,
                            const Sample& sample, ModelGrads* grads, std::uint32_t* predicted) {
  const bool key_value = hyper.variant == Variant::KeyValue;
  const Mat* pe = weights.pe ? &*weights.pe : nullptr;
  FlopLedger scratch;

  const auto memory = embed_story_memory(weights, hyper, sample);
  std::vector<HopCache> caches(hyper.hops);
  Vec u = embed_query(sample.query_ids, weights.embeds[hyper.query_embed_index()], pe, scratch);
  for (std::size_t hop = 1; hop <= hyper.hops; ++hop) {
    const EmbeddedMemory& mem = key_value ? memory[0] : memory[hop - 1];
    const Mat* r = key_value ? &weights.r[hop - 1] : nullptr;
    HopTrace tr = attention_hop(u, mem, std::nullopt, r, scratch);
    caches[hop - 1] = {u, tr.attention, tr.weighted, &mem};
    u = tr.u_out;
  }
  Vec logits = matvec(weights.w, u, scratch, FlopCategory::Other);
  Vec probs = softmax(logits, scratch, FlopCategory::Other);
  const double loss = -std::log(std::max(probs[sample.answer_id], 1e-300));
  if (predicted) *predicted = static_cast<std::uint32_t>(argmax(logits));
  if (!grads) return loss;

  const std::size_t d = hyper.d;
  const std::size_t n_s = sample.story_grid.rows;
  const std::size_t n_w = sample.story_grid.cols;

  // d(loss)/d(logits) = probs - onehot(answer).
  Vec dlogits = probs;
  dlogits[sample.answer_id] -= 1.0;
  Vec du(d);
  for (std::size_t v = 0; v < weights.w.rows(); ++v) {
    const double g = dlogits[v];
    auto grow = grads->w.row(v);
    auto wrow = weights.w.row(v);
    for (std::size_t k = 0; k < d; ++k) {
      grow[k] += g * u[k];
      du[k] += g * wrow[k];
    }
  }

  // Key-value memories are shared across hops; their gradients accumulate
  // here and scatter into the embedding once at the end.
  Mat dm_in_kv(1, 1), dm_out_kv(1, 1);
  if (key_value) {
    dm_in_kv = Mat(n_s, d);
    dm_out_kv = Mat(n_s, d);
  }

  for (std::size_t hop = hyper.hops; hop >= 1; --hop) {
    const HopCache& cache = caches[hop - 1];
    const Vec& u_in = cache.u_in;
    const Vec& p = cache.attention;
    const Mat& m_in = cache.memory->m_in;
    const Mat& m_out = cache.memory->m_out;
    const std::size_t slots = p.size();

    Vec dt(d);
    if (key_value) {
      // u_out = R * t with t = o + u_in.
      const Mat& r = weights.r[hop - 1];
      Mat& dr = grads->r[hop - 1];
      Vec t(d);
      for (std::size_t k = 0; k < d; ++k) t[k] = cache.weighted[k] + u_in[k];
      for (std::size_t i = 0; i < d; ++i) {
        const double g = du[i];
        auto rrow = r.row(i);
        auto drrow = dr.row(i);
        for (std::size_t j = 0; j < d; ++j) {
          drrow[j] += g * t[j];
          dt[j] += g * rrow[j];
        }
      }
    } else {
      dt = du;
    }

    // o = sum_i p_i m_out_i ; t = o + u_in.
    Vec dp(slots);
    Vec du_next = dt;
    Mat* dm_in = key_value ? &dm_in_kv : nullptr;
    Mat* dm_out = key_value ? &dm_out_kv : nullptr;
    Mat dm_in_local(1, 1), dm_out_local(1, 1);
    if (!key_value) {
      dm_in_local = Mat(slots, d);
      dm_out_local = Mat(slots, d);
      dm_in = &dm_in_local;
      dm_out = &dm_out_local;
    }
    for (std::size_t i = 0; i < slots; ++i) {
      auto orow = m_out.row(i);
      auto dorow = dm_out->row(i);
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        acc += dt[k] * orow[k];
        dorow[k] += p[i] * dt[k];
      }
      dp[i] = acc;
    }
    double pdp = 0.0;
    for (std::size_t i = 0; i < slots; ++i) pdp += p[i] * dp[i];
    for (std::size_t i = 0; i < slots; ++i) {
      const double ds = p[i] * (dp[i] - pdp);
      auto irow = m_in.row(i);
      auto dirow = dm_in->row(i);
      for (std::size_t k = 0; k < d; ++k) {
        du_next[k] += ds * irow[k];
        dirow[k] += ds * u_in[k];
      }
    }

    if (!key_value) {
      // Scatter memory gradients through the BoW+PE embedding.
      Mat& de_in = grads->embeds[hyper.input_embed_index(hop)];
      Mat& de_out = grads->embeds[hyper.output_embed_index(hop)];
      for (std::size_t i = 0; i < n_s; ++i) {
        for (std::size_t j = 0; j < n_w; ++j) {
          const std::uint32_t word = sample.story_grid.at(i, j);
          auto perow = pe->row(j);
          auto in_dst = de_in.row(word);
          auto out_dst = de_out.row(word);
          auto in_src = dm_in_local.row(i);
          auto out_src = dm_out_local.row(i);
          for (std::size_t k = 0; k < d; ++k) {
            in_dst[k] += perow[k] * in_src[k];
            out_dst[k] += perow[k] * out_src[k];
          }
        }
      }
    }
    du = du_next;
    if (hop == 1) break;
  }

  Mat& de_query = grads->embeds[hyper.query_embed_index()];
  if (key_value) {
    // Keys: plain BoW. Values: one token per slot.
    Mat& de = grads->embeds[0];
    for (std::size_t i = 0; i < n_s; ++i) {
      for (std::size_t j = 0; j < n_w; ++j) {
        auto dst = de.row(sample.story_grid.at(i, j));
        auto src = dm_in_kv.row(i);
        for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
      }
      auto vdst = de.row(sample.value_ids[i]);
      auto vsrc = dm_out_kv.row(i);
      for (std::size_t k = 0; k < d; ++k) vdst[k] += vsrc[k];
    }
    for (std::size_t j = 0; j < sample.query_ids.size(); ++j) {
      auto dst = de_query.row(sample.query_ids[j]);
      for (std::size_t k = 0; k < d; ++k) dst[k] += du[k];
    }
  } else {
    for (std::size_t j = 0; j < sample.query_ids.size(); ++j) {
      auto dst = de_query.row(sample.query_ids[j]);
      auto perow = pe->row(j);
      for (std::size_t k = 0; k < d; ++k) dst[k] += perow[k] * du[k];
    }
  }
  return loss;
}

double head_loss_and_grad(const Mat& head, const Vec& u, std::uint32_t answer, Mat* grad,
                          std::uint32_t* predicted) {
  FlopLedger scratch;
  Vec logits = matvec(head, u, scratch, FlopCategory::Other);
  Vec probs = softmax(logits, scratch, FlopCategory::Other);
  const double loss = -std::log(std::max(probs[answer], 1e-300));
  if (predicted) *predicted = static_cast<std::uint32_t>(argmax(logits));
  if (grad) {
    Vec dlogits = probs;
    dlogits[answer] -= 1.0;
    for (std::size_t v = 0; v < head.rows(); ++v) {
      auto grow = grad->row(v);
      const double g = dlogits[v];
      for (std::size_t k = 0; k < u.size(); ++k) grow[k] += g * u[k];
    }
  }
  return loss;
}

IcnGrads IcnGrads::zeros_like(const IcnWeights& weights) {
  IcnGrads g;
  g.w1 = Mat(weights.w1.rows(), weights.w1.cols());
  g.b1 = Vec(weights.b1.size());
  g.w2 = Mat(weights.w2.rows(), weights.w2.cols());
  g.b2 = Vec(weights.b2.size());
  return g;
}

void IcnGrads::zero() {
  std::fill(w1.span().begin(), w1.span().end(), 0.0);
  std::fill(b1.span().begin(), b1.span().end(), 0.0);
  std::fill(w2.span().begin(), w2.span().end(), 0.0);
  std::fill(b2.span().begin(), b2.span().end(), 0.0);
}

double icn_loss_and_grads(const IcnWeights& weights, const Vec& u2, Route label,
                          const LossSpec& loss, IcnGrads* grads, Route* predicted) {
  FlopLedger scratch;
  Vec pre = matvec(weights.w1, u2, scratch, FlopCategory::Other);
  pre = add(pre, weights.b1, scratch, FlopCategory::Other);
  Vec hidden = pre;
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::max(hidden[i], 0.0);
  Vec logits = matvec(weights.w2, hidden, scratch, FlopCategory::Other);
  logits = add(logits, weights.b2, scratch, FlopCategory::Other);
  Vec probs = softmax(logits, scratch, FlopCategory::Other);

  const std::size_t target = label == Route::Easy ? 0 : 1;
  const double cw =
      loss.kind == LossKind::WeightedCrossEntropy ? loss.class_weights[target] : 1.0;
  const double value = -cw * std::log(std::max(probs[target], 1e-300));
  if (predicted) *predicted = probs[0] > probs[1] ? Route::Easy : Route::Hard;
  if (!grads) return value;

  Vec dlogits = probs;
  dlogits[target] -= 1.0;
  for (std::size_t i = 0; i < 2; ++i) dlogits[i] *= cw;

  Vec dh(hidden.size());
  for (std::size_t i = 0; i < 2; ++i) {
    const double g = dlogits[i];
    grads->b2[i] += g;
    auto wrow = weights.w2.row(i);
    auto grow = grads->w2.row(i);
    for (std::size_t j = 0; j < hidden.size(); ++j) {
      grow[j] += g * hidden[j];
      dh[j] += g * wrow[j];
    }
  }
  for (std::size_t j = 0; j < hidden.size(); ++j) {
    const double g = pre[j] > 0.0 ? dh[j] : 0.0;
    grads->b1[j] += g;
    auto grow = grads->w1.row(j);
    for (std::size_t k = 0; k < u2.size(); ++k) grow[k] += g * u2[k];
  }
  return value;
}

ModelWeights train_baseline(const std::vector<Sample>& dataset, const HyperParams& hyper,
                            const TrainConfig& config, TrainLog* log) {
  config.validate();
  if (dataset.empty()) throw ParameterError("train_baseline: empty dataset");
  ModelWeights weights = init_weights(hyper, config.seed);
  ModelGrads grads = ModelGrads::zeros_like(weights);
  Adam adam(config);
  Rng shuffler(config.seed ^ kShuffleStream);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  auto params = param_views(weights);
  auto gviews = grad_views(grads);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      grads.zero();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = dataset[order[i]];
        std::uint32_t pred = 0;
        loss_sum += model_loss_and_grads(weights, hyper, s, &grads, &pred);
        if (pred == s.answer_id) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : gviews) {
        for (double& x : g) x *= inv;
      }
      zero_pad_rows(grads.embeds);
      if (config.grad_clip_norm) clip_global_norm(gviews, *config.grad_clip_norm);
      adam.step(params, const_views(gviews));
      zero_pad_rows(weights.embeds);
    }
    const double mean_loss = loss_sum / static_cast<double>(dataset.size());
    if (!std::isfinite(mean_loss)) {
      throw ParameterError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
    }
    if (log) {
      log->push_back({epoch, "train", mean_loss,
                      static_cast<double>(correct) / static_cast<double>(dataset.size())});
    }
  }
  return weights;
}

std::vector<Vec> collect_u2(const ModelWeights& weights, const HyperParams& hyper,
                            const std::vector<Sample>& dataset) {
  std::vector<Vec> out;
  out.reserve(dataset.size());
  const Mat* pe = weights.pe ? &*weights.pe : nullptr;
  for (const auto& sample : dataset) {
    FlopLedger scratch;
    const auto memory = embed_story_memory(weights, hyper, sample);
    Vec u = embed_query(sample.query_ids, weights.embeds[hyper.query_embed_index()], pe, scratch);
    const Mat* r = hyper.variant == Variant::KeyValue ? &weights.r[0] : nullptr;
    out.push_back(attention_hop(u, memory[0], std::nullopt, r, scratch).u_out);
  }
  return out;
}

Mat train_fc_e(const ModelWeights& weights, const HyperParams& hyper,
               const std::vector<Sample>& dataset, const TrainConfig& config, TrainLog* log) {
  config.validate();
  Mat w_e = weights.w;  // early head starts from the full-depth head
  if (config.epochs == 0) return w_e;
  if (dataset.empty()) throw ParameterError("train_fc_e: empty dataset");

  const auto features = collect_u2(weights, hyper, dataset);
  Mat grad(w_e.rows(), w_e.cols());
  Adam adam(config);
  Rng shuffler(config.seed ^ kShuffleStream);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::span<double>> params{w_e.span()};
  std::vector<std::span<double>> gviews{grad.span()};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(grad.span().begin(), grad.span().end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        std::uint32_t pred = 0;
        loss_sum += head_loss_and_grad(w_e, features[idx], dataset[idx].answer_id, &grad, &pred);
        if (pred == dataset[idx].answer_id) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& x : grad.span()) x *= inv;
      if (config.grad_clip_norm) clip_global_norm(gviews, *config.grad_clip_norm);
      adam.step(params, const_views(gviews));
    }
    const double mean_loss = loss_sum / static_cast<double>(dataset.size());
    if (!std::isfinite(mean_loss)) {
      throw ParameterError("early-head training diverged at epoch " + std::to_string(epoch));
    }
    if (log) {
      log->push_back({epoch, "train", mean_loss,
                      static_cast<double>(correct) / static_cast<double>(dataset.size())});
    }
  }
  return w_e;
}

std::array<double, 2> inverse_frequency_weights(const std::vector<IcnLabel>& labels) {
  std::array<double, 2> counts{0.0, 0.0};
  for (const auto& l : labels) counts[l.label == Route::Easy ? 0 : 1] += 1.0;
  if (counts[0] == 0.0 || counts[1] == 0.0) return {1.0, 1.0};
  const double n = counts[0] + counts[1];
  std::array<double, 2> w{n / (2.0 * counts[0]), n / (2.0 * counts[1])};
  const double mean = (w[0] + w[1]) / 2.0;
  return {w[0] / mean, w[1] / mean};
}

IcnWeights train_icn(const std::vector<Vec>& features, const std::vector<IcnLabel>& labels,
                     std::size_t d, std::size_t hidden, const TrainConfig& config,
                     const LossSpec& loss, TrainLog* log) {
  config.validate();
  if (features.size() != labels.size() || features.empty()) {
    throw ParameterError("train_icn: features and labels must align and be non-empty");
  }
  bool has_easy = false, has_hard = false;
  for (const auto& l : labels) (l.label == Route::Easy ? has_easy : has_hard) = true;
  if (!has_easy || !has_hard) {
    std::cerr << "train_icn: single-class label set; the gate will be degenerate\n";
  }

  Rng rng(config.seed);
  IcnWeights icn{Mat(hidden, d), Vec(hidden), Mat(2, hidden), Vec(2)};
  const double s1 = std::sqrt(2.0 / static_cast<double>(d));
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
  for (double& x : icn.w1.span()) x = rng.gaussian(s1);
  for (double& x : icn.w2.span()) x = rng.gaussian(s2);

  IcnGrads grads = IcnGrads::zeros_like(icn);
  Adam adam(config);
  Rng shuffler(config.seed ^ kShuffleStream);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::span<double>> params{icn.w1.span(), icn.b1.span(), icn.w2.span(),
                                        icn.b2.span()};
  std::vector<std::span<double>> gviews{grads.w1.span(), grads.b1.span(), grads.w2.span(),
                                        grads.b2.span()};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      grads.zero();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        Route pred = Route::Easy;
        loss_sum += icn_loss_and_grads(icn, features[idx], labels[idx].label, loss, &grads, &pred);
        if (pred == labels[idx].label) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : gviews) {
        for (double& x : g) x *= inv;
      }
      if (config.grad_clip_norm) clip_global_norm(gviews, *config.grad_clip_norm);
      adam.step(params, const_views(gviews));
    }
    const double mean_loss = loss_sum / static_cast<double>(labels.size());
    if (!std::isfinite(mean_loss)) {
      throw ParameterError("gate training diverged at epoch " + std::to_string(epoch));
    }
    if (log) {
      log->push_back({epoch, "train", mean_loss,
                      static_cast<double>(correct) / static_cast<double>(labels.size())});
    }
  }
  return icn;
}

CalibrationResult calibrate_thresholds(const ModelWeights& weights, const HyperParams& hyper,
                                       const std::vector<Sample>& validation, GateMode mode,
                                       double accuracy_budget) {
  if (!weights.icn || !weights.w_e) {
    throw ConfigError("calibration needs trained ICN and W_E");
  }
  if (validation.empty()) throw ParameterError("calibration needs a validation set");

  struct Entry {
    unsigned task;
    bool fce_ok;
    bool fch_ok;
    double p_easy;
  };
  std::vector<Entry> entries;
  entries.reserve(validation.size());
  ForwardOptions one_hop{.policy = HopPolicy::OneHop};
  ForwardOptions all_hops{.policy = HopPolicy::AllHops};
  for (const auto& s : validation) {
    const auto memory = embed_story_memory(weights, hyper, s);
    const Prediction early = forward_with_memory(weights, hyper, s, memory, one_hop);
    const Prediction full = forward_with_memory(weights, hyper, s, memory, all_hops);
    FlopLedger scratch;
    const RouteProbs probs = icn_forward(early.trace.front().u_out, *weights.icn, scratch);
    entries.push_back({s.task_id, early.answer_id == s.answer_id, full.answer_id == s.answer_id,
                       probs.easy});
  }

  auto gated_loss = [&](const std::vector<const Entry*>& group, double z) {
    std::size_t base_ok = 0, gated_ok = 0;
    for (const auto* e : group) {
      base_ok += e->fch_ok;
      const bool easy = e->p_easy > 0.5 && e->p_easy > z;
      gated_ok += easy ? e->fce_ok : e->fch_ok;
    }
    return (static_cast<double>(base_ok) - static_cast<double>(gated_ok)) /
           static_cast<double>(group.size());
  };

  CalibrationResult result;
  if (mode == GateMode::NC) {
    result.config = GateConfig{GateMode::NC, 0.5, {}};
    return result;
  }

  std::vector<double> grid;
  for (int i = 0; i < 50; ++i) grid.push_back(0.50 + 0.01 * i);

  if (mode == GateMode::Global) {
    std::vector<const Entry*> pooled;
    for (const auto& e : entries) pooled.push_back(&e);
    result.config = GateConfig{GateMode::Global, 1.0, {}};
    bool found = false;
    for (double z : grid) {
      if (gated_loss(pooled, z) <= accuracy_budget) {
        result.config.z_global = z;
        found = true;
        break;
      }
    }
    if (!found) result.all_hard_tasks.push_back(0);  // pooled set flagged
    return result;
  }

  // PerTask: unlisted tasks fall back to z_global = 0.5 (plain argmax,
  // i.e. no activation module).
  result.config = GateConfig{GateMode::PerTask, 0.5, {}};
  std::map<unsigned, std::vector<const Entry*>> by_task;
  for (const auto& e : entries) by_task[e.task].push_back(&e);
  for (const auto& [task, group] : by_task) {
    if (gated_loss(group, 0.5) <= accuracy_budget) continue;
    bool found = false;
    for (double z : grid) {
      if (gated_loss(group, z) <= accuracy_budget) {
        result.config.z_per_task[task] = z;
        found = true;
        break;
      }
    }
    if (!found) {
      result.config.z_per_task[task] = 1.0;
      result.all_hard_tasks.push_back(task);
    }
  }
  return result;
}

std::string train_log_jsonl(const TrainLog& log) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& e : log) {
    out << "{\"epoch\":" << e.epoch << ",\"split\":\"" << e.split << "\",\"loss\":" << e.loss
        << ",\"accuracy\":" << e.accuracy << "}\n";
  }
  return out.str();
}

}  // namespace hopgate
