#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hopgate/dataset.hpp"
#include "hopgate/tensor.hpp"

namespace hopgate {

struct ModelWeights;
struct HyperParams;

/// Two linear layers with a ReLU between them; the 2-way output scores the
/// query as Easy vs Hard.
struct IcnWeights {
  Mat w1;  // L1 x d
  Vec b1;  // L1
  Mat w2;  // 2 x L1
  Vec b2;  // 2

  std::size_t hidden() const { return w1.rows(); }
  void validate(std::size_t d) const;
};

enum class GateMode { NC, Global, PerTask };

std::string_view to_string(GateMode mode);
GateMode gate_mode_from_string(std::string_view name);

/// Confidence thresholds for the activation module. NC ignores thresholds
/// (plain argmax). PerTask falls back to z_global for unlisted tasks; a
/// threshold of 1.0 is unreachable and routes everything Hard.
struct GateConfig {
  GateMode mode = GateMode::NC;
  double z_global = 0.6;
  std::map<unsigned, double> z_per_task;

  double threshold_for(unsigned task_id) const;
  void validate() const;

  std::string to_json() const;
  static GateConfig from_json(const std::string& text);
};

enum class Route { Easy, Hard, Forced };

std::string_view to_string(Route route);

struct RouteProbs {
  double easy = 0.0;
  double hard = 0.0;
};

/// h = ReLU(w1*u2 + b1); probs = softmax(w2*h + b2). All arithmetic is
/// charged to the icn bucket.
RouteProbs icn_forward(const Vec& u2, const IcnWeights& weights, FlopLedger& ledger);

/// Easy requires both the argmax to be Easy and, outside NC mode, the max
/// probability to clear the threshold strictly; equality routes Hard.
Route decide_route(const RouteProbs& probs, unsigned task_id, const GateConfig& cfg);

/// Difficulty label for one training sample.
struct IcnLabel {
  std::size_t sample_index = 0;
  unsigned task_id = 0;
  Route label = Route::Easy;
};

/// Label rule from per-head correctness: Easy when the early head answers
/// correctly, Hard when only the full-depth head does, Easy when neither
/// does (nothing to lose, computation to gain).
Route label_from_outcomes(bool fce_correct, bool fch_correct);

/// Applies the rule to every sample by running the 1-hop head and the
/// full-depth model. Requires trained W_E.
std::vector<IcnLabel> generate_labels(const ModelWeights& weights, const HyperParams& hyper,
                                      const std::vector<Sample>& dataset);

}  // namespace hopgate
