#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hopgate/engine.hpp"
#include "hopgate/gate.hpp"

namespace hopgate {

struct TrainConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::optional<double> grad_clip_norm = 40.0;

  void validate() const;
};

enum class LossKind { CrossEntropy, WeightedCrossEntropy };

struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  std::array<double, 2> class_weights{1.0, 1.0};  // Easy, Hard
};

/// One JSON-lines record of training progress.
struct EpochStats {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};
using TrainLog = std::vector<EpochStats>;

/// Gaussian init (stdev 0.1) with the padding row zeroed; R matrices start
/// near identity; the early head and gate start absent.
ModelWeights init_weights(const HyperParams& hyper, std::uint64_t seed);

/// Gradients for every trainable tensor of the base model.
struct ModelGrads {
  std::vector<Mat> embeds;
  Mat w{1, 1};
  std::vector<Mat> r;

  static ModelGrads zeros_like(const ModelWeights& weights);
  void zero();
};

/// Softmax cross-entropy of the full-depth forward on one sample.
/// Accumulates analytic gradients into `grads` when non-null; reports the
/// argmax answer through `predicted` when non-null.
double model_loss_and_grads(const ModelWeights& weights, const HyperParams& hyper,
                            const Sample& sample, ModelGrads* grads,
                            std::uint32_t* predicted = nullptr);

/// Cross-entropy of one linear answer head on a fixed feature vector;
/// accumulates d(loss)/d(head) when `grad` is non-null.
double head_loss_and_grad(const Mat& head, const Vec& u, std::uint32_t answer, Mat* grad,
                          std::uint32_t* predicted = nullptr);

struct IcnGrads {
  Mat w1{1, 1};
  Vec b1{0.0};
  Mat w2{1, 1};
  Vec b2{0.0, 0.0};

  static IcnGrads zeros_like(const IcnWeights& weights);
  void zero();
};

/// (Weighted) cross-entropy of the gate on one feature vector.
double icn_loss_and_grads(const IcnWeights& weights, const Vec& u2, Route label,
                          const LossSpec& loss, IcnGrads* grads, Route* predicted = nullptr);

/// Adam over every trainable tensor; deterministic given seed. Pads are
/// re-zeroed after every step. Throws on divergence (non-finite loss).
ModelWeights train_baseline(const std::vector<Sample>& dataset, const HyperParams& hyper,
                            const TrainConfig& config, TrainLog* log = nullptr);

/// Hop-1 output key of every sample (the gate's and early head's input).
std::vector<Vec> collect_u2(const ModelWeights& weights, const HyperParams& hyper,
                            const std::vector<Sample>& dataset);

/// Trains the early-exit head from W's values with every other tensor
/// frozen. Zero epochs returns W unchanged.
Mat train_fc_e(const ModelWeights& weights, const HyperParams& hyper,
               const std::vector<Sample>& dataset, const TrainConfig& config,
               TrainLog* log = nullptr);

/// Inverse-class-frequency weights normalized to mean 1. A single-class
/// label set degenerates to {1, 1}.
std::array<double, 2> inverse_frequency_weights(const std::vector<IcnLabel>& labels);

/// Trains the two-layer gate on cached hop-1 features.
IcnWeights train_icn(const std::vector<Vec>& features, const std::vector<IcnLabel>& labels,
                     std::size_t d, std::size_t hidden, const TrainConfig& config,
                     const LossSpec& loss, TrainLog* log = nullptr);

struct CalibrationResult {
  GateConfig config;
  /// Tasks where no grid threshold met the budget; forced all-Hard (z = 1).
  std::vector<unsigned> all_hard_tasks;
};

/// Grid search over z in {0.50, 0.51, ..., 0.99}: per task the smallest
/// threshold whose gated accuracy loss vs the full-depth baseline stays
/// within `accuracy_budget`. Tasks already within budget at 0.5 are left
/// out of the per-task map (the emitted fallback z_global is 0.5, i.e.
/// plain argmax). Global mode searches once over the pooled set.
CalibrationResult calibrate_thresholds(const ModelWeights& weights, const HyperParams& hyper,
                                       const std::vector<Sample>& validation, GateMode mode,
                                       double accuracy_budget);

/// JSON-lines encoding of a training log.
std::string train_log_jsonl(const TrainLog& log);

}  // namespace hopgate
