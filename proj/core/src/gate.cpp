#include "hopgate/gate.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "hopgate/engine.hpp"

namespace hopgate {

void IcnWeights::validate(std::size_t d) const {
  const std::size_t l1 = w1.rows();
  if (w1.cols() != d) throw DimensionError("ICN W1 must be L1 x d");
  if (b1.size() != l1) throw DimensionError("ICN b1 must have L1 entries");
  if (w2.rows() != 2 || w2.cols() != l1) throw DimensionError("ICN W2 must be 2 x L1");
  if (b2.size() != 2) throw DimensionError("ICN b2 must have 2 entries");
}

std::string_view to_string(GateMode mode) {
  switch (mode) {
    case GateMode::NC: return "nc";
    case GateMode::Global: return "global";
    case GateMode::PerTask: return "pertask";
  }
  return "nc";
}

GateMode gate_mode_from_string(std::string_view name) {
  if (name == "nc") return GateMode::NC;
  if (name == "global") return GateMode::Global;
  if (name == "pertask") return GateMode::PerTask;
  throw ConfigError("unknown gate mode '" + std::string(name) + "'");
}

double GateConfig::threshold_for(unsigned task_id) const {
  if (mode == GateMode::PerTask) {
    auto it = z_per_task.find(task_id);
    if (it != z_per_task.end()) return it->second;
  }
  return z_global;
}

void GateConfig::validate() const {
  auto check = [](double z) {
    if (!(z > 0.0 && z <= 1.0)) throw ParameterError("confidence threshold must be in (0, 1]");
  };
  check(z_global);
  for (const auto& [task, z] : z_per_task) check(z);
}

std::string GateConfig::to_json() const {
  nlohmann::json per_task = nlohmann::json::object();
  for (const auto& [task, z] : z_per_task) per_task[std::to_string(task)] = z;
  nlohmann::json doc = {
      {"mode", std::string(to_string(mode))},
      {"z_global", z_global},
      {"z_per_task", per_task},
  };
  return doc.dump(2);
}

GateConfig GateConfig::from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  GateConfig cfg;
  cfg.mode = gate_mode_from_string(doc.at("mode").get<std::string>());
  cfg.z_global = doc.at("z_global").get<double>();
  for (const auto& [key, value] : doc.at("z_per_task").items()) {
    cfg.z_per_task[static_cast<unsigned>(std::stoul(key))] = value.get<double>();
  }
  cfg.validate();
  return cfg;
}

std::string_view to_string(Route route) {
  switch (route) {
    case Route::Easy: return "easy";
    case Route::Hard: return "hard";
    case Route::Forced: return "forced";
  }
  return "forced";
}

RouteProbs icn_forward(const Vec& u2, const IcnWeights& weights, FlopLedger& ledger) {
  weights.validate(u2.size());
  Vec hidden = matvec(weights.w1, u2, ledger, FlopCategory::Icn);
  hidden = add(hidden, weights.b1, ledger, FlopCategory::Icn);
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] < 0.0) hidden[i] = 0.0;
  }
  ledger.add(FlopCategory::Icn, hidden.size());  // one comparison per ReLU
  Vec logits = matvec(weights.w2, hidden, ledger, FlopCategory::Icn);
  logits = add(logits, weights.b2, ledger, FlopCategory::Icn);
  Vec probs = softmax(logits, ledger, FlopCategory::Icn);
  return {probs[0], probs[1]};
}

Route decide_route(const RouteProbs& probs, unsigned task_id, const GateConfig& cfg) {
  const bool argmax_easy = probs.easy > probs.hard;
  if (cfg.mode == GateMode::NC) return argmax_easy ? Route::Easy : Route::Hard;
  const double z = cfg.threshold_for(task_id);
  return argmax_easy && probs.easy > z ? Route::Easy : Route::Hard;
}

Route label_from_outcomes(bool fce_correct, bool fch_correct) {
  if (fce_correct) return Route::Easy;
  if (fch_correct) return Route::Hard;
  return Route::Easy;  // neither head is right; take the cheap exit
}

std::vector<IcnLabel> generate_labels(const ModelWeights& weights, const HyperParams& hyper,
                                      const std::vector<Sample>& dataset) {
  if (!weights.w_e) throw ConfigError("label generation needs a trained W_E");
  std::vector<IcnLabel> labels;
  labels.reserve(dataset.size());
  ForwardOptions one_hop{.policy = HopPolicy::OneHop};
  ForwardOptions all_hops{.policy = HopPolicy::AllHops};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset[i];
    const auto memory = embed_story_memory(weights, hyper, s);
    const bool fce_ok = forward_with_memory(weights, hyper, s, memory, one_hop).answer_id ==
                        s.answer_id;
    const bool fch_ok = forward_with_memory(weights, hyper, s, memory, all_hops).answer_id ==
                        s.answer_id;
    labels.push_back({i, s.task_id, label_from_outcomes(fce_ok, fch_ok)});
  }
  return labels;
}

}  // namespace hopgate
