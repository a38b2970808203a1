#include "hopgate/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hopgate {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct QueryRecord {
  unsigned task = 0;
  bool base_ok = false;
  bool adapt_ok = false;
  bool routed_easy = false;
  Route label = Route::Easy;
  std::uint64_t base_flops = 0;
  std::uint64_t adapt_flops = 0;
  std::uint64_t base_ns = 0;
  std::uint64_t adapt_ns = 0;
  const Prediction* adapt_pred = nullptr;
};

TaskReport summarize(unsigned task_id, const std::vector<const QueryRecord*>& group,
                     const std::vector<Prediction>& adaptive_preds, const Checkpoint& ckpt,
                     const EvalOptions& opt) {
  TaskReport r;
  r.task_id = task_id;
  r.n_queries = group.size();
  const double n = static_cast<double>(group.size());

  std::size_t base_ok = 0, adapt_ok = 0, easy = 0;
  std::size_t hard_labels = 0, easy_labels = 0, fp = 0, fn = 0;
  std::uint64_t base_flops = 0, adapt_flops = 0, base_ns = 0, adapt_ns = 0;
  std::vector<Prediction> task_preds;
  for (const auto* q : group) {
    base_ok += q->base_ok;
    adapt_ok += q->adapt_ok;
    easy += q->routed_easy;
    if (q->label == Route::Hard) {
      ++hard_labels;
      fp += q->routed_easy;
    } else {
      ++easy_labels;
      fn += !q->routed_easy;
    }
    base_flops += q->base_flops;
    adapt_flops += q->adapt_flops;
    base_ns += q->base_ns;
    adapt_ns += q->adapt_ns;
    task_preds.push_back(*q->adapt_pred);
  }
  r.accuracy_baseline = base_ok / n;
  r.accuracy_adaptive = adapt_ok / n;
  r.easy_ratio = easy / n;
  r.false_positive = hard_labels ? static_cast<double>(fp) / hard_labels : 0.0;
  r.false_negative = easy_labels ? static_cast<double>(fn) / easy_labels : 0.0;
  r.flops_baseline_mean = static_cast<double>(base_flops) / n;
  r.flops_adaptive_mean = static_cast<double>(adapt_flops) / n;
  r.wall_ns_baseline = base_ns / group.size();
  r.wall_ns_adaptive = adapt_ns / group.size();

  const double v = static_cast<double>(ckpt.hyper.vocab_size);
  double pr_easy = 0.0, pr_hard = 0.0;
  if (opt.use_pruned && ckpt.pruned_w) pr_hard = ckpt.pruned_w->pruned_ratio(ckpt.hyper.vocab_size);
  if (opt.use_pruned && ckpt.pruned_w_e) {
    pr_easy = ckpt.pruned_w_e->pruned_ratio(ckpt.hyper.vocab_size);
  }
  r.pruned_ratio = r.easy_ratio * pr_easy + (1.0 - r.easy_ratio) * pr_hard;
  (void)v;

  const PsiEstimate psi = measure_psi(task_preds);
  r.skip_ratio_easy = psi.easy;
  r.skip_ratio_hard = psi.hard;

  CostParams params;
  params.d = ckpt.hyper.d;
  params.vocab_size = ckpt.hyper.vocab_size;
  params.n_s = ckpt.hyper.n_s;
  params.n_w = ckpt.hyper.n_w;
  params.hops = ckpt.hyper.hops;
  params.icn_hidden = ckpt.weights.icn ? ckpt.weights.icn->hidden() : ckpt.hyper.icn_hidden;
  params.variant = ckpt.hyper.variant;
  params.app_mode = opt.mode;
  params.easy_ratio = r.easy_ratio;
  params.pruned_ratio = r.pruned_ratio;
  params.skip_ratio_easy = r.skip_ratio_easy.value_or(0.0);
  params.skip_ratio_hard = r.skip_ratio_hard.value_or(0.0);
  r.cr_analytic = opt.theta_zs ? cr_zero_skip(params) : cr(params);
  r.cr_measured = r.flops_baseline_mean - r.flops_adaptive_mean;
  r.gap_rel = r.cr_analytic == 0.0 ? std::numeric_limits<double>::infinity()
                                   : std::abs(r.cr_measured - r.cr_analytic) /
                                         std::abs(r.cr_analytic);
  (void)adaptive_preds;
  return r;
}

json task_to_json(const TaskReport& r) {
  json j = {
      {"task_id", r.task_id},
      {"n_queries", r.n_queries},
      {"accuracy_baseline", r.accuracy_baseline},
      {"accuracy_adaptive", r.accuracy_adaptive},
      {"zeta_e", r.easy_ratio},
      {"fp", r.false_positive},
      {"fn", r.false_negative},
      {"p_r", r.pruned_ratio},
      {"psi_e", nullptr},
      {"psi_h", nullptr},
      {"flops_baseline_mean", r.flops_baseline_mean},
      {"flops_adaptive_mean", r.flops_adaptive_mean},
      {"cr_analytic", r.cr_analytic},
      {"cr_measured", r.cr_measured},
      {"gap_rel", r.gap_rel},
      {"wall_ns_baseline", r.wall_ns_baseline},
      {"wall_ns_adaptive", r.wall_ns_adaptive},
  };
  if (r.skip_ratio_easy) j["psi_e"] = *r.skip_ratio_easy;
  if (r.skip_ratio_hard) j["psi_h"] = *r.skip_ratio_hard;
  return j;
}

TaskReport task_from_json(const json& j) {
  TaskReport r;
  r.task_id = j.at("task_id").get<unsigned>();
  r.n_queries = j.at("n_queries").get<std::size_t>();
  r.accuracy_baseline = j.at("accuracy_baseline").get<double>();
  r.accuracy_adaptive = j.at("accuracy_adaptive").get<double>();
  r.easy_ratio = j.at("zeta_e").get<double>();
  r.false_positive = j.at("fp").get<double>();
  r.false_negative = j.at("fn").get<double>();
  r.pruned_ratio = j.at("p_r").get<double>();
  if (!j.at("psi_e").is_null()) r.skip_ratio_easy = j.at("psi_e").get<double>();
  if (!j.at("psi_h").is_null()) r.skip_ratio_hard = j.at("psi_h").get<double>();
  r.flops_baseline_mean = j.at("flops_baseline_mean").get<double>();
  r.flops_adaptive_mean = j.at("flops_adaptive_mean").get<double>();
  r.cr_analytic = j.at("cr_analytic").get<double>();
  r.cr_measured = j.at("cr_measured").get<double>();
  r.gap_rel = j.at("gap_rel").get<double>();
  r.wall_ns_baseline = j.at("wall_ns_baseline").get<std::uint64_t>();
  r.wall_ns_adaptive = j.at("wall_ns_adaptive").get<std::uint64_t>();
  return r;
}

void csv_row(std::ostringstream& out, const TaskReport& r) {
  auto opt = [](const std::optional<double>& x) {
    return x ? json(*x).dump() : std::string();
  };
  out << r.task_id << ',' << r.n_queries << ',' << json(r.accuracy_baseline).dump() << ','
      << json(r.accuracy_adaptive).dump() << ',' << json(r.easy_ratio).dump() << ','
      << json(r.false_positive).dump() << ',' << json(r.false_negative).dump() << ','
      << json(r.pruned_ratio).dump() << ',' << opt(r.skip_ratio_easy) << ','
      << opt(r.skip_ratio_hard) << ',' << json(r.flops_baseline_mean).dump() << ','
      << json(r.flops_adaptive_mean).dump() << ',' << json(r.cr_analytic).dump() << ','
      << json(r.cr_measured).dump() << ',' << json(r.gap_rel).dump() << ','
      << r.wall_ns_baseline << ',' << r.wall_ns_adaptive << '\n';
}

}  // namespace

RunReport evaluate(const Checkpoint& ckpt, const std::vector<Sample>& test,
                   const GateConfig& gate, const EvalOptions& options) {
  if (test.empty()) throw ParameterError("evaluate: empty test set");
  HyperParams hyper = ckpt.hyper;
  hyper.app_mode = options.mode;
  hyper.validate();

  const bool gated = !options.force_route.has_value();
  if (gated && (!ckpt.weights.icn || !ckpt.weights.w_e)) {
    throw ConfigError("the requested scenario needs trained ICN and W_E tensors");
  }
  GateConfig cfg = gate;
  cfg.mode = options.scenario;
  cfg.validate();

  const PrunedFC* pruned_h =
      options.use_pruned && ckpt.pruned_w ? &*ckpt.pruned_w : nullptr;
  const PrunedFC* pruned_e =
      options.use_pruned && ckpt.pruned_w_e ? &*ckpt.pruned_w_e : nullptr;

  ForwardOptions baseline_opt{.policy = HopPolicy::AllHops};
  ForwardOptions label_opt{.policy = HopPolicy::OneHop};
  ForwardOptions adaptive_opt{
      .policy = gated ? HopPolicy::Gated
                      : (*options.force_route == Route::Easy ? HopPolicy::OneHop
                                                             : HopPolicy::AllHops),
      .theta_zs = options.theta_zs,
      .avoid_reembed = options.avoid_reembed,
      .gate_cfg = &cfg,
      .pruned_fc_h = pruned_h,
      .pruned_fc_e = pruned_e,
  };

  std::vector<QueryRecord> records;
  std::vector<Prediction> adaptive_preds;
  records.reserve(test.size());
  adaptive_preds.reserve(test.size());

  for (const auto& sample : test) {
    QueryRecord q;
    q.task = sample.task_id;

    auto t0 = Clock::now();
    const Prediction base = forward(ckpt.weights, hyper, sample, baseline_opt);
    auto t1 = Clock::now();
    q.base_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();

    const Prediction early = ckpt.weights.w_e
                                 ? forward(ckpt.weights, hyper, sample, label_opt)
                                 : base;

    auto t2 = Clock::now();
    Prediction adapt = forward(ckpt.weights, hyper, sample, adaptive_opt);
    auto t3 = Clock::now();
    q.adapt_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t3 - t2).count();

    q.base_ok = base.answer_id == sample.answer_id;
    q.adapt_ok = adapt.answer_id == sample.answer_id;
    q.routed_easy = gated ? adapt.route == Route::Easy : *options.force_route == Route::Easy;
    q.label = label_from_outcomes(early.answer_id == sample.answer_id, q.base_ok);
    q.base_flops = base.ledger.total();
    q.adapt_flops = adapt.ledger.total();
    adaptive_preds.push_back(std::move(adapt));
    records.push_back(q);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].adapt_pred = &adaptive_preds[i];
  }

  RunReport report;
  report.scenario = std::string(to_string(options.scenario));
  report.mode = std::string(to_string(options.mode));
  report.theta_zs = options.theta_zs;
  report.seed = options.seed;

  std::map<unsigned, std::vector<const QueryRecord*>> by_task;
  std::vector<const QueryRecord*> pooled;
  for (const auto& q : records) {
    by_task[q.task].push_back(&q);
    pooled.push_back(&q);
  }
  for (const auto& [task, group] : by_task) {
    report.tasks.push_back(summarize(task, group, adaptive_preds, ckpt, options));
  }
  report.pooled = summarize(0, pooled, adaptive_preds, ckpt, options);
  return report;
}

std::string report_json(const RunReport& report) {
  json doc;
  doc["scenario"] = report.scenario;
  doc["mode"] = report.mode;
  doc["theta_zs"] = report.theta_zs ? json(*report.theta_zs) : json(nullptr);
  doc["seed"] = report.seed;
  doc["tasks"] = json::array();
  for (const auto& t : report.tasks) doc["tasks"].push_back(task_to_json(t));
  doc["pooled"] = task_to_json(report.pooled);
  return doc.dump(2);
}

RunReport report_from_json(const std::string& text) {
  const json doc = json::parse(text);
  RunReport report;
  report.scenario = doc.at("scenario").get<std::string>();
  report.mode = doc.at("mode").get<std::string>();
  if (!doc.at("theta_zs").is_null()) report.theta_zs = doc.at("theta_zs").get<double>();
  report.seed = doc.at("seed").get<std::uint64_t>();
  for (const auto& t : doc.at("tasks")) report.tasks.push_back(task_from_json(t));
  report.pooled = task_from_json(doc.at("pooled"));
  return report;
}

std::string report_csv(const RunReport& report) {
  std::ostringstream out;
  out << "task_id,n_queries,accuracy_baseline,accuracy_adaptive,zeta_e,fp,fn,p_r,psi_e,psi_h,"
         "flops_baseline_mean,flops_adaptive_mean,cr_analytic,cr_measured,gap_rel,"
         "wall_ns_baseline,wall_ns_adaptive\n";
  for (const auto& t : report.tasks) csv_row(out, t);
  csv_row(out, report.pooled);
  return out.str();
}

std::vector<CostTableRow> report_cost_rows(const RunReport& report) {
  std::vector<CostTableRow> rows;
  auto push = [&](const TaskReport& t, const std::string& name) {
    rows.push_back({name, report.mode, report.scenario, t.flops_baseline_mean,
                    t.flops_adaptive_mean, t.cr_analytic, t.gap_rel});
  };
  for (const auto& t : report.tasks) push(t, std::to_string(t.task_id));
  push(report.pooled, "pooled");
  return rows;
}

BenchReport bench(const Checkpoint& ckpt, const std::vector<Sample>& test,
                  const GateConfig& gate, const BenchOptions& options) {
  if (test.empty()) throw ParameterError("bench: empty test set");
  if (options.repeats == 0) throw ParameterError("bench: repeats must be >= 1");
  if (!ckpt.weights.icn || !ckpt.weights.w_e) {
    throw ConfigError("bench needs trained ICN and W_E tensors");
  }

  HyperParams hyper = ckpt.hyper;
  hyper.app_mode = AppMode::PreEmbedded;
  if (options.inflate_ns) {
    if (hyper.variant != Variant::Conventional) {
      throw ConfigError("--inflate-ns supports the conventional variant only");
    }
    if (*options.inflate_ns < hyper.n_s) throw ParameterError("inflate-ns below model n_s");
    hyper.n_s = *options.inflate_ns;
  }

  // Strided subset so every task contributes queries.
  const std::size_t stride = std::max<std::size_t>(1, test.size() / options.limit);
  std::vector<Sample> queries;
  for (std::size_t i = 0; i < test.size() && queries.size() < options.limit; i += stride) {
    const Sample& s = test[i];
    if (!options.inflate_ns) {
      queries.push_back(s);
      continue;
    }
    Sample grown{IndexGrid(hyper.n_s, s.story_grid.cols), s.query_ids, s.answer_id, s.task_id, {}};
    std::copy(s.story_grid.cells.begin(), s.story_grid.cells.end(), grown.story_grid.cells.begin());
    queries.push_back(std::move(grown));
  }

  GateConfig cfg = gate;
  cfg.mode = options.scenario;
  cfg.validate();
  ForwardOptions baseline_opt{.policy = HopPolicy::AllHops};
  ForwardOptions adaptive_opt{.policy = HopPolicy::Gated,
                              .gate_cfg = &cfg,
                              .pruned_fc_h = ckpt.pruned_w ? &*ckpt.pruned_w : nullptr,
                              .pruned_fc_e = ckpt.pruned_w_e ? &*ckpt.pruned_w_e : nullptr};

  std::vector<std::uint64_t> base_ns(options.repeats, 0), adapt_ns(options.repeats, 0);
  std::size_t easy = 0;
  for (const auto& q : queries) {
    const auto memory = embed_story_memory(ckpt.weights, hyper, q);
    // Warmup both paths once, untimed.
    (void)forward_with_memory(ckpt.weights, hyper, q, memory, baseline_opt);
    Prediction warm = forward_with_memory(ckpt.weights, hyper, q, memory, adaptive_opt);
    easy += warm.route == Route::Easy;
    for (std::size_t rep = 0; rep < options.repeats; ++rep) {
      auto t0 = Clock::now();
      (void)forward_with_memory(ckpt.weights, hyper, q, memory, baseline_opt);
      auto t1 = Clock::now();
      (void)forward_with_memory(ckpt.weights, hyper, q, memory, adaptive_opt);
      auto t2 = Clock::now();
      base_ns[rep] += std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
      adapt_ns[rep] += std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count();
    }
  }
  auto median = [](std::vector<std::uint64_t> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };

  BenchReport report;
  report.baseline_median_ns = median(base_ns);
  report.adaptive_median_ns = median(adapt_ns);
  report.easy_ratio = static_cast<double>(easy) / static_cast<double>(queries.size());
  report.n_queries = queries.size();
  report.repeats = options.repeats;
  report.n_s = hyper.n_s;
  report.seed = options.seed;
  return report;
}

std::string bench_json(const BenchReport& report) {
  json doc = {
      {"baseline_median_ns", report.baseline_median_ns},
      {"adaptive_median_ns", report.adaptive_median_ns},
      {"easy_ratio", report.easy_ratio},
      {"n_queries", report.n_queries},
      {"repeats", report.repeats},
      {"n_s", report.n_s},
      {"seed", report.seed},
  };
  return doc.dump(2);
}

}  // namespace hopgate
