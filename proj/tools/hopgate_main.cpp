// hopgate: train, gate, prune and profile memory-network question
// answering with exact FLOP accounting.

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hopgate/babi_gen.hpp"
#include "hopgate/checkpoint.hpp"
#include "hopgate/cost_model.hpp"
#include "hopgate/eval.hpp"
#include "hopgate/pipeline.hpp"
#include "hopgate/pruner.hpp"
#include "hopgate/trainer.hpp"

namespace {

using namespace hopgate;

struct DataFlags {
  std::string data_dir;
  std::vector<unsigned> tasks;
  std::size_t n_s = 50;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
  cmd->add_option("--data", flags.data_dir, "directory of qa{K}_*_{train,test}.txt files")
      ->required();
  cmd->add_option("--tasks", flags.tasks, "task ids to load (default: all present)")
      ->delimiter(',');
  cmd->add_option("--ns", flags.n_s, "memory slots per story")->capture_default_str();
}

GateMode parse_scenario(const std::string& name) { return gate_mode_from_string(name); }

GateConfig load_gate_or_default(const std::string& path, double z_global) {
  if (path.empty()) return GateConfig{GateMode::Global, z_global, {}};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open gate config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return GateConfig::from_json(text);
}

void check_vocab(const Checkpoint& ckpt, const DataBundle& bundle) {
  if (ckpt.hyper.vocab_size != bundle.vocab.size() || ckpt.hyper.n_w != bundle.n_w ||
      ckpt.hyper.n_s != bundle.n_s) {
    throw ConfigError(
        "checkpoint shape does not match the loaded data (vocab " +
        std::to_string(ckpt.hyper.vocab_size) + " vs " + std::to_string(bundle.vocab.size()) +
        ", n_w " + std::to_string(ckpt.hyper.n_w) + " vs " + std::to_string(bundle.n_w) +
        ", n_s " + std::to_string(ckpt.hyper.n_s) + " vs " + std::to_string(bundle.n_s) + ")");
  }
}

std::vector<RawSample> reload_raw(const DataFlags& flags) {
  TaskFiles files = load_babi_dir(flags.data_dir, flags.tasks);
  std::vector<RawSample> all = files.train;
  all.insert(all.end(), files.test.begin(), files.test.end());
  return all;
}

int cmd_train(const DataFlags& data, const std::string& out, TrainConfig train_cfg,
              HyperParams hyper) {
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  hyper.vocab_size = bundle.vocab.size();
  hyper.n_w = bundle.n_w;
  hyper.n_s = bundle.n_s;
  hyper.validate();

  std::cerr << "training on " << bundle.train.size() << " samples (V=" << hyper.vocab_size
            << ", n_w=" << hyper.n_w << ")\n";
  TrainLog log;
  ModelWeights weights = train_baseline(bundle.train, hyper, train_cfg, &log);
  save_checkpoint(out, Checkpoint{hyper, std::move(weights), std::nullopt, std::nullopt});
  write_file_atomic(out + ".log.jsonl", train_log_jsonl(log));
  write_file_atomic(out + ".data.json",
                    dataset_summary_json(reload_raw(data), bundle.vocab.size()));
  std::cerr << "final train loss " << log.back().loss << ", accuracy " << log.back().accuracy
            << "\n";
  return 0;
}

int cmd_fce(const DataFlags& data, const std::string& in, const std::string& out,
            TrainConfig cfg) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);
  TrainLog log;
  ckpt.weights.w_e = train_fc_e(ckpt.weights, ckpt.hyper, bundle.train, cfg, &log);
  save_checkpoint(out, ckpt);
  write_file_atomic(out + ".log.jsonl", train_log_jsonl(log));
  if (!log.empty()) {
    std::cerr << "early head train accuracy " << log.back().accuracy << "\n";
  }
  return 0;
}

int cmd_label(const DataFlags& data, const std::string& in, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);
  auto labels = generate_labels(ckpt.weights, ckpt.hyper, bundle.train);

  nlohmann::json arr = nlohmann::json::array();
  std::size_t easy = 0;
  for (const auto& l : labels) {
    easy += l.label == Route::Easy;
    arr.push_back({{"index", l.sample_index},
                   {"task_id", l.task_id},
                   {"label", std::string(to_string(l.label))}});
  }
  write_file_atomic(out, arr.dump(2));
  std::cerr << "labelled " << labels.size() << " samples, " << easy << " Easy\n";
  return 0;
}

int cmd_icn(const DataFlags& data, const std::string& in, const std::string& labels_path,
            const std::string& out, std::size_t hidden, TrainConfig cfg) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);
  if (!ckpt.weights.w_e) throw ConfigError("train the early head (fce) before the gate");

  std::vector<IcnLabel> labels;
  if (!labels_path.empty()) {
    std::ifstream lin(labels_path);
    if (!lin) throw ConfigError("cannot open labels " + labels_path);
    const auto doc = nlohmann::json::parse(lin);
    for (const auto& item : doc) {
      labels.push_back({item.at("index").get<std::size_t>(), item.at("task_id").get<unsigned>(),
                        item.at("label").get<std::string>() == "easy" ? Route::Easy
                                                                      : Route::Hard});
    }
    if (labels.size() != bundle.train.size()) {
      throw ConfigError("label file does not cover the training split");
    }
  } else {
    labels = generate_labels(ckpt.weights, ckpt.hyper, bundle.train);
  }

  const auto features = collect_u2(ckpt.weights, ckpt.hyper, bundle.train);
  LossSpec loss{LossKind::WeightedCrossEntropy, inverse_frequency_weights(labels)};
  TrainLog log;
  ckpt.weights.icn =
      train_icn(features, labels, ckpt.hyper.d, hidden, cfg, loss, &log);
  ckpt.hyper.icn_hidden = hidden;

  // Validation accuracy against freshly generated validation labels.
  const auto val_labels = generate_labels(ckpt.weights, ckpt.hyper, bundle.validation);
  const auto val_features = collect_u2(ckpt.weights, ckpt.hyper, bundle.validation);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < val_labels.size(); ++i) {
    FlopLedger scratch;
    RouteProbs p = icn_forward(val_features[i], *ckpt.weights.icn, scratch);
    const Route predicted = p.easy > p.hard ? Route::Easy : Route::Hard;
    ok += predicted == val_labels[i].label;
  }
  save_checkpoint(out, ckpt);
  write_file_atomic(out + ".log.jsonl", train_log_jsonl(log));
  std::cerr << "gate validation accuracy "
            << (val_labels.empty() ? 0.0
                                   : static_cast<double>(ok) /
                                         static_cast<double>(val_labels.size()))
            << "\n";
  return 0;
}

int cmd_calibrate(const DataFlags& data, const std::string& in, const std::string& scenario,
                  double budget, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);
  CalibrationResult res = calibrate_thresholds(ckpt.weights, ckpt.hyper, bundle.validation,
                                               parse_scenario(scenario), budget);
  write_file_atomic(out, res.config.to_json());
  for (unsigned t : res.all_hard_tasks) {
    std::cerr << "no threshold met the budget for task " << t << "; forced all-Hard\n";
  }
  return 0;
}

int cmd_prune(const DataFlags& data, const std::string& in, const std::string& out,
              double theta_p, std::size_t n_p, bool unused_only) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);

  const std::set<std::uint32_t> labels = train_label_set(bundle.train);
  std::set<std::uint32_t> drop = find_unused(labels, ckpt.hyper.vocab_size);
  if (!unused_only) {
    const PruneParams params{theta_p, n_p};
    for (auto idx : find_unimportant(ckpt.weights.w, params)) drop.insert(idx);
    if (ckpt.weights.w_e) {
      for (auto idx : find_unimportant(*ckpt.weights.w_e, params)) drop.insert(idx);
    }
  }
  ckpt.pruned_w = prune(ckpt.weights.w, drop, labels);
  if (ckpt.weights.w_e) ckpt.pruned_w_e = prune(*ckpt.weights.w_e, drop, labels);
  save_checkpoint(out, ckpt);
  std::cerr << "kept " << ckpt.pruned_w->kept() << "/" << ckpt.hyper.vocab_size
            << " rows (P_R = " << ckpt.pruned_w->pruned_ratio(ckpt.hyper.vocab_size) << ")\n";
  return 0;
}

int cmd_eval(const DataFlags& data, const std::string& in, const std::string& gate_path,
             const std::string& scenario, std::optional<double> theta_zs,
             const std::string& mode, bool avoid_reembed, bool no_pruned,
             const std::string& force_route, std::uint64_t seed, const std::string& out,
             std::string csv_path) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);

  EvalOptions opt;
  opt.scenario = parse_scenario(scenario);
  opt.theta_zs = theta_zs;
  opt.mode = mode == "interactive" ? AppMode::Interactive : AppMode::PreEmbedded;
  opt.avoid_reembed = avoid_reembed;
  opt.use_pruned = !no_pruned;
  opt.seed = seed;
  if (!force_route.empty()) {
    opt.force_route = force_route == "easy" ? Route::Easy : Route::Hard;
  }

  GateConfig gate = load_gate_or_default(gate_path, 0.6);
  RunReport report = evaluate(ckpt, bundle.test, gate, opt);
  write_file_atomic(out, report_json(report));
  if (csv_path.empty()) csv_path = out + ".csv";
  write_file_atomic(csv_path, report_csv(report));

  std::cerr << "pooled: baseline acc " << report.pooled.accuracy_baseline << ", adaptive acc "
            << report.pooled.accuracy_adaptive << ", zeta_E " << report.pooled.easy_ratio
            << ", mean FLOPs " << report.pooled.flops_baseline_mean << " -> "
            << report.pooled.flops_adaptive_mean << " (gap_rel " << report.pooled.gap_rel
            << ")\n";
  return 0;
}

int cmd_bench(const DataFlags& data, const std::string& in, const std::string& gate_path,
              std::size_t repeats, std::size_t limit, std::optional<std::size_t> inflate,
              const std::string& scenario, std::uint64_t seed, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(in);
  DataBundle bundle = load_babi_bundle(data.data_dir, data.tasks, data.n_s);
  check_vocab(ckpt, bundle);

  BenchOptions opt;
  opt.repeats = repeats;
  opt.limit = limit;
  opt.inflate_ns = inflate;
  opt.scenario = parse_scenario(scenario);
  opt.seed = seed;
  BenchReport report = bench(ckpt, bundle.test, load_gate_or_default(gate_path, 0.6), opt);
  write_file_atomic(out, bench_json(report));
  std::cerr << "baseline median " << report.baseline_median_ns << " ns, adaptive median "
            << report.adaptive_median_ns << " ns over " << report.n_queries << " queries (n_s "
            << report.n_s << ", zeta_E " << report.easy_ratio << ")\n";
  return 0;
}

int cmd_report(const std::string& in, const std::string& csv_path,
               const std::string& cost_csv_path) {
  std::ifstream f(in);
  if (!f) throw ConfigError("cannot open report " + in);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  RunReport report = report_from_json(text);

  if (!csv_path.empty()) write_file_atomic(csv_path, report_csv(report));
  if (!cost_csv_path.empty()) {
    write_file_atomic(cost_csv_path, cost_table_csv(report_cost_rows(report)));
  }

  std::cout << "scenario " << report.scenario << ", mode " << report.mode << "\n";
  std::cout << "task  acc_base  acc_adapt  zeta_E   FP      FN      P_R     flops_base  "
               "flops_adapt  gap_rel\n";
  auto line = [](const TaskReport& t, const std::string& name) {
    std::printf("%-5s %-9.4f %-10.4f %-8.4f %-7.4f %-7.4f %-7.4f %-11.1f %-12.1f %.5f\n",
                name.c_str(), t.accuracy_baseline, t.accuracy_adaptive, t.easy_ratio,
                t.false_positive, t.false_negative, t.pruned_ratio, t.flops_baseline_mean,
                t.flops_adaptive_mean, t.gap_rel);
  };
  for (const auto& t : report.tasks) line(t, std::to_string(t.task_id));
  line(report.pooled, "all");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive-hop memory network QA with exact FLOP accounting"};
  app.require_subcommand(1);

  DataFlags data;
  std::string checkpoint, out, labels_path, gate_path, scenario = "global";
  std::string mode = "pre", force_route, csv_path, cost_csv_path, report_in;
  std::uint64_t seed = 1;
  TrainConfig train_cfg;
  HyperParams hyper;
  double budget = 0.01, theta_p = 0.1;
  std::size_t n_p = 13, hidden = 32, repeats = 11, limit = 200;
  std::optional<double> theta_zs;
  std::optional<std::size_t> inflate;
  bool unused_only = false, avoid_reembed = false, no_pruned = false;
  std::string variant = "conventional", tying = "adjacent";

  auto add_train_flags = [&](CLI::App* cmd, bool full) {
    cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
    cmd->add_option("--epochs", train_cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", train_cfg.batch_size, "batch size")->capture_default_str();
    cmd->add_option("--lr", train_cfg.learning_rate, "Adam learning rate")->capture_default_str();
    if (full) {
      cmd->add_option("--dim", hyper.d, "embedding dimension")->capture_default_str();
      cmd->add_option("--hops", hyper.hops, "attention hops")->capture_default_str();
      cmd->add_option("--variant", variant, "conventional|key_value")->capture_default_str();
      cmd->add_option("--tying", tying, "adjacent|hop_specific")->capture_default_str();
    }
  };

  CLI::App* train = app.add_subcommand("train", "train the multi-hop baseline");
  add_data_flags(train, data);
  train->add_option("--out", out, "output checkpoint")->required();
  add_train_flags(train, true);

  CLI::App* fce = app.add_subcommand("fce", "train the early-exit head from hop-1 keys");
  add_data_flags(fce, data);
  fce->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  fce->add_option("--out", out, "output checkpoint")->required();
  add_train_flags(fce, false);

  CLI::App* label = app.add_subcommand("label", "derive Easy/Hard labels for the gate");
  add_data_flags(label, data);
  label->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  label->add_option("--out", out, "output labels JSON")->required();

  CLI::App* icn = app.add_subcommand("icn", "train the two-layer difficulty gate");
  add_data_flags(icn, data);
  icn->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  icn->add_option("--labels", labels_path, "labels JSON (regenerated when omitted)");
  icn->add_option("--out", out, "output checkpoint")->required();
  icn->add_option("--l1", hidden, "gate hidden width")->capture_default_str();
  add_train_flags(icn, false);

  CLI::App* calibrate = app.add_subcommand("calibrate", "search confidence thresholds");
  add_data_flags(calibrate, data);
  calibrate->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  calibrate->add_option("--scenario", scenario, "global|pertask")->capture_default_str();
  calibrate->add_option("--budget", budget, "max accuracy loss per task")->capture_default_str();
  calibrate->add_option("--out", out, "output gate config JSON")->required();

  CLI::App* prune_cmd = app.add_subcommand("prune", "drop unused/unimportant answer rows");
  add_data_flags(prune_cmd, data);
  prune_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  prune_cmd->add_option("--out", out, "output checkpoint")->required();
  prune_cmd->add_option("--theta-p", theta_p, "magnitude threshold")->capture_default_str();
  prune_cmd->add_option("--n-p", n_p, "small weights per unimportant row")->capture_default_str();
  prune_cmd->add_flag("--unused-only", unused_only, "skip the magnitude rule");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score baseline vs adaptive inference");
  add_data_flags(eval_cmd, data);
  eval_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  eval_cmd->add_option("--gate", gate_path, "gate config JSON (default z_G = 0.6)");
  eval_cmd->add_option("--scenario", scenario, "nc|global|pertask")->capture_default_str();
  eval_cmd->add_option("--theta-zs", theta_zs, "zero-skip threshold");
  eval_cmd->add_option("--mode", mode, "pre|interactive")->capture_default_str();
  eval_cmd->add_flag("--avoid-reembed", avoid_reembed,
                     "skip re-embedding slots dropped in hop 1 (interactive)");
  eval_cmd->add_flag("--no-pruned", no_pruned, "ignore pruned heads in the checkpoint");
  eval_cmd->add_option("--force-route", force_route, "easy|hard (diagnostic)");
  eval_cmd->add_option("--seed", seed, "seed recorded in the report")->capture_default_str();
  eval_cmd->add_option("--out", out, "output report JSON")->required();
  eval_cmd->add_option("--csv", csv_path, "output report CSV (default <out>.csv)");

  CLI::App* bench_cmd = app.add_subcommand("bench", "wall-clock medians per serving path");
  add_data_flags(bench_cmd, data);
  bench_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  bench_cmd->add_option("--gate", gate_path, "gate config JSON (default z_G = 0.6)");
  bench_cmd->add_option("--scenario", scenario, "nc|global|pertask")->capture_default_str();
  bench_cmd->add_option("--repeat", repeats, "timing repeats (median)")->capture_default_str();
  bench_cmd->add_option("--limit", limit, "queries per pass")->capture_default_str();
  bench_cmd->add_option("--inflate-ns", inflate, "pad stories to this many memory slots");
  bench_cmd->add_option("--seed", seed, "seed recorded in the report")->capture_default_str();
  bench_cmd->add_option("--out", out, "output bench JSON")->required();

  CLI::App* report_cmd = app.add_subcommand("report", "render a saved eval report");
  report_cmd->add_option("--in", report_in, "report JSON")->required();
  report_cmd->add_option("--csv", csv_path, "write per-task CSV here");
  report_cmd->add_option("--cost-csv", cost_csv_path, "write the cost-table CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      train_cfg.seed = seed;
      hyper.variant = variant == "key_value" ? Variant::KeyValue : Variant::Conventional;
      hyper.tying = tying == "hop_specific" ? Tying::HopSpecific : Tying::Adjacent;
      return cmd_train(data, out, train_cfg, hyper);
    }
    if (fce->parsed()) {
      train_cfg.seed = seed;
      if (!fce->count("--epochs")) train_cfg.epochs = 40;
      return cmd_fce(data, checkpoint, out, train_cfg);
    }
    if (label->parsed()) return cmd_label(data, checkpoint, out);
    if (icn->parsed()) {
      train_cfg.seed = seed;
      if (!icn->count("--epochs")) train_cfg.epochs = 80;
      return cmd_icn(data, checkpoint, labels_path, out, hidden, train_cfg);
    }
    if (calibrate->parsed()) return cmd_calibrate(data, checkpoint, scenario, budget, out);
    if (prune_cmd->parsed()) {
      return cmd_prune(data, checkpoint, out, theta_p, n_p, unused_only);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(data, checkpoint, gate_path, scenario, theta_zs, mode, avoid_reembed,
                      no_pruned, force_route, seed, out, csv_path);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(data, checkpoint, gate_path, repeats, limit, inflate, scenario, seed,
                       out);
    }
    if (report_cmd->parsed()) return cmd_report(report_in, csv_path, cost_csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
