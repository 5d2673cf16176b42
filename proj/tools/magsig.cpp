// Command-line front end: simulate recordings, featurize them, train and
// evaluate classifiers, and run the desk-scale experiment suite.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magsig/eval.hpp"
#include "magsig/features.hpp"
#include "magsig/fieldsim.hpp"
#include "magsig/harness.hpp"
#include "magsig/models.hpp"
#include "magsig/sigproc.hpp"

namespace {

using namespace magsig;

constexpr int kExitThreshold = 2;

int cmd_simulate(int structure, int env, std::uint64_t seed,
                 std::optional<double> sir_db, double pace, double lateral,
                 double yaw, double pitch, double roll, double duration,
                 std::optional<double> start_offset, const std::string& out) {
  fieldsim::WalkSpec walk;
  walk.pace_mps = pace;
  walk.lateral_distance_m = lateral;
  walk.heading_azimuth_deg = yaw;
  walk.pitch_deg = pitch;
  walk.roll_deg = roll;
  walk.duration_s = duration;
  walk.start_offset_m =
      start_offset ? *start_offset : pace * duration / 2.0 - 3.0;

  fieldsim::ClutterSpec clutter = harness::environment_preset(env);
  clutter.target_sir_db = sir_db;
  const auto rec = fieldsim::simulate_pass(
      walk, fieldsim::build_superstructure(structure), clutter,
      fieldsim::SensorSpec{}, seed);
  fieldsim::write_recording_csv(rec, out);
  std::cout << "wrote " << out << " (" << rec.size() << " samples, "
            << rec.duration_s() << " s)\n";
  try {
    std::cout << "measured SIR: " << sigproc::measure_sir_db(rec) << " dB\n";
  } catch (const std::domain_error&) {
    std::cout << "measured SIR: n/a\n";
  }
  return 0;
}

int cmd_featurize(const std::string& in, const std::string& out,
                  const std::string& dump_frames, double window,
                  double shift) {
  const auto rec = fieldsim::read_recording_csv(in);
  auto frames = sigproc::frame_stream(rec, window, shift);
  sigproc::label_frames(frames, rec.pass_events);
  if (!dump_frames.empty()) sigproc::write_frames_jsonl(frames, dump_frames);
  const auto vectors = features::featurize_frames(frames);
  features::write_feature_csv(vectors, out);
  std::cout << "wrote " << out << " (" << vectors.size() << " vectors from "
            << frames.size() << " frames)\n";
  return 0;
}

int cmd_train(const std::string& features_path, const std::string& family,
              const std::string& out, int epochs, std::uint64_t seed,
              const std::string& history) {
  const auto vectors = features::read_feature_csv(features_path);
  models::Dataset data;
  data.x = features::to_matrix(vectors);
  data.y = features::to_labels(vectors);

  models::ModelSpec spec;
  spec.family = models::family_from_name(family);
  models::TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.seed = seed;

  const auto model = models::train(data, spec, cfg);
  models::save_model(model, out);
  if (!history.empty()) models::write_history_csv(model, history);
  std::cout << "wrote " << out
            << " (best val accuracy: " << model.best_val_accuracy() << ")\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path,
                 const std::string& features_path, const std::string& report,
                 const std::string& roc_prefix) {
  const auto model = models::load_model(model_path);
  const auto vectors = features::read_feature_csv(features_path);
  const auto probs = model.predict_proba(features::to_matrix(vectors));
  const auto labels = features::to_labels(vectors);
  auto rep = eval::evaluate_frames(probs, labels);
  if (!report.empty()) eval::write_report_json(rep, report);
  if (!roc_prefix.empty()) eval::write_roc_csvs(rep, roc_prefix);
  std::cout << "localization accuracy: " << rep.localization_accuracy << " %\n"
            << "macro AUC: " << rep.macro_auc << "\n"
            << "detection accuracy: " << rep.detection_accuracy << " %\n";
  return 0;
}

void print_results(std::span<const harness::ConditionResult> results) {
  for (const auto& r : results)
    std::cout << r.condition << " " << models::family_name(r.family)
              << ": accuracy " << r.accuracy << " % (spread "
              << r.accuracy_spread << "), AUC " << r.auc << ", MLE " << r.mle_m
              << " m, max error " << r.max_error_m << " m\n";
}

int report_check(const std::string& name, const harness::CheckResult& check) {
  if (check.ok()) {
    std::cout << name << ": all thresholds met\n";
    return 0;
  }
  for (const auto& f : check.failures)
    std::cout << name << " threshold failure: " << f << "\n";
  return kExitThreshold;
}

int cmd_experiment(const std::string& which, const std::string& config_path,
                   const std::string& out_dir, bool lstm_only) {
  harness::ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = harness::load_config(config_path);
  } else {
    harness::apply_env_overrides(cfg);
  }
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (lstm_only) cfg.families = {models::Family::kLstm};
  if (which != "baseline" && which != "all")
    cfg.families = {models::Family::kLstm};  // sweeps only need the LSTM

  std::cout << "running baseline (" << cfg.families.size() << " families, "
            << cfg.seeds.size() << " seeds)...\n";
  const auto baseline = harness::run_baseline(cfg);
  print_results(baseline.results);

  std::vector<harness::ConditionResult> all = baseline.results;
  int exit_code = 0;
  if (which == "baseline" || which == "all")
    exit_code |= report_check("baseline", harness::check_baseline(baseline));

  if (which == "sir" || which == "all") {
    const double sirs[] = {8.0, 6.0, 4.0, 0.0};
    const auto res = harness::run_sir_sweep(cfg, baseline, sirs);
    print_results(res);
    exit_code |= report_check("sir", harness::check_sir_sweep(res));
    all.insert(all.end(), res.begin(), res.end());
  }
  if (which == "decimate" || which == "all") {
    const double rates[] = {120.0, 60.0, 30.0, 20.0};
    const auto res = harness::run_decimation(cfg, baseline, rates);
    print_results(res);
    exit_code |= report_check("decimate", harness::check_decimation(res, baseline));
    all.insert(all.end(), res.begin(), res.end());
  }
  if (which == "fewshot" || which == "all") {
    const int shots[] = {5, 10, 20, 30};
    const auto res = harness::run_fewshot(cfg, baseline, shots);
    print_results(res);
    exit_code |= report_check("fewshot", harness::check_fewshot(res));
    all.insert(all.end(), res.begin(), res.end());
  }
  if (which == "pace" || which == "all") {
    const double paces[] = {0.8, 1.2, 1.6, 2.0};
    const auto res = harness::run_pace_sweep(cfg, baseline, paces);
    print_results(res);
    exit_code |= report_check("pace", harness::check_pace_sweep(res));
    all.insert(all.end(), res.begin(), res.end());
  }

  if (!cfg.out_dir.empty()) {
    harness::write_condition_outputs(all, cfg.out_dir);
    std::cout << "wrote " << cfg.out_dir << "/summary.csv\n";
  }
  return exit_code ? kExitThreshold : 0;
}

int cmd_report(const std::string& path) {
  const auto rep = eval::read_report_json(path);
  std::cout << "localization accuracy: " << rep.localization_accuracy << " %\n"
            << "detection accuracy: " << rep.detection_accuracy << " %\n"
            << "macro AUC: " << rep.macro_auc << "\n"
            << "MLE: " << rep.mle_m << " m (max " << rep.max_error_m
            << " m, matched " << rep.matched_events << ", missed "
            << rep.missed_passes << ")\n";
  if (!rep.condition.empty()) {
    std::cout << "condition:";
    for (const auto& [k, v] : rep.condition) std::cout << " " << k << "=" << v;
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magsig: magnetometer superstructure localization pipeline"};
  app.require_subcommand(1);

  // simulate
  int structure = 1, env = 0;
  std::uint64_t seed = 1;
  double sir = 0.0, pace = 1.2, lateral = 0.75, yaw = 0.0, pitch = 0.0,
         roll = 0.0, duration = 40.0, start_offset = 0.0;
  std::string out_path = "recording.csv";
  auto* sim = app.add_subcommand("simulate", "simulate one labeled pass");
  sim->add_option("--structure", structure, "superstructure id 1..6")
      ->check(CLI::Range(1, 6));
  sim->add_option("--env", env, "environment preset 0 (shielded) .. 4")
      ->check(CLI::Range(0, 4));
  sim->add_option("--seed", seed);
  auto* sir_opt = sim->add_option("--sir", sir, "target SIR in dB");
  sim->add_option("--pace", pace);
  sim->add_option("--lateral", lateral);
  sim->add_option("--yaw", yaw);
  sim->add_option("--pitch", pitch);
  sim->add_option("--roll", roll);
  sim->add_option("--duration", duration);
  auto* off_opt = sim->add_option("--start-offset", start_offset);
  sim->add_option("--out", out_path);

  // featurize
  std::string feat_in, feat_out = "features.csv", dump_frames;
  double window = 4.0, shift = 1.0;
  auto* feat = app.add_subcommand("featurize", "frames + feature vectors");
  feat->add_option("--in", feat_in)->required();
  feat->add_option("--out", feat_out);
  feat->add_option("--dump-frames", dump_frames, "JSONL frame dump");
  feat->add_option("--window", window);
  feat->add_option("--shift", shift);

  // train
  std::string train_features, family = "lstm", model_out = "model.bin",
              history;
  int epochs = 25;
  std::uint64_t train_seed = 1;
  auto* train = app.add_subcommand("train", "train one classifier family");
  train->add_option("--features", train_features)->required();
  train->add_option("--family", family,
                    "svm|svm_pca|dnn|rnn|gru|lstm");
  train->add_option("--out", model_out);
  train->add_option("--epochs", epochs);
  train->add_option("--seed", train_seed);
  train->add_option("--history", history, "training history CSV");

  // evaluate
  std::string eval_model, eval_features, eval_report, roc_prefix;
  auto* evaluate = app.add_subcommand("evaluate", "frame-level evaluation");
  evaluate->add_option("--model", eval_model)->required();
  evaluate->add_option("--features", eval_features)->required();
  evaluate->add_option("--report", eval_report, "JSON report path");
  evaluate->add_option("--roc", roc_prefix, "ROC CSV prefix");

  // experiment
  std::string which, config_path, exp_out;
  bool lstm_only = false;
  auto* experiment =
      app.add_subcommand("experiment", "desk-scale reproduction suites");
  experiment->add_option("suite", which, "baseline|sir|decimate|fewshot|pace|all")
      ->required()
      ->check(CLI::IsMember({"baseline", "sir", "decimate", "fewshot", "pace",
                             "all"}));
  experiment->add_option("--config", config_path, "JSON experiment config");
  experiment->add_option("--out", exp_out, "output directory");
  experiment->add_flag("--lstm-only", lstm_only,
                       "restrict the baseline to the LSTM");

  // report
  std::string report_path;
  auto* report = app.add_subcommand("report", "print a stored JSON report");
  report->add_option("path", report_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim)
      return cmd_simulate(structure, env, seed,
                          *sir_opt ? std::optional<double>(sir) : std::nullopt,
                          pace, lateral, yaw, pitch, roll, duration,
                          *off_opt ? std::optional<double>(start_offset)
                                   : std::nullopt,
                          out_path);
    if (*feat) return cmd_featurize(feat_in, feat_out, dump_frames, window, shift);
    if (*train)
      return cmd_train(train_features, family, model_out, epochs, train_seed,
                       history);
    if (*evaluate)
      return cmd_evaluate(eval_model, eval_features, eval_report, roc_prefix);
    if (*experiment) return cmd_experiment(which, config_path, exp_out, lstm_only);
    if (*report) return cmd_report(report_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
