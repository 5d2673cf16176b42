// Harness tests: environment presets, dataset builders, featurization,
// manifests, regeneration and configuration handling.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "magsig/harness.hpp"
#include "magsig/sigproc.hpp"

using namespace magsig;

TEST_CASE("environment presets: shielded training, cluttered test") {
  const auto shielded = harness::environment_preset(0);
  CHECK(shielded.static_dipoles.empty());
  CHECK(shielded.drift_scale_ut == doctest::Approx(0.0));
  CHECK(shielded.noise_std_ut < 0.5);

  std::set<double> noise_levels;
  for (int env = 1; env <= 4; ++env) {
    const auto c = harness::environment_preset(env);
    CHECK(!c.static_dipoles.empty());
    CHECK(c.noise_std_ut > shielded.noise_std_ut);
    CHECK(c.drift_scale_ut > 0.0);
    noise_levels.insert(c.noise_std_ut);
    const double earth = c.earth_field_ut.norm();
    CHECK(earth >= 20.0);
    CHECK(earth <= 70.0);
  }
  CHECK_THROWS_AS(harness::environment_preset(5), std::invalid_argument);
  CHECK_THROWS_AS(harness::environment_preset(-1), std::invalid_argument);
}

TEST_CASE("training set: shielded roles and randomized walk parameters") {
  const auto scale = harness::ScaleOptions::desk();
  const auto bundle = harness::build_training_set(2, 42, scale);
  CHECK(bundle.recordings.size() == 12);  // 2 shots x 6 structures

  std::set<int> structures;
  std::set<double> paces, yaws;
  for (const auto& e : bundle.recordings) {
    CHECK(e.role == "train-shielded");
    CHECK(e.env == 0);
    CHECK(!e.target_sir_db.has_value());
    structures.insert(e.structure_id);
    paces.insert(e.walk.pace_mps);
    yaws.insert(e.walk.heading_azimuth_deg);
    CHECK(e.walk.pace_mps >= 0.8);
    CHECK(e.walk.pace_mps <= 2.0);
    CHECK(e.walk.lateral_distance_m >= 0.5);
    CHECK(e.walk.lateral_distance_m <= 1.0);
    CHECK(e.walk.heading_azimuth_deg >= 0.0);
    CHECK(e.walk.heading_azimuth_deg < 360.0);
    REQUIRE(e.recording.pass_events.size() == 1);
    CHECK(e.recording.pass_events[0].structure_id == e.structure_id);
  }
  CHECK(structures.size() == 6);
  // Walk randomization actually varies across passes.
  CHECK(paces.size() > 6);
  CHECK(yaws.size() > 6);

  CHECK_THROWS_AS(harness::build_training_set(0, 1, scale),
                  std::invalid_argument);
}

TEST_CASE("training set: deterministic given the seed") {
  const auto scale = harness::ScaleOptions::desk();
  const auto a = harness::build_training_set(1, 7, scale);
  const auto b = harness::build_training_set(1, 7, scale);
  REQUIRE(a.recordings.size() == b.recordings.size());
  for (std::size_t i = 0; i < a.recordings.size(); ++i) {
    CHECK(a.recordings[i].seed == b.recordings[i].seed);
    CHECK(a.recordings[i].recording.bx_ut == b.recordings[i].recording.bx_ut);
    CHECK(a.recordings[i].recording.bz_ut == b.recordings[i].recording.bz_ut);
  }
  const auto c = harness::build_training_set(1, 8, scale);
  CHECK(a.recordings[0].recording.bz_ut != c.recordings[0].recording.bz_ut);
}

TEST_CASE("test set: four environments, measured SIR within one decibel") {
  const auto scale = harness::ScaleOptions::desk();
  const auto bundle = harness::build_test_set(1, 8.0, 42, scale);
  CHECK(bundle.recordings.size() == 24);  // 4 envs x 6 structures x 1 pass

  std::set<int> envs;
  for (const auto& e : bundle.recordings) {
    envs.insert(e.env);
    CHECK(e.role == "test-env-" + std::to_string(e.env));
    REQUIRE(e.target_sir_db.has_value());
    CHECK(*e.target_sir_db == doctest::Approx(8.0));
    CHECK(e.measured_sir_db == doctest::Approx(8.0).epsilon(0.125));
    // The stored measurement matches a fresh measurement of the recording.
    CHECK(sigproc::measure_sir_db(e.recording) ==
          doctest::Approx(e.measured_sir_db).epsilon(1e-9));
  }
  CHECK(envs == std::set<int>{1, 2, 3, 4});
}

TEST_CASE("featurize: labeled vectors with sane frame counts") {
  const auto scale = harness::ScaleOptions::desk();
  const auto bundle = harness::build_training_set(1, 3, scale);
  const auto feats = harness::featurize(bundle);
  CHECK(feats.data.x.cols() == features::kVectorDim);
  CHECK(feats.data.x.rows() == feats.data.y.size());
  CHECK(feats.data.x.rows() ==
        static_cast<Eigen::Index>(feats.meta.size()));
  CHECK(feats.total_frames >=
        static_cast<std::size_t>(feats.data.x.rows()));

  std::set<int> labels;
  for (Eigen::Index i = 0; i < feats.data.y.size(); ++i) {
    CHECK(feats.data.y[i] >= 0);
    CHECK(feats.data.y[i] <= 6);
    labels.insert(feats.data.y[i]);
  }
  // Both background and every structure appear in a full training pass set.
  CHECK(labels.size() == 7);
  CHECK(feats.data.x.allFinite());
}

TEST_CASE("regenerate: manifest entries rebuild bit-exactly") {
  const auto scale = harness::ScaleOptions::desk();
  auto bundle = harness::build_test_set(1, 8.0, 9, scale);
  for (std::size_t i = 0; i < bundle.recordings.size(); i += 7) {
    const auto& e = bundle.recordings[i];
    const auto rebuilt = harness::regenerate(e, scale);
    CHECK(rebuilt.bx_ut == e.recording.bx_ut);
    CHECK(rebuilt.by_ut == e.recording.by_ut);
    CHECK(rebuilt.bz_ut == e.recording.bz_ut);
  }
}

TEST_CASE("write_manifest: files exist and the JSON references them") {
  const auto scale = harness::ScaleOptions::desk();
  const auto bundle = harness::build_training_set(1, 4, scale);
  const auto dir =
      (std::filesystem::temp_directory_path() / "magsig_test_manifest").string();
  harness::write_manifest(bundle, dir, "train");

  std::ifstream in(dir + "/train.manifest.json");
  REQUIRE(in.good());
  const auto manifest = nlohmann::json::parse(in);
  REQUIRE(manifest.at("entries").size() == bundle.recordings.size());
  for (const auto& entry : manifest["entries"]) {
    const std::string file = entry.at("file").get<std::string>();
    CHECK(std::filesystem::exists(dir + "/" + file));
    CHECK(entry.at("role").get<std::string>() == "train-shielded");
    CHECK(entry.contains("seed"));
    CHECK(entry.contains("pace"));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment config: JSON file and environment overrides") {
  const auto path =
      (std::filesystem::temp_directory_path() / "magsig_test_config.json").string();
  std::ofstream(path) << R"({
    "families": ["lstm", "gru"],
    "shots": 12,
    "passes": 3,
    "sir_db": 6.5,
    "seeds": [4, 5],
    "max_epochs": 17,
    "out_dir": "/tmp/magsig_exp"
  })";

  unsetenv("MAGSIG_SEED");
  unsetenv("MAGSIG_OUT");
  const auto cfg = harness::load_config(path);
  REQUIRE(cfg.families.size() == 2);
  CHECK(cfg.families[0] == models::Family::kLstm);
  CHECK(cfg.families[1] == models::Family::kGru);
  CHECK(cfg.shots == 12);
  CHECK(cfg.passes == 3);
  CHECK(cfg.sir_db == doctest::Approx(6.5));
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.max_epochs == 17);
  CHECK(cfg.out_dir == "/tmp/magsig_exp");
  CHECK_FALSE(cfg.scale.full_scale);

  setenv("MAGSIG_SEED", "99", 1);
  setenv("MAGSIG_OUT", "/tmp/magsig_override", 1);
  const auto overridden = harness::load_config(path);
  CHECK(overridden.seeds == std::vector<std::uint64_t>{99});
  CHECK(overridden.out_dir == "/tmp/magsig_override");
  unsetenv("MAGSIG_SEED");
  unsetenv("MAGSIG_OUT");

  CHECK_THROWS(harness::load_config("/nonexistent/config.json"));
  std::filesystem::remove(path);
}

TEST_CASE("scale options: desk and full presets") {
  const auto desk = harness::ScaleOptions::desk();
  CHECK_FALSE(desk.full_scale);
  CHECK(desk.window_s == doctest::Approx(4.0));
  CHECK(desk.frame_shift_s == doctest::Approx(1.0));

  const auto full = harness::ScaleOptions::full();
  CHECK(full.full_scale);
  CHECK(full.window_s == doctest::Approx(12.5));
  CHECK(full.frame_shift_s == doctest::Approx(0.08));
}

TEST_CASE("summary CSV: one row per condition") {
  std::vector<harness::ConditionResult> results(2);
  results[0].condition = "baseline";
  results[0].family = models::Family::kLstm;
  results[0].accuracy = 96.5;
  results[0].auc = 0.99;
  results[0].mle_m = 0.6;
  results[0].max_error_m = 1.4;
  results[1].condition = "sir_6";
  results[1].family = models::Family::kLstm;
  results[1].accuracy = 95.0;

  const auto path =
      (std::filesystem::temp_directory_path() / "magsig_test_summary.csv").string();
  harness::write_summary_csv(results, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header, row1, row2, extra;
  std::getline(in, header);
  CHECK(header == "condition,family,accuracy,auc,mle_m,max_err_m");
  CHECK(std::getline(in, row1));
  CHECK(std::getline(in, row2));
  CHECK_FALSE(std::getline(in, extra));
  CHECK(row1.rfind("baseline,lstm,", 0) == 0);
  CHECK(row2.rfind("sir_6,lstm,", 0) == 0);
  std::filesystem::remove(path);
}
