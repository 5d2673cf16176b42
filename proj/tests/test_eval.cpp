// Evaluation tests: ROC/AUC, balanced-rate accuracy, pass detection,
// localization error, confusion matrices and report persistence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "magsig/eval.hpp"

using namespace magsig;

namespace {

std::vector<std::pair<double, double>> unit_spans(std::size_t n,
                                                  double start = 0.0) {
  std::vector<std::pair<double, double>> spans(n);
  for (std::size_t i = 0; i < n; ++i)
    spans[i] = {start + i * 1.0, start + i * 1.0 + 4.0};
  return spans;
}

}  // namespace

TEST_CASE("roc: perfectly separated scores") {
  const std::vector<double> scores = {0.1, 0.2, 0.3, 0.8, 0.9, 0.95};
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  const auto roc = eval::roc_curve(scores, labels);
  CHECK(roc.auc == doctest::Approx(1.0));
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr - 1e-12);
  }
}

TEST_CASE("roc: label-independent scores give chance AUC") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(10000);
  std::vector<int> labels(10000);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = u(rng);
    labels[i] = (rng() % 2) ? 1 : 0;
  }
  const auto roc = eval::roc_curve(scores, labels);
  CHECK(roc.auc == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("roc: inverting scores mirrors the AUC") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> scores(500), inverted(500);
  std::vector<int> labels(500);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    labels[i] = (rng() % 3) == 0 ? 1 : 0;
    scores[i] = n(rng) + labels[i];
    inverted[i] = -scores[i];
  }
  const auto a = eval::roc_curve(scores, labels);
  const auto b = eval::roc_curve(inverted, labels);
  CHECK(b.auc == doctest::Approx(1.0 - a.auc).epsilon(1e-9));
}

TEST_CASE("roc: monotone score transforms leave the curve unchanged") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> scores(300), warped(300);
  std::vector<int> labels(300);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    labels[i] = (rng() % 2) ? 1 : 0;
    scores[i] = n(rng) + 0.8 * labels[i];
    warped[i] = std::tanh(scores[i]) * 3.0 + 7.0;  // strictly increasing
  }
  const auto a = eval::roc_curve(scores, labels);
  const auto b = eval::roc_curve(warped, labels);
  CHECK(std::abs(a.auc - b.auc) <= 1e-12);
  CHECK(std::abs(eval::max_balanced_rate_percent(scores, labels) -
                 eval::max_balanced_rate_percent(warped, labels)) <= 1e-12);
}

TEST_CASE("roc: single-class labels rejected") {
  const std::vector<double> scores = {0.1, 0.2, 0.3};
  const std::vector<int> labels = {1, 1, 1};
  CHECK_THROWS_AS(eval::roc_curve(scores, labels), std::invalid_argument);
}

TEST_CASE("balanced rate: perfect and constant classifiers") {
  const std::vector<double> perfect = {0.1, 0.2, 0.8, 0.9};
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(eval::max_balanced_rate_percent(perfect, labels) ==
        doctest::Approx(100.0));

  const std::vector<double> constant = {0.5, 0.5, 0.5, 0.5};
  CHECK(eval::max_balanced_rate_percent(constant, labels) ==
        doctest::Approx(50.0));
}

TEST_CASE("localization accuracy: perfect probabilities reach 100") {
  models::MatrixXd probs = models::MatrixXd::Zero(21, 7);
  models::VectorXi labels(21);
  for (int i = 0; i < 21; ++i) {
    labels[i] = i % 7;
    probs(i, labels[i]) = 1.0;
  }
  CHECK(eval::localization_accuracy_percent(probs, labels) ==
        doctest::Approx(100.0));
}

TEST_CASE("detect_passes: run-length rule") {
  // Ten consecutive frames of structure 4 form one event.
  std::vector<int> labels(20, 0);
  for (int i = 5; i < 15; ++i) labels[i] = 4;
  const auto spans = unit_spans(labels.size());
  const auto events = eval::detect_passes(labels, spans);
  REQUIRE(events.size() == 1);
  CHECK(events[0].structure_id == 4);
  // Median of frames 5..14 interpolates between frames 9 and 10.
  const double expect =
      0.5 * (0.5 * (spans[9].first + spans[9].second) +
             0.5 * (spans[10].first + spans[10].second));
  CHECK(events[0].time_s == doctest::Approx(expect));

  // An isolated single frame is below the minimum run length.
  std::vector<int> flicker(10, 0);
  flicker[4] = 2;
  CHECK(eval::detect_passes(flicker, unit_spans(flicker.size())).empty());

  // Two runs separated by a zero frame become two events.
  std::vector<int> twin(12, 0);
  for (int i = 1; i < 4; ++i) twin[i] = 5;
  for (int i = 6; i < 10; ++i) twin[i] = 5;
  CHECK(eval::detect_passes(twin, unit_spans(twin.size())).size() == 2);
}

TEST_CASE("detect_passes: invariant to zero padding") {
  std::vector<int> labels(8, 3);
  const auto base = eval::detect_passes(labels, unit_spans(labels.size(), 10.0));

  std::vector<int> padded(4, 0);
  padded.insert(padded.end(), labels.begin(), labels.end());
  padded.insert(padded.end(), 5, 0);
  // Same absolute spans for the original frames.
  const auto spans = unit_spans(padded.size(), 6.0);
  const auto shifted = eval::detect_passes(padded, spans);
  REQUIRE(base.size() == 1);
  REQUIRE(shifted.size() == 1);
  CHECK(shifted[0].structure_id == base[0].structure_id);
  CHECK(shifted[0].time_s == doctest::Approx(base[0].time_s));
}

TEST_CASE("localization error: exact hit, offset and pace linearity") {
  fieldsim::PassEvent truth;
  truth.structure_id = 2;
  truth.closest_approach_s = 30.0;
  const std::vector<fieldsim::PassEvent> passes = {truth};

  const std::vector<eval::DetectionEvent> exact = {{2, 30.0}};
  auto loc = eval::mean_localization_error(exact, passes, 1.0);
  CHECK(loc.mle_m == doctest::Approx(0.0));
  CHECK(loc.matched == 1);
  CHECK(loc.missed == 0);

  const std::vector<eval::DetectionEvent> offset = {{2, 31.0}};
  loc = eval::mean_localization_error(offset, passes, 1.0);
  CHECK(loc.mle_m == doctest::Approx(1.0));
  CHECK(loc.max_error_m == doctest::Approx(1.0));

  // Scaling the pace scales every error exactly.
  const auto fast = eval::mean_localization_error(offset, passes, 2.5);
  CHECK(fast.mle_m == doctest::Approx(2.5));

  // Wrong structure id counts as a miss.
  const std::vector<eval::DetectionEvent> wrong = {{3, 30.0}};
  loc = eval::mean_localization_error(wrong, passes, 1.0);
  CHECK(loc.matched == 0);
  CHECK(loc.missed == 1);

  CHECK_THROWS_AS(eval::mean_localization_error(exact, passes, 0.0),
                  std::invalid_argument);
}

TEST_CASE("localization error: nearest unused detection wins") {
  fieldsim::PassEvent a, b;
  a.structure_id = b.structure_id = 1;
  a.closest_approach_s = 10.0;
  b.closest_approach_s = 50.0;
  const std::vector<fieldsim::PassEvent> passes = {a, b};
  const std::vector<eval::DetectionEvent> events = {{1, 11.0}, {1, 49.0}};
  const auto loc = eval::mean_localization_error(events, passes, 1.0);
  CHECK(loc.matched == 2);
  CHECK(loc.mle_m == doctest::Approx(1.0));
}

TEST_CASE("confusion matrix: diagonal, totals and column swaps") {
  std::vector<int> labels, preds;
  for (int i = 0; i < 70; ++i) {
    labels.push_back(i % 7);
    preds.push_back(i % 7);
  }
  const auto perfect = eval::confusion_matrix(preds, labels);
  CHECK(perfect.sum() == 70);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c)
      CHECK(perfect(r, c) == (r == c ? 10 : 0));

  // Swapping predicted labels 1 and 2 permutes the corresponding columns.
  std::vector<int> swapped = preds;
  for (auto& p : swapped)
    p = p == 1 ? 2 : (p == 2 ? 1 : p);
  const auto m = eval::confusion_matrix(swapped, labels);
  for (int r = 0; r < 7; ++r) {
    CHECK(m(r, 1) == perfect(r, 2));
    CHECK(m(r, 2) == perfect(r, 1));
  }
}

TEST_CASE("evaluate_frames + report JSON round-trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  const int n = 200;
  models::MatrixXd probs(n, 7);
  models::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng() % 7);
    for (int c = 0; c < 7; ++c) probs(i, c) = u(rng);
    probs(i, labels[i]) += 1.5;  // informative but imperfect
    probs.row(i) /= probs.row(i).sum();
  }
  auto rep = eval::evaluate_frames(probs, labels);
  CHECK(rep.localization_accuracy > 50.0);
  CHECK(rep.macro_auc > 0.5);
  CHECK(rep.confusion.sum() == n);
  rep.mle_m = 0.42;
  rep.max_error_m = 1.3;
  rep.condition["sir_db"] = 8.0;

  const std::string path =
      (std::filesystem::temp_directory_path() / "magsig_test_report.json").string();
  eval::write_report_json(rep, path);
  const auto back = eval::read_report_json(path);
  CHECK(back.localization_accuracy ==
        doctest::Approx(rep.localization_accuracy).epsilon(1e-12));
  CHECK(back.macro_auc == doctest::Approx(rep.macro_auc).epsilon(1e-12));
  CHECK(back.mle_m == doctest::Approx(0.42));
  CHECK(back.condition.at("sir_db") == doctest::Approx(8.0));
  CHECK(back.confusion == rep.confusion);
  REQUIRE(back.per_class_roc.size() == rep.per_class_roc.size());

  // ROC CSVs exist and carry the expected header.
  const std::string prefix =
      (std::filesystem::temp_directory_path() / "magsig_test_roc").string();
  eval::write_roc_csvs(rep, prefix);
  CHECK(std::filesystem::exists(prefix + "_detection.csv"));
  std::filesystem::remove(prefix + "_detection.csv");
  bool any = false;
  for (const auto& [cls, curve] : rep.per_class_roc) {
    const std::string csv = prefix + "_class" + std::to_string(cls) + ".csv";
    CHECK(std::filesystem::exists(csv));
    std::filesystem::remove(csv);
    any = true;
  }
  CHECK(any);
  std::filesystem::remove(path);
}
