// ROC curves, the maximal-balanced-rate localization accuracy, pass
// detection events, mean localization error and confusion matrices.

#ifndef MAGSIG_EVAL_HPP
#define MAGSIG_EVAL_HPP

#include <Eigen/Dense>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "magsig/fieldsim.hpp"
#include "magsig/models.hpp"

namespace magsig::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by FPR
  double auc = 0.0;
};

// Threshold sweep over the unique scores, trapezoidal AUC. Labels are 0/1;
// throws std::invalid_argument when only one class is present.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

// Max over thresholds of (TPR + TNR) / 2 as a percentage for one binary
// problem.
double max_balanced_rate_percent(std::span<const double> scores,
                                 std::span<const int> labels);

// Macro-average of the per-class maximal balanced rate over every class
// present in `labels`; `probs` rows are per-frame class probabilities.
double localization_accuracy_percent(const models::MatrixXd& probs,
                                     const models::VectorXi& labels);

struct DetectionEvent {
  int structure_id = 0;
  double time_s = 0.0;  // center of the run's median frame
};

// Maximal runs of >= min_run consecutive frames with the same non-zero
// predicted label become one detection event.
std::vector<DetectionEvent> detect_passes(
    std::span<const int> predicted_labels,
    std::span<const std::pair<double, double>> frame_spans, int min_run = 3);

struct LocalizationError {
  double mle_m = 0.0;
  double max_error_m = 0.0;
  int matched = 0;
  int missed = 0;  // ground-truth passes with no detection of their id
};

// Matches detections to ground-truth passes by structure id and nearest
// time; error = pace * |detection time - closest approach time|.
LocalizationError mean_localization_error(
    std::span<const DetectionEvent> events,
    std::span<const fieldsim::PassEvent> pass_events, double pace_mps);

// 7x7 counts, rows = truth, columns = prediction.
Eigen::MatrixXi confusion_matrix(std::span<const int> predictions,
                                 std::span<const int> labels);

struct EvalReport {
  std::map<int, RocCurve> per_class_roc;
  double macro_auc = 0.0;
  RocCurve detection_roc;  // any structure vs none, score = 1 - P(class 0)
  double localization_accuracy = 0.0;  // percent, macro
  double detection_accuracy = 0.0;     // percent, any-structure problem
  double mle_m = 0.0;
  double max_error_m = 0.0;
  int matched_events = 0;
  int missed_passes = 0;
  Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(7, 7);
  std::map<std::string, double> condition;  // SIR, rate, shots, pace, ...
  std::string timestamp;                    // excluded from comparisons

  std::string to_json(int indent = 2) const;
  static EvalReport from_json(const std::string& text);
};

// Frame-level evaluation of a trained model against labeled features.
EvalReport evaluate_frames(const models::MatrixXd& probs,
                           const models::VectorXi& labels);

void write_report_json(const EvalReport& report, const std::string& path);
EvalReport read_report_json(const std::string& path);

// One CSV (fpr,tpr,threshold) per class under `prefix_class<k>.csv`.
void write_roc_csvs(const EvalReport& report, const std::string& prefix);

}  // namespace magsig::eval

#endif  // MAGSIG_EVAL_HPP
