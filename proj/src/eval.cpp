#include "magsig/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace magsig::eval {
namespace {

// Shared sweep: returns (fpr, tpr, threshold) tuples from highest threshold
// down, prepended with the empty-decision point.
std::vector<RocPoint> threshold_sweep(std::span<const double> scores,
                                      std::span<const int> labels,
                                      std::size_t& positives,
                                      std::size_t& negatives) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("roc: size mismatch or empty input");
  positives = 0;
  for (int l : labels) positives += (l != 0);
  negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw std::invalid_argument("roc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      if (labels[order[k]] != 0)
        ++tp;
      else
        ++fp;
      ++k;
    }
    points.push_back({static_cast<double>(fp) / negatives,
                      static_cast<double>(tp) / positives, s});
  }
  return points;
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  RocCurve curve;
  curve.points = threshold_sweep(scores, labels, pos, neg);
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    curve.auc += 0.5 * (curve.points[i].fpr - curve.points[i - 1].fpr) *
                 (curve.points[i].tpr + curve.points[i - 1].tpr);
  return curve;
}

double max_balanced_rate_percent(std::span<const double> scores,
                                 std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  const auto points = threshold_sweep(scores, labels, pos, neg);
  double best = 0.0;
  for (const auto& p : points)
    best = std::max(best, 0.5 * (p.tpr + (1.0 - p.fpr)));
  return best * 100.0;
}

double localization_accuracy_percent(const models::MatrixXd& probs,
                                     const models::VectorXi& labels) {
  if (probs.rows() != labels.size())
    throw std::invalid_argument("localization_accuracy: size mismatch");
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < models::kNumClasses; ++c) {
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    std::size_t present = 0;
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      scores[i] = probs(i, c);
      binary[i] = (labels[i] == c) ? 1 : 0;
      present += binary[i];
    }
    if (present == 0 || present == static_cast<std::size_t>(labels.size()))
      continue;
    sum += max_balanced_rate_percent(scores, binary);
    ++classes;
  }
  if (classes == 0)
    throw std::invalid_argument("localization_accuracy: single-class labels");
  return sum / classes;
}

std::vector<DetectionEvent> detect_passes(
    std::span<const int> predicted_labels,
    std::span<const std::pair<double, double>> frame_spans, int min_run) {
  if (predicted_labels.size() != frame_spans.size())
    throw std::invalid_argument("detect_passes: size mismatch");
  std::vector<DetectionEvent> events;
  std::size_t i = 0;
  while (i < predicted_labels.size()) {
    const int label = predicted_labels[i];
    std::size_t j = i;
    while (j < predicted_labels.size() && predicted_labels[j] == label) ++j;
    if (label != 0 && j - i >= static_cast<std::size_t>(min_run)) {
      // Median frame of the run; even-length runs interpolate between the
      // two central frames so the event time stays unbiased.
      const std::size_t lo = i + (j - i - 1) / 2;
      const std::size_t hi = i + (j - i) / 2;
      const double center_lo = 0.5 * (frame_spans[lo].first + frame_spans[lo].second);
      const double center_hi = 0.5 * (frame_spans[hi].first + frame_spans[hi].second);
      events.push_back({label, 0.5 * (center_lo + center_hi)});
    }
    i = j;
  }
  return events;
}

LocalizationError mean_localization_error(
    std::span<const DetectionEvent> events,
    std::span<const fieldsim::PassEvent> pass_events, double pace_mps) {
  if (pace_mps <= 0.0)
    throw std::invalid_argument("mean_localization_error: pace must be > 0");
  LocalizationError out;
  std::vector<bool> used(events.size(), false);
  double total = 0.0;
  for (const auto& truth : pass_events) {
    int best = -1;
    double best_dt = 0.0;
    for (std::size_t k = 0; k < events.size(); ++k) {
      if (used[k] || events[k].structure_id != truth.structure_id) continue;
      const double dt = std::abs(events[k].time_s - truth.closest_approach_s);
      if (best < 0 || dt < best_dt) {
        best = static_cast<int>(k);
        best_dt = dt;
      }
    }
    if (best < 0) {
      ++out.missed;
      continue;
    }
    used[best] = true;
    const double err = pace_mps * best_dt;
    total += err;
    out.max_error_m = std::max(out.max_error_m, err);
    ++out.matched;
  }
  if (out.matched > 0) out.mle_m = total / out.matched;
  return out;
}

Eigen::MatrixXi confusion_matrix(std::span<const int> predictions,
                                 std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("confusion_matrix: size mismatch");
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(models::kNumClasses, models::kNumClasses);
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++m(labels[i], predictions[i]);
  return m;
}

EvalReport evaluate_frames(const models::MatrixXd& probs,
                           const models::VectorXi& labels) {
  EvalReport report;
  report.localization_accuracy = localization_accuracy_percent(probs, labels);

  double auc_sum = 0.0;
  int auc_classes = 0;
  for (int c = 0; c < models::kNumClasses; ++c) {
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    std::size_t present = 0;
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      scores[i] = probs(i, c);
      binary[i] = (labels[i] == c) ? 1 : 0;
      present += binary[i];
    }
    if (present == 0 || present == static_cast<std::size_t>(labels.size()))
      continue;
    report.per_class_roc[c] = roc_curve(scores, binary);
    auc_sum += report.per_class_roc[c].auc;
    ++auc_classes;
  }
  if (auc_classes > 0) report.macro_auc = auc_sum / auc_classes;

  // Detection problem: any structure vs none, scored by 1 - P(class 0).
  std::vector<double> det_scores(labels.size());
  std::vector<int> det_labels(labels.size());
  bool has_zero = false, has_nonzero = false;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    det_scores[i] = 1.0 - probs(i, 0);
    det_labels[i] = labels[i] != 0 ? 1 : 0;
    (det_labels[i] ? has_nonzero : has_zero) = true;
  }
  if (has_zero && has_nonzero) {
    report.detection_roc = roc_curve(det_scores, det_labels);
    report.detection_accuracy = max_balanced_rate_percent(det_scores, det_labels);
  }

  std::vector<int> preds(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    Eigen::Index arg;
    probs.row(i).maxCoeff(&arg);
    preds[i] = static_cast<int>(arg);
  }
  report.confusion = confusion_matrix(preds, {labels.data(), static_cast<std::size_t>(labels.size())});
  return report;
}

namespace {

nlohmann::json roc_to_json(const RocCurve& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) {
    const double th = std::isinf(p.threshold) ? 1e308 : p.threshold;
    pts.push_back({p.fpr, p.tpr, th});
  }
  return {{"auc", c.auc}, {"points", pts}};
}

RocCurve roc_from_json(const nlohmann::json& j) {
  RocCurve c;
  c.auc = j.at("auc").get<double>();
  for (const auto& p : j.at("points"))
    c.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  return c;
}

}  // namespace

std::string EvalReport::to_json(int indent) const {
  nlohmann::json j;
  j["macro_auc"] = macro_auc;
  j["localization_accuracy"] = localization_accuracy;
  j["detection_accuracy"] = detection_accuracy;
  j["mle_m"] = mle_m;
  j["max_error_m"] = max_error_m;
  j["matched_events"] = matched_events;
  j["missed_passes"] = missed_passes;
  j["condition"] = condition;
  j["timestamp"] = timestamp;
  j["confusion"] = nlohmann::json::array();
  for (int r = 0; r < confusion.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < confusion.cols(); ++c) row.push_back(confusion(r, c));
    j["confusion"].push_back(row);
  }
  j["detection_roc"] = roc_to_json(detection_roc);
  j["per_class_roc"] = nlohmann::json::object();
  for (const auto& [c, curve] : per_class_roc)
    j["per_class_roc"][std::to_string(c)] = roc_to_json(curve);
  return j.dump(indent);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  r.macro_auc = j.at("macro_auc").get<double>();
  r.localization_accuracy = j.at("localization_accuracy").get<double>();
  r.detection_accuracy = j.at("detection_accuracy").get<double>();
  r.mle_m = j.at("mle_m").get<double>();
  r.max_error_m = j.at("max_error_m").get<double>();
  r.matched_events = j.at("matched_events").get<int>();
  r.missed_passes = j.at("missed_passes").get<int>();
  r.condition = j.at("condition").get<std::map<std::string, double>>();
  r.timestamp = j.at("timestamp").get<std::string>();
  const auto& cm = j.at("confusion");
  for (int row = 0; row < 7; ++row)
    for (int col = 0; col < 7; ++col)
      r.confusion(row, col) = cm[row][col].get<int>();
  r.detection_roc = roc_from_json(j.at("detection_roc"));
  for (const auto& [key, val] : j.at("per_class_roc").items())
    r.per_class_roc[std::stoi(key)] = roc_from_json(val);
  return r;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << report.to_json() << "\n";
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return EvalReport::from_json(text);
}

void write_roc_csvs(const EvalReport& report, const std::string& prefix) {
  auto dump = [](const RocCurve& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "fpr,tpr,threshold\n";
    for (const auto& p : c.points)
      out << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
  };
  dump(report.detection_roc, prefix + "_detection.csv");
  for (const auto& [c, curve] : report.per_class_roc)
    dump(curve, prefix + "_class" + std::to_string(c) + ".csv");
}

}  // namespace magsig::eval
