#include "magsig/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "json.hpp"

namespace magsig::features {
namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

const char* feature_name(int f) {
  static constexpr const char* kNames[kFeaturesPerComponent] = {
      "mean",        "std",           "min",
      "max",         "range",         "median",
      "rms",         "energy",        "skewness",
      "kurtosis",    "mad",           "mean_crossings",
      "peak_count",  "mean_abs_diff", "max_abs_diff",
      "autocorr_l1", "band_energy_1", "band_energy_2",
      "band_energy_3", "band_energy_4"};
  return kNames[f];
}

std::array<double, kFeaturesPerComponent> extract_component_features(
    std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 16)
    throw std::invalid_argument("extract_component_features: series too short");
  for (double v : series)
    if (!std::isfinite(v))
      throw std::invalid_argument("extract_component_features: non-finite input");

  const double nd = static_cast<double>(n);
  double mean = 0.0, min_v = series[0], max_v = series[0];
  for (double v : series) {
    mean += v;
    min_v = std::min(min_v, v);
    max_v = std::max(max_v, v);
  }
  mean /= nd;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0, sq = 0.0;
  for (double v : series) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    mad += std::abs(d);
    sq += v * v;
  }
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  mad /= nd;
  const double stddev = std::sqrt(m2);
  const double rms = std::sqrt(sq / nd);
  const double skewness = safe_div(m3, stddev * stddev * stddev);
  const double kurtosis = safe_div(m4, m2 * m2);

  std::vector<double> sorted(series.begin(), series.end());
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  double median = sorted[n / 2];
  if (n % 2 == 0) {
    const double lower = *std::max_element(sorted.begin(), sorted.begin() + n / 2);
    median = 0.5 * (median + lower);
  }

  double crossings = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i)
    if ((series[i] - mean) * (series[i + 1] - mean) < 0.0) crossings += 1.0;

  const double peak_floor = mean + 0.5 * stddev;
  double peaks = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (series[i] > series[i - 1] && series[i] > series[i + 1] &&
        series[i] > peak_floor)
      peaks += 1.0;

  double mean_diff = 0.0, max_diff = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = std::abs(series[i + 1] - series[i]);
    mean_diff += d;
    max_diff = std::max(max_diff, d);
  }
  mean_diff /= static_cast<double>(n - 1);

  double acov = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i)
    acov += (series[i] - mean) * (series[i + 1] - mean);
  const double autocorr = safe_div(acov, m2 * nd);

  // Relative band energies over the one-sided spectrum, DC excluded.
  Eigen::FFT<double> fft;
  std::vector<double> input(series.begin(), series.end());
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, input);
  const std::size_t half = n / 2;
  std::array<double, 4> bands{0.0, 0.0, 0.0, 0.0};
  double total = 0.0;
  for (std::size_t k = 1; k <= half; ++k) {
    const double e = std::norm(spectrum[k]);
    std::size_t band = (k - 1) * 4 / half;
    if (band > 3) band = 3;
    bands[band] += e;
    total += e;
  }
  for (auto& b : bands) b = safe_div(b, total);

  return {mean,     stddev,    min_v,    max_v,    max_v - min_v,
          median,   rms,       m2,       skewness, kurtosis,
          mad,      crossings, peaks,    mean_diff, max_diff,
          autocorr, bands[0],  bands[1], bands[2],  bands[3]};
}

FeatureVector build_feature_vector(const sigproc::ExtendedFrame& frame_i,
                                   const sigproc::ExtendedFrame& frame_im1,
                                   const sigproc::ExtendedFrame& frame_im2) {
  if (frame_i.index < 2)
    throw std::invalid_argument("build_feature_vector: needs two past frames");
  if (frame_im1.index != frame_i.index - 1 || frame_im2.index != frame_i.index - 2)
    throw std::invalid_argument("build_feature_vector: frames not consecutive");

  FeatureVector out;
  out.index = frame_i.index;
  out.label = frame_i.label;
  const sigproc::ExtendedFrame* frames[3] = {&frame_i, &frame_im1, &frame_im2};
  int pos = 0;
  for (int blk = 0; blk < 3; ++blk)
    for (int c = 0; c < sigproc::kComponentCount; ++c) {
      const auto feats = extract_component_features(frames[blk]->components[c]);
      for (double v : feats) out.values[pos++] = v;
    }
  return out;
}

std::vector<FeatureVector> featurize_frames(
    std::span<const sigproc::ExtendedFrame> frames) {
  std::vector<FeatureVector> out;
  if (frames.size() < 3) return out;
  out.reserve(frames.size() - 2);
  for (std::size_t i = 2; i < frames.size(); ++i)
    out.push_back(build_feature_vector(frames[i], frames[i - 1], frames[i - 2]));
  return out;
}

FeatureScaler fit_scaler(const Eigen::MatrixXd& train_rows) {
  if (train_rows.rows() < 2)
    throw std::invalid_argument("fit_scaler: needs at least 2 rows");
  FeatureScaler s;
  s.mean = train_rows.colwise().mean();
  const Eigen::MatrixXd centered = train_rows.rowwise() - s.mean.transpose();
  s.std = (centered.array().square().colwise().sum() /
           static_cast<double>(train_rows.rows()))
              .sqrt();
  return s;
}

Eigen::VectorXd apply_scaler(const FeatureScaler& scaler,
                             const Eigen::VectorXd& x) {
  if (x.size() != scaler.mean.size())
    throw std::invalid_argument("apply_scaler: dimension mismatch");
  Eigen::VectorXd out = x - scaler.mean;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (scaler.std[i] > 0.0) out[i] /= scaler.std[i];
  return out;
}

Eigen::MatrixXd apply_scaler(const FeatureScaler& scaler,
                             const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd out = rows.rowwise() - scaler.mean.transpose();
  for (Eigen::Index i = 0; i < out.cols(); ++i)
    if (scaler.std[i] > 0.0) out.col(i) /= scaler.std[i];
  return out;
}

Eigen::MatrixXd to_matrix(std::span<const FeatureVector> vectors) {
  Eigen::MatrixXd m(vectors.size(), kVectorDim);
  for (std::size_t i = 0; i < vectors.size(); ++i)
    for (int j = 0; j < kVectorDim; ++j) m(i, j) = vectors[i].values[j];
  return m;
}

Eigen::VectorXi to_labels(std::span<const FeatureVector> vectors) {
  Eigen::VectorXi y(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) y[i] = vectors[i].label;
  return y;
}

void write_feature_csv(std::span<const FeatureVector> vectors,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);

  nlohmann::json schema = nlohmann::json::array();
  for (int blk = 0; blk < 3; ++blk)
    for (int c = 0; c < sigproc::kComponentCount; ++c)
      for (int f = 0; f < kFeaturesPerComponent; ++f) {
        std::ostringstream name;
        name << "f" << blk << "_" << sigproc::component_name(c) << "_"
             << feature_name(f);
        schema.push_back(name.str());
        out << name.str() << ",";
      }
  out << "label\n";

  char buf[32];
  for (const auto& v : vectors) {
    for (double x : v.values) {
      std::snprintf(buf, sizeof(buf), "%.17g,", x);
      out << buf;
    }
    out << v.label << "\n";
  }

  std::ofstream side(path + ".schema.json");
  side << nlohmann::json{{"columns", schema}}.dump(2) << "\n";
}

std::vector<FeatureVector> read_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<FeatureVector> out;
  int idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    FeatureVector v;
    v.index = idx++;
    std::istringstream ss(line);
    std::string cell;
    for (int j = 0; j < kVectorDim; ++j) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("malformed feature row in " + path);
      v.values[j] = std::stod(cell);
    }
    if (!std::getline(ss, cell, ','))
      throw std::runtime_error("malformed feature row in " + path);
    v.label = std::stoi(cell);
    out.push_back(v);
  }
  return out;
}

}  // namespace magsig::features
