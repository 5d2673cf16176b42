// Per-component feature bank (20 features) and the 360-dimensional
// three-frame feature vectors fed to the classifiers.

#ifndef MAGSIG_FEATURES_HPP
#define MAGSIG_FEATURES_HPP

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "magsig/sigproc.hpp"

namespace magsig::features {

inline constexpr int kFeaturesPerComponent = 20;
inline constexpr int kFrameBlockDim =
    kFeaturesPerComponent * sigproc::kComponentCount;  // 120
inline constexpr int kVectorDim = 3 * kFrameBlockDim;  // 360

// Name of feature f (0..19) in the fixed bank order.
const char* feature_name(int f);

// Maps one component series to the fixed 20-feature bank:
// mean, std, min, max, range, median, rms, mean-removed energy, skewness,
// kurtosis, mean abs deviation, mean-crossing count, peak count,
// mean |diff|, max |diff|, lag-1 autocorrelation, 4 relative band energies
// from a 4-way split of the one-sided DFT magnitude spectrum.
// Throws std::invalid_argument for N < 16 or non-finite input.
std::array<double, kFeaturesPerComponent> extract_component_features(
    std::span<const double> series);

struct FeatureVector {
  int index = 0;  // frame index of the newest frame
  std::array<double, kVectorDim> values{};
  int label = 0;
};

// Concatenates the feature blocks of frames i, i-1, i-2 (newest first).
// Requires consecutive frame indices with index >= 2; label copied from the
// newest frame.
FeatureVector build_feature_vector(const sigproc::ExtendedFrame& frame_i,
                                   const sigproc::ExtendedFrame& frame_im1,
                                   const sigproc::ExtendedFrame& frame_im2);

// All feature vectors of one recording's frame stream. The first two frames
// produce no vector.
std::vector<FeatureVector> featurize_frames(
    std::span<const sigproc::ExtendedFrame> frames);

// Z-score standardization; zero-variance dimensions pass through unscaled
// (centered only).
struct FeatureScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

FeatureScaler fit_scaler(const Eigen::MatrixXd& train_rows);
Eigen::VectorXd apply_scaler(const FeatureScaler& scaler,
                             const Eigen::VectorXd& x);
Eigen::MatrixXd apply_scaler(const FeatureScaler& scaler,
                             const Eigen::MatrixXd& rows);

// Row-matrix view of a vector batch.
Eigen::MatrixXd to_matrix(std::span<const FeatureVector> vectors);
Eigen::VectorXi to_labels(std::span<const FeatureVector> vectors);

// CSV with 360 feature columns plus `label`, and a JSON schema sidecar
// naming each column (f{offset}, {component}, {feature_name}).
void write_feature_csv(std::span<const FeatureVector> vectors,
                       const std::string& path);
std::vector<FeatureVector> read_feature_csv(const std::string& path);

}  // namespace magsig::features

#endif  // MAGSIG_FEATURES_HPP
