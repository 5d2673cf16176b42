// The six classifier families (LS-SVM with/without PCA, DNN, RNN, GRU, LSTM),
// hand-rolled gradient training with Adam, and model persistence.

#ifndef MAGSIG_MODELS_HPP
#define MAGSIG_MODELS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "magsig/features.hpp"

namespace magsig::models {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

inline constexpr int kNumClasses = 7;
inline constexpr const char* kModelFormatVersion = "magsig-model-v1";

enum class Family { kSvm, kSvmPca, kDnn, kRnn, kGru, kLstm };

std::string family_name(Family family);
Family family_from_name(const std::string& name);
std::vector<Family> all_families();

struct ModelSpec {
  Family family = Family::kLstm;
  int input_dim = features::kVectorDim;
  int recurrent_hidden = 128;
  int sequence_steps = 3;                      // recurrent reshaping of the input
  std::vector<int> dnn_hidden = {400, 400, 400, 400};
  int pca_dim = 60;
  int rff_dim = 300;                           // random Fourier feature count
  double rff_gamma = 0.0;                      // 0 -> 1 / input_dim
  double ls_lambda = 1.0;                      // least-squares ridge strength

  bool is_gradient_family() const {
    return family != Family::kSvm && family != Family::kSvmPca;
  }
};

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 0.0;                  // 0 -> family default
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int patience = 5;                            // epochs without val improvement
  double train_fraction = 0.8;
  int max_epochs = 25;
  double min_nonzero_fraction = 0.25;          // stratified batch floor
  bool standardize = true;
  std::uint64_t seed = 0;
};

// Family defaults within the configured band: 0.001 for the DNN, 0.0005 for
// the recurrent families.
double default_learning_rate(Family family);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;
};

struct Dataset {
  MatrixXd x;   // rows = samples
  VectorXi y;   // labels in 0..6
};

// Internal network interface; exposed so gradient checking and persistence
// can enumerate parameters.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual MatrixXd predict_proba(const MatrixXd& x) const = 0;
  // Mean cross-entropy over the batch plus gradients (same order/shapes as
  // parameters()). Closed-form families throw std::logic_error.
  virtual double loss_and_gradients(const MatrixXd& x, const VectorXi& y,
                                    std::vector<MatrixXd>& grads) const = 0;
  virtual std::vector<MatrixXd*> parameters() = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;
};

std::unique_ptr<Classifier> make_classifier(const ModelSpec& spec,
                                            std::uint64_t seed);

struct AdamState {
  std::vector<MatrixXd> m, v;
};

// Standard Adam update with bias correction; t counts from 1.
void adam_step(std::vector<MatrixXd*>& params,
               const std::vector<MatrixXd>& grads, AdamState& state, int t,
               const TrainConfig& cfg, double learning_rate);

struct PcaBasis {
  VectorXd mean;
  MatrixXd components;           // dim x k, orthonormal columns
  VectorXd explained_variance;   // descending
};

PcaBasis pca_fit(const MatrixXd& rows, int k);
MatrixXd pca_transform(const PcaBasis& basis, const MatrixXd& rows);
MatrixXd pca_reconstruct(const PcaBasis& basis, const MatrixXd& projected);

struct TrainedModel {
  ModelSpec spec;
  TrainConfig cfg;
  bool scaled = false;
  features::FeatureScaler scaler;
  std::optional<PcaBasis> pca;
  std::shared_ptr<Classifier> net;
  std::vector<EpochRecord> history;
  std::string version = kModelFormatVersion;

  VectorXd predict_proba(const VectorXd& x) const;
  MatrixXd predict_proba(const MatrixXd& x) const;  // rows = samples
  VectorXi predict(const MatrixXd& x) const;
  double best_val_accuracy() const;
};

// Trains one family. Gradient families minimize cross-entropy with Adam on
// stratified mini-batches, early-stopping on validation accuracy and
// returning the best-validation snapshot; SVM families solve a one-vs-rest
// least-squares system over random Fourier features.
TrainedModel train(const Dataset& dataset, const ModelSpec& spec,
                   const TrainConfig& cfg);

// Max relative error between analytic and central finite-difference
// gradients (step 1e-5) over every parameter entry of a fresh model.
double gradient_check(const ModelSpec& spec, const MatrixXd& x,
                      const VectorXi& y, std::uint64_t seed = 7);

// Versioned container: JSON header (spec, config, scaler, history, parameter
// table) followed by flat little-endian double arrays.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// Training history as CSV (epoch,loss,val_acc).
void write_history_csv(const TrainedModel& model, const std::string& path);

}  // namespace magsig::models

#endif  // MAGSIG_MODELS_HPP
