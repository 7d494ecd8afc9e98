#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prunelab/datagen.hpp"

namespace prunelab::nn {

/// Dense feed-forward network: ReLU hidden layers, linear output layer whose
/// logits are read through a per-class sigmoid.
struct MlpModel {
  std::vector<int> layer_sizes;              // input D ... output C
  std::vector<Eigen::MatrixXd> weights;      // layer l: sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;       // layer l: sizes[l+1]

  std::size_t num_layers() const { return weights.size(); }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  /// Count of entries in all weight matrices (biases are not prunable).
  std::size_t num_prunable() const;
  bool all_finite() const;

  bool operator==(const MlpModel& other) const;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 15;
  std::uint64_t seed = 0;
  // Start output biases at the log-odds of each class's training frequency
  // instead of zero.
  bool prior_output_bias = false;
};

void validate(const TrainConfig& config);

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
MlpModel init_model(std::span<const int> layer_sizes, std::uint64_t seed);

/// Returns N x C logits.
Eigen::MatrixXd forward(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& features);

/// Elementwise logistic sigmoid.
Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& logits);

/// sigmoid(forward(...)).
Eigen::MatrixXd predict_proba(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& features);

struct LossAndGrad {
  double loss = 0.0;
  Gradients grad;
};

/// Mean sigmoid cross-entropy over samples and classes, evaluated from logits
/// as max(z,0) - y z + log1p(exp(-|z|)), with exact backpropagated gradients.
LossAndGrad bce_loss_and_grad(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& features,
                              const Eigen::Ref<const LabelMatrix>& labels);

struct TrainHistory {
  std::vector<double> train_loss;   // mean minibatch loss per epoch
  std::vector<double> val_auroc;    // mean per-class AUROC after each epoch
  int best_epoch = 0;               // 1-based
  int epochs_run = 0;
};

struct TrainResult {
  MlpModel model;  // best-epoch snapshot
  TrainHistory history;
};

/// Adam training on the train split with early stopping on mean per-class
/// validation AUROC. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const LabeledDataset& dataset, std::span<const int> layer_sizes, const TrainConfig& config);

/// Mean AUROC over classes that have both labels present.
double mean_auroc(const Eigen::MatrixXd& scores, const Eigen::Ref<const LabelMatrix>& labels);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;  // counts[i] covers [edges[i], edges[i+1]); values below edges[0] land in bin 0
  std::size_t overflow = 0;         // values >= edges.back()
  std::size_t total() const;
};

Histogram weight_magnitude_histogram(const MlpModel& model, std::span<const double> bin_edges);

/// `count + 1` edges spaced evenly in log10 between `lo` and `hi`.
std::vector<double> log_spaced_edges(double lo, double hi, int count);

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace prunelab::nn
