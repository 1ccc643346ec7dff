#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "amx/data/dataset.hpp"
#include "amx/models/models.hpp"

namespace amx {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moment estimates, one entry per parameter.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

// Bias-corrected Adam update for step t >= 1. The state is sized on first use.
template <class P, class G>
void adam_step(std::span<P> params, std::span<const G> grads, AdamState& state, const AdamConfig& cfg,
               std::uint64_t t);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat32;
  std::size_t latent_dim = 128;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  // Empty for the autoencoder.
  std::vector<double> val_acc;
  // Loss over the train split before the first update.
  double initial_train_loss = 0.0;
  // 1-based epoch whose parameters were kept.
  std::size_t best_epoch = 0;

  std::size_t epochs() const { return train_loss.size(); }
};

// epoch,train_loss,val_loss,val_acc with 1-based epochs; val_acc is blank
// when not tracked.
void write_history_csv(const TrainHistory& h, const std::filesystem::path& path);

struct ClassifierRun {
  ClassifierModel model;
  TrainHistory history;
};

struct AutoencoderRun {
  AutoencoderModel model;
  TrainHistory history;
};

// Cross-entropy with Adam; keeps the parameters of the epoch with the best
// validation accuracy (earliest on ties). Without a validation split the
// final parameters are kept.
ClassifierRun train_classifier(const DatasetSplit& split, const TrainConfig& config);

// Reconstruction mse with Adam; keeps the epoch with the lowest validation
// loss, or the final parameters without a validation split.
AutoencoderRun train_autoencoder(const DatasetSplit& split, const TrainConfig& config);

using Predictor = std::function<std::size_t(const FeatureGrid&)>;

double evaluate_accuracy(const Predictor& predict, std::span<const LabeledExample> examples);
double evaluate_accuracy(const ClassifierModel& model, std::span<const LabeledExample> examples,
                         Precision precision = Precision::kFloat32);

// Mean cross-entropy (-ln(p + 1e-12)) over the examples.
double evaluate_loss(const ClassifierModel& model, std::span<const LabeledExample> examples,
                     Precision precision = Precision::kFloat32);
double reconstruction_mse(const AutoencoderModel& model, std::span<const LabeledExample> examples,
                          Precision precision = Precision::kFloat32);

}  // namespace amx
