#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amx/data/dataset.hpp"
#include "amx/models/models.hpp"

namespace amx {

enum class MaxMode { kDirect, kLatent };

const char* mode_name(MaxMode mode);
// "direct" or "latent"; throws ConfigError otherwise.
MaxMode parse_mode(const std::string& name);

struct MaxConfig {
  double learning_rate = 0.05;
  std::size_t max_iters = 500;
  double target_prob_stop = 0.99;
  bool clamp_inputs = true;
  Precision precision = Precision::kFloat32;

  static MaxConfig direct_defaults();
  static MaxConfig latent_defaults();
  void validate() const;
};

struct MaximizationResult {
  MaxMode mode = MaxMode::kDirect;
  std::size_t target = 0;
  // Feature-space start: x0 in direct mode, dec(z0) in latent mode.
  FeatureGrid start;
  // Latent mode only.
  std::optional<LatentCode> start_latent;
  std::optional<LatentCode> final_latent;
  FeatureGrid maximized;
  // start - maximized, exact in double.
  std::vector<double> x_diff;
  // Target logit at every evaluated point, start included.
  std::vector<double> trajectory;
  std::vector<double> start_probs;
  std::vector<double> final_probs;
  std::size_t iterations_used = 0;
  bool reached_stop = false;
};

// Builds the logit vector from a grid-shaped input node.
template <class T>
using LogitBuilder = std::function<NodeId(Graph<T>&, NodeId)>;
// Builds a node with FeatureGrid::kSize values from a latent node.
template <class T>
using DecoderBuilder = std::function<NodeId(Graph<T>&, NodeId)>;

// Gradient ascent on the target logit w.r.t. the input grid:
// x <- clamp01(x + lr * grad) until softmax(logits)[target] >= stop or max_iters.
template <class T>
MaximizationResult maximize_direct_with(const LogitBuilder<T>& logits, const FeatureGrid& x0, std::size_t target,
                                        const MaxConfig& cfg);

// Same ascent on z through the decoder; z is never clamped.
template <class T>
MaximizationResult maximize_latent_with(const LogitBuilder<T>& logits, const DecoderBuilder<T>& decoder,
                                        const LatentCode& z0, std::size_t target, const MaxConfig& cfg);

MaximizationResult maximize_direct(const ClassifierModel& clf, const FeatureGrid& x0, std::size_t target,
                                   const MaxConfig& cfg);
MaximizationResult maximize_latent(const ClassifierModel& clf, const AutoencoderModel& ae, const LatentCode& z0,
                                   std::size_t target, const MaxConfig& cfg);

struct MaxModels {
  const ClassifierModel* classifier = nullptr;
  // Required in latent mode.
  const AutoencoderModel* autoencoder = nullptr;
};

// Seeded start: uniform [0,1) grid (direct) or standard-normal latent (latent).
FeatureGrid noise_grid(std::uint64_t seed);
LatentCode noise_latent(std::size_t dim, std::uint64_t seed);

MaximizationResult noise_to_class(MaxMode mode, const MaxModels& models, std::size_t target, std::uint64_t seed,
                                  const MaxConfig& cfg);
// Target is the example's label; latent mode starts from its encoding.
MaximizationResult class_to_class(MaxMode mode, const MaxModels& models, const LabeledExample& example,
                                  const MaxConfig& cfg);

struct NoiseRun {
  std::size_t target = 0;
  std::uint64_t seed = 0;
};

// Independent runs evaluated in parallel; results in input order.
std::vector<MaximizationResult> noise_to_class_batch(MaxMode mode, const MaxModels& models,
                                                     std::span<const NoiseRun> runs, const MaxConfig& cfg);

// 'runs_per_class' runs for each class, seeds derived from base_seed, class-major order.
std::vector<NoiseRun> noise_run_plan(std::size_t num_classes, std::size_t runs_per_class, std::uint64_t base_seed);

std::vector<double> additive_noise(const MaximizationResult& r);

// Share of sum(x^2) carried by the largest ceil(fraction * n) squared cells; 0 for an all-zero input.
double top_energy_fraction(std::span<const double> x, double fraction = 0.01);

// <stem>.json with config, trajectory and flags; <stem>.csv with the maximized grid.
void write_result(const MaximizationResult& r, const MaxConfig& cfg, const std::filesystem::path& dir,
                  const std::string& stem);

}  // namespace amx
