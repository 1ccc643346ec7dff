#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "amx/actmax/actmax.hpp"
#include "amx/data/dataset.hpp"
#include "amx/models/models.hpp"

namespace amx {

// Both classifiers must pick the target.
bool maximization_success(std::size_t original_argmax, std::size_t separate_argmax, std::size_t target);
bool maximization_success(const ClassifierModel& original, const ClassifierModel& separate, const FeatureGrid& x,
                          std::size_t target);

// Row = maximization target, column = separate classifier's argmax.
struct TransferGrid {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> counts;
  std::vector<std::vector<double>> rates;

  std::size_t size() const { return rates.size(); }
  double mean_diagonal() const;
};

struct Prediction {
  std::size_t target = 0;
  std::size_t predicted = 0;
};

// Throws EvaluationError naming the class of any empty row.
TransferGrid transfer_grid(std::span<const Prediction> predictions, std::vector<std::string> class_names);
// Classifies every maximized input with the separate classifier (in parallel).
TransferGrid transfer_grid(const ClassifierModel& separate, std::span<const MaximizationResult> samples,
                           std::vector<std::string> class_names);

// CSV with a class-name header row and column.
void write_transfer_csv(const TransferGrid& grid, const std::filesystem::path& path);
// Grayscale cells, black = 1.
void write_transfer_svg(const TransferGrid& grid, const std::filesystem::path& path, const std::string& title);

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  double init_sigma = 1e-4;
  // Binary search stops once |perplexity(row) - target| is below this.
  double perplexity_tolerance = 1e-5;
};

// Row-conditional affinities p_{j|i} (zero diagonal), bandwidths found by
// binary search on the row perplexity exp(H).
std::vector<double> conditional_p(std::span<const std::vector<double>> points, double perplexity,
                                  double tolerance = 1e-5);

struct TsneResult {
  std::vector<std::array<double, 2>> coords;
  // KL(P || Q) against the unexaggerated P, one entry per iteration.
  std::vector<double> kl;
};

// Exact O(n^2) t-SNE with gains, early exaggeration and momentum switch; the
// output is centred at the origin.
TsneResult tsne(std::span<const std::vector<double>> points, const TsneConfig& cfg);

struct EmbeddingPoint {
  double x = 0.0;
  double y = 0.0;
  std::string command;
  std::string speaker;
  std::string phase;
  bool misclassified = false;
};

struct ShiftRow {
  std::size_t index = 0;
  std::string command;
  std::string speaker;
  bool misclassified = false;
  double displacement = 0.0;
  std::size_t iterations = 0;
  bool reached_stop = false;
};

struct LatentShiftReport {
  std::vector<EmbeddingPoint> points;
  std::vector<ShiftRow> rows;
  std::vector<double> kl;

  double mean_displacement(bool misclassified) const;
  std::size_t count(bool misclassified) const;
};

struct ShiftConfig {
  MaxConfig max = MaxConfig::latent_defaults();
  TsneConfig tsne;
};

// Class-to-class latent maximization of every example, then one joint t-SNE
// of the before/after latents (before rows first, then after rows).
LatentShiftReport latent_shift_report(const AutoencoderModel& ae, const ClassifierModel& clf,
                                      std::span<const LabeledExample> examples,
                                      const std::vector<std::string>& class_names, const ShiftConfig& cfg);

// x,y,command,speaker,phase,misclassified
void write_embeddings_csv(std::span<const EmbeddingPoint> points, const std::filesystem::path& path);
void write_embeddings_svg(std::span<const EmbeddingPoint> points, const std::filesystem::path& path,
                          const std::string& title);
// index,command,speaker,misclassified,displacement,iterations,reached_stop
void write_shift_csv(std::span<const ShiftRow> rows, const std::filesystem::path& path);

}  // namespace amx
