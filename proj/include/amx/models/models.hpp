#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amx/core/graph.hpp"
#include "amx/features/feature_grid.hpp"

namespace amx {

enum class Precision { kFloat32, kFloat64 };

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

using ParamSet = std::vector<NamedTensor>;

inline constexpr const char* kClassifierArch = "cnn-c32-c64-d128";
inline constexpr const char* kAutoencoderArch = "ae-c16-c32-linear-bottleneck";

// conv(3x3,32) relu pool2 -> conv(3x3,64) relu pool2 -> flatten -> dense(128)
// relu -> dense(K). Convolutions use "same" padding.
struct ClassifierModel {
  std::string arch = kClassifierArch;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  ParamSet params;
};

// Encoder: conv(3x3,16) relu pool2 -> conv(3x3,32) relu pool2 -> flatten ->
// dense(latent_dim) with no activation.
// Decoder: dense(32*20*16) relu -> reshape 32x20x16 -> [upsample2 ->
// conv(3x3,16) relu] x2 -> conv(3x3,1) -> sigmoid.
struct AutoencoderModel {
  std::string arch = kAutoencoderArch;
  std::size_t latent_dim = 128;
  std::uint64_t seed = 0;
  ParamSet encoder;
  ParamSet decoder;
};

// Autoencoder bottleneck vector.
struct LatentCode {
  std::vector<double> values;
};

inline const Shape kGridShape = {1, FeatureGrid::kMels, FeatureGrid::kFrames};

// He-uniform weights, zero biases, drawn in parameter order from the seed.
ClassifierModel init_classifier(std::uint64_t seed, std::size_t num_classes);
AutoencoderModel init_autoencoder(std::uint64_t seed, std::size_t latent_dim = 128);

// Shapes the architecture expects, in parameter order.
std::vector<std::pair<std::string, Shape>> classifier_layout(std::size_t num_classes);
std::vector<std::pair<std::string, Shape>> encoder_layout(std::size_t latent_dim);
std::vector<std::pair<std::string, Shape>> decoder_layout(std::size_t latent_dim);

// Parameters converted to the compute type once. For float the leaves
// borrow the model's storage, so the model must outlive any graph using them.
template <class T>
class ParamBinding {
 public:
  explicit ParamBinding(const ParamSet& params);
  std::vector<NodeId> add_leaves(Graph<T>& g, bool requires_grad) const;

 private:
  const ParamSet* params_;
  std::vector<std::vector<T>> converted_;
};

// Graph builders over parameter leaves created by ParamBinding::add_leaves.
template <class T>
NodeId classifier_graph(Graph<T>& g, NodeId input, std::span<const NodeId> params);
template <class T>
NodeId encoder_graph(Graph<T>& g, NodeId input, std::span<const NodeId> params);
template <class T>
NodeId decoder_graph(Graph<T>& g, NodeId latent, std::span<const NodeId> params);

// Leaf holding a copy of x with shape kGridShape.
template <class T>
NodeId grid_leaf(Graph<T>& g, const FeatureGrid& x, bool requires_grad = false);

struct ClassifierOutput {
  std::vector<double> logits;
  std::vector<double> probs;

  std::size_t argmax() const;
};

// probs are computed from the logits in double precision.
ClassifierOutput classifier_forward(const ClassifierModel& m, const FeatureGrid& x,
                                    Precision precision = Precision::kFloat32);
LatentCode encoder_forward(const AutoencoderModel& m, const FeatureGrid& x,
                           Precision precision = Precision::kFloat32);
FeatureGrid decoder_forward(const AutoencoderModel& m, const LatentCode& z,
                            Precision precision = Precision::kFloat32);

// Max-shifted softmax in double.
std::vector<double> softmax_probs(std::span<const double> logits);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> v);

}  // namespace amx
