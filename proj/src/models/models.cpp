#include "amx/models/models.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

#include "amx/core/ops.hpp"
#include "amx/error.hpp"
#include "amx/rng.hpp"

namespace amx {

namespace {

constexpr std::size_t kBottleneckChannels = 32;
constexpr std::size_t kBottleneckH = FeatureGrid::kMels / 4;
constexpr std::size_t kBottleneckW = FeatureGrid::kFrames / 4;

// He-uniform; the classifier head is shrunk so untrained outputs stay near uniform.
constexpr double kHeadScale = 0.1;

ParamSet init_params(const std::vector<std::pair<std::string, Shape>>& layout, Rng& rng,
                     std::string_view scaled_layer = {}) {
  ParamSet out;
  for (const auto& [name, shape] : layout) {
    NamedTensor t{name, shape, std::vector<float>(shape_size(shape), 0.0f)};
    if (shape.size() > 1) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      double limit = std::sqrt(6.0 / double(fan_in));
      if (!scaled_layer.empty() && name.starts_with(scaled_layer)) limit *= kHeadScale;
      for (auto& v : t.values) v = static_cast<float>(rng.uniform(-limit, limit));
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
NodeId conv_relu_pool(Graph<T>& g, NodeId x, NodeId w, NodeId b) {
  return max_pool2d(g, relu(g, conv2d(g, x, w, b, 1, Padding::kSame)), 2);
}

void check_param_count(std::span<const NodeId> params, std::size_t expected, const char* what) {
  if (params.size() != expected) {
    throw ContractError(std::string(what) + ": expected " + std::to_string(expected) +
                        " parameter tensors, got " + std::to_string(params.size()));
  }
}

}  // namespace

std::vector<std::pair<std::string, Shape>> classifier_layout(std::size_t num_classes) {
  const std::size_t flat = 64 * (FeatureGrid::kMels / 4) * (FeatureGrid::kFrames / 4);
  return {{"conv1.weight", {32, 1, 3, 3}}, {"conv1.bias", {32}},
          {"conv2.weight", {64, 32, 3, 3}}, {"conv2.bias", {64}},
          {"fc1.weight", {128, flat}},      {"fc1.bias", {128}},
          {"fc2.weight", {num_classes, 128}}, {"fc2.bias", {num_classes}}};
}

std::vector<std::pair<std::string, Shape>> encoder_layout(std::size_t latent_dim) {
  const std::size_t flat = kBottleneckChannels * kBottleneckH * kBottleneckW;
  return {{"enc.conv1.weight", {16, 1, 3, 3}}, {"enc.conv1.bias", {16}},
          {"enc.conv2.weight", {32, 16, 3, 3}}, {"enc.conv2.bias", {32}},
          {"enc.fc.weight", {latent_dim, flat}}, {"enc.fc.bias", {latent_dim}}};
}

std::vector<std::pair<std::string, Shape>> decoder_layout(std::size_t latent_dim) {
  const std::size_t flat = kBottleneckChannels * kBottleneckH * kBottleneckW;
  return {{"dec.fc.weight", {flat, latent_dim}}, {"dec.fc.bias", {flat}},
          {"dec.conv1.weight", {16, 32, 3, 3}},  {"dec.conv1.bias", {16}},
          {"dec.conv2.weight", {16, 16, 3, 3}},  {"dec.conv2.bias", {16}},
          {"dec.out.weight", {1, 16, 3, 3}},     {"dec.out.bias", {1}}};
}

ClassifierModel init_classifier(std::uint64_t seed, std::size_t num_classes) {
  if (num_classes < 2) throw ConfigError("init_classifier: need at least 2 classes");
  Rng rng(seed);
  ClassifierModel m;
  m.num_classes = num_classes;
  m.seed = seed;
  m.params = init_params(classifier_layout(num_classes), rng, "fc2.");
  return m;
}

AutoencoderModel init_autoencoder(std::uint64_t seed, std::size_t latent_dim) {
  if (latent_dim == 0) throw ConfigError("init_autoencoder: latent_dim must be positive");
  Rng rng(seed);
  AutoencoderModel m;
  m.latent_dim = latent_dim;
  m.seed = seed;
  m.encoder = init_params(encoder_layout(latent_dim), rng);
  m.decoder = init_params(decoder_layout(latent_dim), rng);
  return m;
}

template <class T>
ParamBinding<T>::ParamBinding(const ParamSet& params) : params_(&params) {
  if constexpr (!std::is_same_v<T, float>) {
    converted_.reserve(params.size());
    for (const auto& p : params) converted_.emplace_back(p.values.begin(), p.values.end());
  }
}

template <class T>
std::vector<NodeId> ParamBinding<T>::add_leaves(Graph<T>& g, bool requires_grad) const {
  std::vector<NodeId> ids;
  ids.reserve(params_->size());
  for (std::size_t i = 0; i < params_->size(); ++i) {
    const auto& p = (*params_)[i];
    std::span<const T> values;
    if constexpr (std::is_same_v<T, float>) {
      values = p.values;
    } else {
      values = converted_[i];
    }
    ids.push_back(g.leaf_view(p.shape, values, requires_grad, p.name));
  }
  return ids;
}

template <class T>
NodeId grid_leaf(Graph<T>& g, const FeatureGrid& x, bool requires_grad) {
  std::vector<T> v(x.values().begin(), x.values().end());
  return g.leaf(Tensor<T>(kGridShape, std::move(v), requires_grad), "input");
}

template <class T>
NodeId classifier_graph(Graph<T>& g, NodeId input, std::span<const NodeId> p) {
  check_param_count(p, 8, "classifier_graph");
  if (g.shape(input) != kGridShape) {
    throw DimensionError("classifier: expected input " + shape_to_string(kGridShape) + ", got " +
                         shape_to_string(g.shape(input)));
  }
  auto h = conv_relu_pool(g, input, p[0], p[1]);
  h = conv_relu_pool(g, h, p[2], p[3]);
  h = relu(g, dense(g, flatten(g, h), p[4], p[5]));
  return dense(g, h, p[6], p[7]);
}

template <class T>
NodeId encoder_graph(Graph<T>& g, NodeId input, std::span<const NodeId> p) {
  check_param_count(p, 6, "encoder_graph");
  if (g.shape(input) != kGridShape) {
    throw DimensionError("encoder: expected input " + shape_to_string(kGridShape) + ", got " +
                         shape_to_string(g.shape(input)));
  }
  auto h = conv_relu_pool(g, input, p[0], p[1]);
  h = conv_relu_pool(g, h, p[2], p[3]);
  // Bottleneck: linear, no activation.
  return dense(g, flatten(g, h), p[4], p[5]);
}

template <class T>
NodeId decoder_graph(Graph<T>& g, NodeId latent, std::span<const NodeId> p) {
  check_param_count(p, 8, "decoder_graph");
  auto h = relu(g, dense(g, latent, p[0], p[1]));
  h = reshape(g, h, Shape{kBottleneckChannels, kBottleneckH, kBottleneckW});
  h = relu(g, conv2d(g, upsample_nearest2d(g, h, 2), p[2], p[3], 1, Padding::kSame));
  h = relu(g, conv2d(g, upsample_nearest2d(g, h, 2), p[4], p[5], 1, Padding::kSame));
  return sigmoid(g, conv2d(g, h, p[6], p[7], 1, Padding::kSame));
}

std::vector<double> softmax_probs(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ContractError("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t ClassifierOutput::argmax() const { return amx::argmax(probs); }

namespace {

template <class T>
ClassifierOutput classifier_forward_t(const ClassifierModel& m, const FeatureGrid& x) {
  Graph<T> g;
  ParamBinding<T> binding(m.params);
  const auto params = binding.add_leaves(g, false);
  const auto logits = classifier_graph(g, grid_leaf(g, x), params);
  ClassifierOutput out;
  out.logits.assign(g.value(logits).begin(), g.value(logits).end());
  out.probs = softmax_probs(out.logits);
  return out;
}

template <class T>
LatentCode encoder_forward_t(const AutoencoderModel& m, const FeatureGrid& x) {
  Graph<T> g;
  ParamBinding<T> binding(m.encoder);
  const auto z = encoder_graph(g, grid_leaf(g, x), binding.add_leaves(g, false));
  return LatentCode{{g.value(z).begin(), g.value(z).end()}};
}

template <class T>
FeatureGrid decoder_forward_t(const AutoencoderModel& m, const LatentCode& z) {
  if (z.values.size() != m.latent_dim) {
    throw DimensionError("decoder: latent has " + std::to_string(z.values.size()) +
                         " values, model expects " + std::to_string(m.latent_dim));
  }
  Graph<T> g;
  ParamBinding<T> binding(m.decoder);
  const auto zin = g.leaf(Tensor<T>({m.latent_dim}, std::vector<T>(z.values.begin(), z.values.end())));
  const auto out = decoder_graph(g, zin, binding.add_leaves(g, false));
  std::vector<float> v(FeatureGrid::kSize);
  const auto y = g.value(out);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(y[i]);
  return FeatureGrid(std::move(v));
}

}  // namespace

ClassifierOutput classifier_forward(const ClassifierModel& m, const FeatureGrid& x,
                                    Precision precision) {
  return precision == Precision::kFloat32 ? classifier_forward_t<float>(m, x)
                                          : classifier_forward_t<double>(m, x);
}

LatentCode encoder_forward(const AutoencoderModel& m, const FeatureGrid& x, Precision precision) {
  return precision == Precision::kFloat32 ? encoder_forward_t<float>(m, x)
                                          : encoder_forward_t<double>(m, x);
}

FeatureGrid decoder_forward(const AutoencoderModel& m, const LatentCode& z, Precision precision) {
  return precision == Precision::kFloat32 ? decoder_forward_t<float>(m, z)
                                          : decoder_forward_t<double>(m, z);
}

template class ParamBinding<float>;
template class ParamBinding<double>;
template NodeId classifier_graph<float>(Graph<float>&, NodeId, std::span<const NodeId>);
template NodeId classifier_graph<double>(Graph<double>&, NodeId, std::span<const NodeId>);
template NodeId encoder_graph<float>(Graph<float>&, NodeId, std::span<const NodeId>);
template NodeId encoder_graph<double>(Graph<double>&, NodeId, std::span<const NodeId>);
template NodeId decoder_graph<float>(Graph<float>&, NodeId, std::span<const NodeId>);
template NodeId decoder_graph<double>(Graph<double>&, NodeId, std::span<const NodeId>);
template NodeId grid_leaf<float>(Graph<float>&, const FeatureGrid&, bool);
template NodeId grid_leaf<double>(Graph<double>&, const FeatureGrid&, bool);

}  // namespace amx
