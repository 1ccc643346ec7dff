#include "amx/train/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include <spdlog/spdlog.h>

#include "amx/core/ops.hpp"
#include "amx/error.hpp"
#include "amx/io/csv.hpp"
#include "amx/rng.hpp"

namespace amx {

template <class P, class G>
void adam_step(std::span<P> params, std::span<const G> grads, AdamState& state, const AdamConfig& cfg,
               std::uint64_t t) {
  if (t < 1) throw ContractError("adam_step: t must be >= 1");
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: state sized for " + std::to_string(state.m.size()) + " params, got " +
                         std::to_string(params.size()));
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = double(grads[i]);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] = static_cast<P>(double(params[i]) - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
  }
}

template void adam_step<float, float>(std::span<float>, std::span<const float>, AdamState&, const AdamConfig&,
                                      std::uint64_t);
template void adam_step<float, double>(std::span<float>, std::span<const double>, AdamState&,
                                       const AdamConfig&, std::uint64_t);
template void adam_step<double, double>(std::span<double>, std::span<const double>, AdamState&,
                                        const AdamConfig&, std::uint64_t);

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(adam.learning_rate > 0.0) || !std::isfinite(adam.learning_rate)) {
    throw ConfigError("train: learning_rate must be > 0");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train: adam epsilon must be > 0");
  if (latent_dim < 1) throw ConfigError("train: latent_dim must be >= 1");
}

void write_history_csv(const TrainHistory& h, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (std::size_t e = 0; e < h.epochs(); ++e) {
    out << (e + 1) << ',' << io::format_number(h.train_loss[e], 17) << ','
        << (e < h.val_loss.size() ? io::format_number(h.val_loss[e], 17) : std::string()) << ','
        << (e < h.val_acc.size() ? io::format_number(h.val_acc[e], 17) : std::string()) << '\n';
  }
  if (!out) throw Error("history: write failed for " + path.string());
}

namespace {

struct ClassifierEval {
  double loss = 0.0;
  double accuracy = 0.0;
};

ClassifierEval eval_classifier(const ClassifierModel& m, std::span<const LabeledExample> examples,
                               Precision precision) {
  if (examples.empty()) throw EvaluationError("evaluate: empty example list");
  double loss = 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    if (ex.label >= m.num_classes) {
      throw EvaluationError("evaluate: label " + std::to_string(ex.label) + " >= K " +
                            std::to_string(m.num_classes));
    }
    const auto out = classifier_forward(m, ex.features, precision);
    loss += -std::log(out.probs[ex.label] + 1e-12);
    hits += out.argmax() == ex.label ? 1 : 0;
  }
  return {loss / double(examples.size()), double(hits) / double(examples.size())};
}

// Per-sample loss over parameter leaves of every group, concatenated.
template <class T>
using SampleLoss = std::function<NodeId(Graph<T>&, std::span<const NodeId>, const LabeledExample&)>;

struct Optimizer {
  std::vector<ParamSet*> groups;
  std::vector<AdamState> states;
  std::uint64_t step = 0;
};

template <class T>
double train_batch(Optimizer& opt, const SampleLoss<T>& sample_loss, std::span<const LabeledExample> data,
                   const std::vector<std::size_t>& batch, const AdamConfig& adam) {
  Graph<T> g;
  std::vector<ParamBinding<T>> bindings;
  bindings.reserve(opt.groups.size());
  std::vector<NodeId> leaves;
  for (ParamSet* group : opt.groups) {
    bindings.emplace_back(*group);
    const auto ids = bindings.back().add_leaves(g, true);
    leaves.insert(leaves.end(), ids.begin(), ids.end());
  }
  std::vector<NodeId> losses;
  losses.reserve(batch.size());
  for (std::size_t idx : batch) losses.push_back(sample_loss(g, leaves, data[idx]));
  const NodeId loss = mean(g, std::span<const NodeId>(losses));
  const double value = double(g.scalar(loss));
  g.backward(loss);

  ++opt.step;
  std::size_t k = 0;
  for (ParamSet* group : opt.groups) {
    for (auto& p : *group) {
      adam_step(std::span<float>(p.values), g.grad(leaves[k]), opt.states[k], adam, opt.step);
      ++k;
    }
  }
  return value;
}

// Returns mean train loss of the epoch.
template <class T>
double train_epoch(Optimizer& opt, const SampleLoss<T>& sample_loss, std::span<const LabeledExample> data,
                   const TrainConfig& cfg, std::size_t epoch) {
  const auto batches = batch_iter(data.size(), cfg.batch_size, mix_seed(cfg.seed, 0x7261696e), epoch);
  double total = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    double loss = 0.0;
    try {
      loss = train_batch<T>(opt, sample_loss, data, batches[b], cfg.adam);
    } catch (const NumericError& e) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) + " batch " +
                          std::to_string(b + 1) + ": " + e.what());
    }
    if (!std::isfinite(loss)) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) + " batch " +
                          std::to_string(b + 1) + ": loss is not finite");
    }
    total += loss * double(batches[b].size());
  }
  return total / double(data.size());
}

Optimizer make_optimizer(std::vector<ParamSet*> groups) {
  Optimizer opt;
  opt.groups = std::move(groups);
  for (ParamSet* g : opt.groups) opt.states.resize(opt.states.size() + g->size());
  return opt;
}

template <class T>
SampleLoss<T> classifier_loss() {
  return [](Graph<T>& g, std::span<const NodeId> leaves, const LabeledExample& ex) {
    const auto logits = classifier_graph(g, grid_leaf(g, ex.features), leaves);
    return cross_entropy(g, softmax(g, logits), ex.label);
  };
}

template <class T>
SampleLoss<T> autoencoder_loss(std::size_t encoder_params) {
  return [encoder_params](Graph<T>& g, std::span<const NodeId> leaves, const LabeledExample& ex) {
    const auto x = grid_leaf(g, ex.features);
    const auto z = encoder_graph(g, x, leaves.first(encoder_params));
    const auto y = reshape(g, decoder_graph(g, z, leaves.subspan(encoder_params)), kGridShape);
    return mse(g, y, x);
  };
}

void check_train_split(const DatasetSplit& split) {
  if (split.train.empty()) throw ConfigError("train: empty train split");
}

}  // namespace

ClassifierRun train_classifier(const DatasetSplit& split, const TrainConfig& config) {
  config.validate();
  check_train_split(split);
  const std::size_t K = split.num_classes();
  ClassifierRun run{init_classifier(config.seed, K), {}};
  for (const auto& ex : split.train) {
    if (ex.label >= K) throw ConfigError("train: label " + std::to_string(ex.label) + " >= K " + std::to_string(K));
  }
  auto opt = make_optimizer({&run.model.params});
  run.history.initial_train_loss = eval_classifier(run.model, split.train, config.precision).loss;

  std::optional<ParamSet> best;
  double best_acc = -1.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double train_loss = config.precision == Precision::kFloat64
                                  ? train_epoch<double>(opt, classifier_loss<double>(), split.train, config, epoch)
                                  : train_epoch<float>(opt, classifier_loss<float>(), split.train, config, epoch);
    run.history.train_loss.push_back(train_loss);
    if (split.val.empty()) {
      spdlog::info("classifier epoch {}/{} train_loss {:.5f}", epoch + 1, config.epochs, train_loss);
      continue;
    }
    const auto val = eval_classifier(run.model, split.val, config.precision);
    run.history.val_loss.push_back(val.loss);
    run.history.val_acc.push_back(val.accuracy);
    spdlog::info("classifier epoch {}/{} train_loss {:.5f} val_loss {:.5f} val_acc {:.4f}", epoch + 1,
                 config.epochs, train_loss, val.loss, val.accuracy);
    if (val.accuracy > best_acc) {
      best_acc = val.accuracy;
      best = run.model.params;
      run.history.best_epoch = epoch + 1;
    }
  }
  if (best) {
    run.model.params = std::move(*best);
  } else {
    run.history.best_epoch = config.epochs;
  }
  return run;
}

AutoencoderRun train_autoencoder(const DatasetSplit& split, const TrainConfig& config) {
  config.validate();
  check_train_split(split);
  AutoencoderRun run{init_autoencoder(config.seed, config.latent_dim), {}};
  auto opt = make_optimizer({&run.model.encoder, &run.model.decoder});
  const std::size_t n_enc = run.model.encoder.size();
  run.history.initial_train_loss = reconstruction_mse(run.model, split.train, config.precision);

  std::optional<std::pair<ParamSet, ParamSet>> best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double train_loss = config.precision == Precision::kFloat64
                                  ? train_epoch<double>(opt, autoencoder_loss<double>(n_enc), split.train, config, epoch)
                                  : train_epoch<float>(opt, autoencoder_loss<float>(n_enc), split.train, config, epoch);
    run.history.train_loss.push_back(train_loss);
    if (split.val.empty()) {
      spdlog::info("autoencoder epoch {}/{} train_mse {:.6f}", epoch + 1, config.epochs, train_loss);
      continue;
    }
    const double val = reconstruction_mse(run.model, split.val, config.precision);
    run.history.val_loss.push_back(val);
    spdlog::info("autoencoder epoch {}/{} train_mse {:.6f} val_mse {:.6f}", epoch + 1, config.epochs, train_loss,
                 val);
    if (val < best_loss) {
      best_loss = val;
      best.emplace(run.model.encoder, run.model.decoder);
      run.history.best_epoch = epoch + 1;
    }
  }
  if (best) {
    run.model.encoder = std::move(best->first);
    run.model.decoder = std::move(best->second);
  } else {
    run.history.best_epoch = config.epochs;
  }
  return run;
}

double evaluate_accuracy(const Predictor& predict, std::span<const LabeledExample> examples) {
  if (examples.empty()) throw EvaluationError("evaluate_accuracy: empty example list");
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += predict(ex.features) == ex.label ? 1 : 0;
  return double(hits) / double(examples.size());
}

double evaluate_accuracy(const ClassifierModel& model, std::span<const LabeledExample> examples,
                         Precision precision) {
  return eval_classifier(model, examples, precision).accuracy;
}

double evaluate_loss(const ClassifierModel& model, std::span<const LabeledExample> examples, Precision precision) {
  return eval_classifier(model, examples, precision).loss;
}

double reconstruction_mse(const AutoencoderModel& model, std::span<const LabeledExample> examples,
                          Precision precision) {
  if (examples.empty()) throw EvaluationError("reconstruction_mse: empty example list");
  double total = 0.0;
  for (const auto& ex : examples) {
    const auto y = decoder_forward(model, encoder_forward(model, ex.features, precision), precision);
    double s = 0.0;
    for (std::size_t i = 0; i < FeatureGrid::kSize; ++i) {
      const double d = double(y.values()[i]) - double(ex.features.values()[i]);
      s += d * d;
    }
    total += s / double(FeatureGrid::kSize);
  }
  return total / double(examples.size());
}

}  // namespace amx
