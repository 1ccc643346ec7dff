#include "amx/actmax/actmax.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>

#include <nlohmann/json.hpp>

#include "amx/core/ops.hpp"
#include "amx/error.hpp"
#include "amx/io/csv.hpp"
#include "amx/rng.hpp"

namespace amx {

const char* mode_name(MaxMode mode) { return mode == MaxMode::kDirect ? "direct" : "latent"; }

MaxMode parse_mode(const std::string& name) {
  if (name == "direct") return MaxMode::kDirect;
  if (name == "latent") return MaxMode::kLatent;
  throw ConfigError("unknown maximization mode '" + name + "' (expected direct or latent)");
}

MaxConfig MaxConfig::direct_defaults() { return {}; }

MaxConfig MaxConfig::latent_defaults() {
  MaxConfig c;
  c.learning_rate = 0.1;
  c.clamp_inputs = false;
  return c;
}

void MaxConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("maximize: learning_rate must be finite and >= 0");
  }
  if (!(target_prob_stop > 0.0 && target_prob_stop <= 1.0)) {
    throw ConfigError("maximize: target_prob_stop must lie in (0, 1]");
  }
}

namespace {

template <class T>
std::vector<double> to_double(std::span<const T> v) {
  return {v.begin(), v.end()};
}

FeatureGrid grid_from(std::span<const double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return FeatureGrid(std::move(out));
}

template <class T>
FeatureGrid grid_from(std::span<const T> v) {
  if constexpr (std::is_same_v<T, float>) {
    return FeatureGrid(std::vector<float>(v.begin(), v.end()));
  } else {
    return grid_from(std::span<const double>(v));
  }
}

std::vector<double> exact_diff(const FeatureGrid& a, const FeatureGrid& b) {
  std::vector<double> d(FeatureGrid::kSize);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = double(a.values()[i]) - double(b.values()[i]);
  return d;
}

void check_target(std::size_t target, std::size_t k) {
  if (target >= k) {
    throw IndexError("maximize: target " + std::to_string(target) + " out of range for " + std::to_string(k) +
                     " classes");
  }
}

// Shared ascent loop. `step` applies one update from the gradient of the
// target logit and refreshes the graph leaf.
template <class T>
void ascend(Graph<T>& g, NodeId logits, NodeId target_logit, NodeId leaf, const MaxConfig& cfg,
            std::size_t target, MaximizationResult& r, const std::function<void(std::span<const T>)>& step) {
  for (std::size_t it = 0;; ++it) {
    try {
      if (it > 0) g.forward();
      const auto lv = to_double(g.value(logits));
      const auto probs = softmax_probs(lv);
      r.trajectory.push_back(lv[target]);
      if (it == 0) r.start_probs = probs;
      r.final_probs = probs;
      if (probs[target] >= cfg.target_prob_stop) {
        r.reached_stop = true;
        r.iterations_used = it;
        return;
      }
      if (it == cfg.max_iters) {
        r.iterations_used = it;
        return;
      }
      g.zero_grad();
      g.backward(target_logit);
    } catch (const NumericError& e) {
      throw NumericError("maximize: iteration " + std::to_string(it) + ": " + e.what());
    }
    step(g.grad(leaf));
  }
}

}  // namespace

template <class T>
MaximizationResult maximize_direct_with(const LogitBuilder<T>& logits_fn, const FeatureGrid& x0, std::size_t target,
                                        const MaxConfig& cfg) {
  cfg.validate();
  if (!cfg.clamp_inputs) throw ConfigError("maximize: direct mode requires clamp_inputs");
  Graph<T> g;
  const NodeId x = grid_leaf(g, x0, true);
  const NodeId logits = logits_fn(g, x);
  check_target(target, g.value(logits).size());
  const NodeId h = select(g, logits, target);

  MaximizationResult r;
  r.mode = MaxMode::kDirect;
  r.target = target;
  r.start = x0;
  std::vector<float> cur = x0.data();
  ascend<T>(g, logits, h, x, cfg, target, r, [&](std::span<const T> grad) {
    auto leaf = g.mutable_leaf_values(x);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double s = cfg.learning_rate * double(grad[i]);
      if (s != 0.0) cur[i] = to_feature_range(double(cur[i]) + s);
      leaf[i] = T(cur[i]);
    }
  });
  r.maximized = FeatureGrid(std::move(cur));
  r.x_diff = exact_diff(r.start, r.maximized);
  return r;
}

template <class T>
MaximizationResult maximize_latent_with(const LogitBuilder<T>& logits_fn, const DecoderBuilder<T>& decoder_fn,
                                        const LatentCode& z0, std::size_t target, const MaxConfig& cfg) {
  cfg.validate();
  if (z0.values.empty()) throw DimensionError("maximize: empty latent code");
  Graph<T> g;
  const NodeId z = g.leaf(Tensor<T>({z0.values.size()}, std::vector<T>(z0.values.begin(), z0.values.end()), true),
                          "z");
  const NodeId decoded = decoder_fn(g, z);
  if (g.value(decoded).size() != FeatureGrid::kSize) {
    throw DimensionError("maximize: decoder yields " + shape_to_string(g.shape(decoded)) +
                         ", classifier expects " + shape_to_string(kGridShape));
  }
  const NodeId x = g.shape(decoded) == kGridShape ? decoded : reshape(g, decoded, kGridShape);
  const NodeId logits = logits_fn(g, x);
  check_target(target, g.value(logits).size());
  const NodeId h = select(g, logits, target);

  MaximizationResult r;
  r.mode = MaxMode::kLatent;
  r.target = target;
  r.start = grid_from(g.value(decoded));
  r.start_latent = z0;
  std::vector<double> cur = z0.values;
  ascend<T>(g, logits, h, z, cfg, target, r, [&](std::span<const T> grad) {
    auto leaf = g.mutable_leaf_values(z);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] += cfg.learning_rate * double(grad[i]);
      leaf[i] = T(cur[i]);
    }
  });
  r.final_latent = LatentCode{std::move(cur)};
  r.maximized = grid_from(g.value(decoded));
  r.x_diff = exact_diff(r.start, r.maximized);
  return r;
}

template MaximizationResult maximize_direct_with<float>(const LogitBuilder<float>&, const FeatureGrid&, std::size_t,
                                                        const MaxConfig&);
template MaximizationResult maximize_direct_with<double>(const LogitBuilder<double>&, const FeatureGrid&,
                                                         std::size_t, const MaxConfig&);
template MaximizationResult maximize_latent_with<float>(const LogitBuilder<float>&, const DecoderBuilder<float>&,
                                                        const LatentCode&, std::size_t, const MaxConfig&);
template MaximizationResult maximize_latent_with<double>(const LogitBuilder<double>&, const DecoderBuilder<double>&,
                                                         const LatentCode&, std::size_t, const MaxConfig&);

namespace {

template <class T>
MaximizationResult direct_t(const ClassifierModel& clf, const FeatureGrid& x0, std::size_t target,
                            const MaxConfig& cfg) {
  ParamBinding<T> binding(clf.params);
  const LogitBuilder<T> logits = [&](Graph<T>& g, NodeId x) {
    return classifier_graph(g, x, binding.add_leaves(g, false));
  };
  return maximize_direct_with<T>(logits, x0, target, cfg);
}

template <class T>
MaximizationResult latent_t(const ClassifierModel& clf, const AutoencoderModel& ae, const LatentCode& z0,
                            std::size_t target, const MaxConfig& cfg) {
  if (z0.values.size() != ae.latent_dim) {
    throw DimensionError("maximize: latent has " + std::to_string(z0.values.size()) + " values, decoder expects " +
                         std::to_string(ae.latent_dim));
  }
  ParamBinding<T> cls(clf.params);
  ParamBinding<T> dec(ae.decoder);
  const LogitBuilder<T> logits = [&](Graph<T>& g, NodeId x) {
    return classifier_graph(g, x, cls.add_leaves(g, false));
  };
  const DecoderBuilder<T> decoder = [&](Graph<T>& g, NodeId z) {
    return decoder_graph(g, z, dec.add_leaves(g, false));
  };
  return maximize_latent_with<T>(logits, decoder, z0, target, cfg);
}

}  // namespace

MaximizationResult maximize_direct(const ClassifierModel& clf, const FeatureGrid& x0, std::size_t target,
                                   const MaxConfig& cfg) {
  return cfg.precision == Precision::kFloat64 ? direct_t<double>(clf, x0, target, cfg)
                                              : direct_t<float>(clf, x0, target, cfg);
}

MaximizationResult maximize_latent(const ClassifierModel& clf, const AutoencoderModel& ae, const LatentCode& z0,
                                   std::size_t target, const MaxConfig& cfg) {
  return cfg.precision == Precision::kFloat64 ? latent_t<double>(clf, ae, z0, target, cfg)
                                              : latent_t<float>(clf, ae, z0, target, cfg);
}

FeatureGrid noise_grid(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(FeatureGrid::kSize);
  for (auto& x : v) x = rng.uniform_f24();
  return FeatureGrid(std::move(v));
}

LatentCode noise_latent(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  LatentCode z;
  z.values.resize(dim);
  for (auto& v : z.values) v = rng.normal();
  return z;
}

namespace {

const AutoencoderModel& require_autoencoder(const MaxModels& models) {
  if (models.autoencoder == nullptr) throw ConfigError("maximize: latent mode needs an autoencoder");
  return *models.autoencoder;
}

const ClassifierModel& require_classifier(const MaxModels& models) {
  if (models.classifier == nullptr) throw ConfigError("maximize: no classifier given");
  return *models.classifier;
}

}  // namespace

MaximizationResult noise_to_class(MaxMode mode, const MaxModels& models, std::size_t target, std::uint64_t seed,
                                  const MaxConfig& cfg) {
  const auto& clf = require_classifier(models);
  if (mode == MaxMode::kDirect) return maximize_direct(clf, noise_grid(seed), target, cfg);
  const auto& ae = require_autoencoder(models);
  return maximize_latent(clf, ae, noise_latent(ae.latent_dim, seed), target, cfg);
}

MaximizationResult class_to_class(MaxMode mode, const MaxModels& models, const LabeledExample& example,
                                  const MaxConfig& cfg) {
  const auto& clf = require_classifier(models);
  if (mode == MaxMode::kDirect) return maximize_direct(clf, example.features, example.label, cfg);
  const auto& ae = require_autoencoder(models);
  return maximize_latent(clf, ae, encoder_forward(ae, example.features, cfg.precision), example.label, cfg);
}

std::vector<MaximizationResult> noise_to_class_batch(MaxMode mode, const MaxModels& models,
                                                     std::span<const NoiseRun> runs, const MaxConfig& cfg) {
  std::vector<MaximizationResult> out(runs.size());
  std::vector<std::exception_ptr> errors(runs.size());
  const auto n = static_cast<std::ptrdiff_t>(runs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = noise_to_class(mode, models, runs[i].target, runs[i].seed, cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<NoiseRun> noise_run_plan(std::size_t num_classes, std::size_t runs_per_class, std::uint64_t base_seed) {
  std::vector<NoiseRun> plan;
  plan.reserve(num_classes * runs_per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < runs_per_class; ++i) {
      plan.push_back({c, mix_seed(base_seed, c * 1000003 + i)});
    }
  }
  return plan;
}

std::vector<double> additive_noise(const MaximizationResult& r) { return exact_diff(r.start, r.maximized); }

double top_energy_fraction(std::span<const double> x, double fraction) {
  if (x.empty()) return 0.0;
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("top_energy_fraction: fraction must lie in (0, 1]");
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = x[i] * x[i];
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * double(x.size()))));
  std::sort(e.begin(), e.end(), std::greater<>());
  double top = 0.0, total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i < k) top += e[i];
    total += e[i];
  }
  return total > 0.0 ? top / total : 0.0;
}

void write_result(const MaximizationResult& r, const MaxConfig& cfg, const std::filesystem::path& dir,
                  const std::string& stem) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(r.mode);
  j["target"] = r.target;
  j["config"] = {{"learning_rate", cfg.learning_rate},
                 {"max_iters", cfg.max_iters},
                 {"target_prob_stop", cfg.target_prob_stop},
                 {"clamp_inputs", cfg.clamp_inputs},
                 {"precision", cfg.precision == Precision::kFloat64 ? "float64" : "float32"}};
  j["iterations_used"] = r.iterations_used;
  j["reached_stop"] = r.reached_stop;
  j["trajectory"] = r.trajectory;
  j["start_probs"] = r.start_probs;
  j["final_probs"] = r.final_probs;
  if (r.start_latent) j["start_latent"] = r.start_latent->values;
  if (r.final_latent) j["final_latent"] = r.final_latent->values;
  j["maximized_csv"] = stem + ".csv";
  j["x_diff_csv"] = stem + ".diff.csv";
  {
    auto out = io::open_output(dir / (stem + ".json"));
    out << j.dump(2) << '\n';
  }
  {
    auto out = io::open_output(dir / (stem + ".csv"));
    io::write_matrix_csv(out, r.maximized.values(), FeatureGrid::kMels, FeatureGrid::kFrames, 9);
  }
  auto out = io::open_output(dir / (stem + ".diff.csv"));
  io::write_matrix_csv(out, std::span<const double>(r.x_diff), FeatureGrid::kMels, FeatureGrid::kFrames, 17);
}

}  // namespace amx
