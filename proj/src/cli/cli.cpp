#include "amx/cli/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "amx/error.hpp"
#include "amx/features/spectral.hpp"
#include "amx/io/csv.hpp"
#include "amx/models/checkpoint.hpp"
#include "amx/rng.hpp"

namespace amx::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* precision_name(Precision p) { return p == Precision::kFloat64 ? "float64" : "float32"; }

Precision parse_precision(const std::string& s) {
  if (s == "float32") return Precision::kFloat32;
  if (s == "float64") return Precision::kFloat64;
  throw ConfigError("precision must be float32 or float64, got '" + s + "'");
}

ordered_json train_json(const TrainConfig& c, bool with_latent) {
  ordered_json j{{"epochs", c.epochs},
                 {"batch_size", c.batch_size},
                 {"learning_rate", c.adam.learning_rate},
                 {"beta1", c.adam.beta1},
                 {"beta2", c.adam.beta2},
                 {"epsilon", c.adam.epsilon},
                 {"precision", precision_name(c.precision)}};
  if (with_latent) j["latent_dim"] = c.latent_dim;
  return j;
}

ordered_json max_json(const MaxConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"max_iters", c.max_iters},
          {"target_prob_stop", c.target_prob_stop},
          {"clamp_inputs", c.clamp_inputs},
          {"precision", precision_name(c.precision)}};
}

// Every key of `given` must exist in `reference` (recursively for objects).
void check_keys(const json& given, const json& reference, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    if (value.is_object() && reference.at(key).is_object()) check_keys(value, reference.at(key), path);
  }
}

void read_train(const json& j, TrainConfig& c, bool with_latent) {
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.adam.learning_rate = j.at("learning_rate").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.epsilon = j.at("epsilon").get<double>();
  c.precision = parse_precision(j.at("precision").get<std::string>());
  if (with_latent) c.latent_dim = j.at("latent_dim").get<std::size_t>();
}

void read_max(const json& j, MaxConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_iters = j.at("max_iters").get<std::size_t>();
  c.target_prob_stop = j.at("target_prob_stop").get<double>();
  c.clamp_inputs = j.at("clamp_inputs").get<bool>();
  c.precision = parse_precision(j.at("precision").get<std::string>());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["dataset"] = {{"root", data_root.empty() ? ordered_json(nullptr) : ordered_json(data_root.string())},
                  {"classes", classes},
                  {"max_per_class", max_per_class},
                  {"val_pct", val_pct},
                  {"test_pct", test_pct},
                  {"synthetic",
                   {{"classes", synthetic.classes}, {"per_class", synthetic.per_class}, {"seed", synthetic.seed}}}};
  j["train"] = train_json(classifier, false);
  j["autoencoder"] = train_json(autoencoder, true);
  j["maximize"] = {{"runs_per_class", runs_per_class},
                   {"save_examples", save_examples},
                   {"direct", max_json(direct)},
                   {"latent", max_json(latent)}};
  j["embed"] = {{"max_examples", embed_max_examples},
                {"perplexity", tsne.perplexity},
                {"iterations", tsne.iterations},
                {"learning_rate", tsne.learning_rate},
                {"early_exaggeration", tsne.early_exaggeration},
                {"exaggeration_iters", tsne.exaggeration_iters}};
  j["output_dir"] = output_dir.string();
  j["seeds"] = {{"classifier", seeds.classifier},
                {"separate_classifier", seeds.separate_classifier},
                {"autoencoder", seeds.autoencoder},
                {"maximization", seeds.maximization}};
  return j;
}

RunConfig RunConfig::from_json(const json& given) {
  if (!given.is_object()) throw ConfigError("config: top level must be a JSON object");
  const json defaults = RunConfig{}.to_json();
  check_keys(given, defaults, "");
  if (given.contains("seeds")) {
    for (const char* k : {"classifier", "separate_classifier", "autoencoder", "maximization"}) {
      if (!given["seeds"].contains(k)) throw ConfigError(std::string("config: seeds.") + k + " is missing");
    }
  }
  json j = defaults;
  j.merge_patch(given);
  RunConfig c;
  try {
    const auto& d = j.at("dataset");
    // merge_patch drops null members, so an absent root means synthetic.
    if (d.contains("root") && !d["root"].is_null()) c.data_root = d["root"].get<std::string>();
    c.classes = d.at("classes").get<std::vector<std::string>>();
    c.max_per_class = d.at("max_per_class").get<std::size_t>();
    c.val_pct = d.at("val_pct").get<int>();
    c.test_pct = d.at("test_pct").get<int>();
    c.synthetic.classes = d.at("synthetic").at("classes").get<std::size_t>();
    c.synthetic.per_class = d.at("synthetic").at("per_class").get<std::size_t>();
    c.synthetic.seed = d.at("synthetic").at("seed").get<std::uint64_t>();
    read_train(j.at("train"), c.classifier, false);
    read_train(j.at("autoencoder"), c.autoencoder, true);
    const auto& m = j.at("maximize");
    c.runs_per_class = m.at("runs_per_class").get<std::size_t>();
    c.save_examples = m.at("save_examples").get<std::size_t>();
    read_max(m.at("direct"), c.direct);
    read_max(m.at("latent"), c.latent);
    const auto& e = j.at("embed");
    c.embed_max_examples = e.at("max_examples").get<std::size_t>();
    c.tsne.perplexity = e.at("perplexity").get<double>();
    c.tsne.iterations = e.at("iterations").get<std::size_t>();
    c.tsne.learning_rate = e.at("learning_rate").get<double>();
    c.tsne.early_exaggeration = e.at("early_exaggeration").get<double>();
    c.tsne.exaggeration_iters = e.at("exaggeration_iters").get<std::size_t>();
    c.output_dir = j.at("output_dir").get<std::string>();
    const auto& s = j.at("seeds");
    c.seeds.classifier = s.at("classifier").get<std::uint64_t>();
    c.seeds.separate_classifier = s.at("separate_classifier").get<std::uint64_t>();
    c.seeds.autoencoder = s.at("autoencoder").get<std::uint64_t>();
    c.seeds.maximization = s.at("maximization").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  if (c.output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
  if (c.val_pct < 0 || c.test_pct < 0 || c.val_pct + c.test_pct >= 100) {
    throw ConfigError("config: val_pct + test_pct must lie in [0, 100)");
  }
  if (c.data_root.empty() && (c.synthetic.classes < 2 || c.synthetic.per_class < 1)) {
    throw ConfigError("config: synthetic dataset needs >= 2 classes and >= 1 example per class");
  }
  if (c.runs_per_class < 1) throw ConfigError("config: maximize.runs_per_class must be >= 1");
  c.classifier.seed = c.seeds.classifier;
  c.autoencoder.seed = c.seeds.autoencoder;
  c.classifier.validate();
  c.autoencoder.validate();
  c.direct.validate();
  c.latent.validate();
  if (!c.direct.clamp_inputs) throw ConfigError("config: maximize.direct.clamp_inputs must be true");
  c.tsne.seed = mix_seed(c.seeds.maximization, 0x74736e65);
  return c;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(cfg.to_json().dump()); }

namespace {

// Paths and bookkeeping of one subcommand invocation.
class Session {
 public:
  Session(std::string subcommand, RunConfig cfg) : subcommand_(std::move(subcommand)), cfg_(std::move(cfg)) {
    std::error_code ec;
    fs::create_directories(cfg_.output_dir, ec);
    if (ec || !fs::is_directory(cfg_.output_dir)) {
      throw ConfigError("cannot create output directory " + cfg_.output_dir.string());
    }
  }

  const RunConfig& cfg() const { return cfg_; }
  fs::path path(const std::string& name) const { return cfg_.output_dir / name; }

  fs::path artifact(const std::string& name) {
    if (std::find(artifacts_.begin(), artifacts_.end(), name) == artifacts_.end()) artifacts_.push_back(name);
    return path(name);
  }

  ordered_json& metrics() { return metrics_; }

  void write_manifest() const {
    ordered_json m;
    m["subcommand"] = subcommand_;
    m["config_hash"] = hex64(config_hash(cfg_));
    m["seeds"] = cfg_.to_json()["seeds"];
    m["threads"] = omp_get_max_threads();
    m["artifacts"] = artifacts_;
    m["metrics"] = metrics_;
    m["config"] = cfg_.to_json();
    m["created_utc"] = utc_now();
    auto out = io::open_output(path("manifest-" + subcommand_ + ".json"));
    out << m.dump(2) << '\n';
  }

 private:
  std::string subcommand_;
  RunConfig cfg_;
  std::vector<std::string> artifacts_;
  ordered_json metrics_ = ordered_json::object();
};

struct LoadedData {
  DatasetSplit split;
  ordered_json report;
};

LoadedData load_data(const RunConfig& cfg) {
  if (cfg.data_root.empty()) {
    SynthOptions opt;
    opt.val_pct = cfg.val_pct;
    opt.test_pct = cfg.test_pct;
    LoadedData d{synth_dataset(cfg.synthetic.classes, cfg.synthetic.per_class, cfg.synthetic.seed, opt), {}};
    d.report["source"] = "synthetic";
    d.report["class_names"] = d.split.class_names;
    d.report["counts"] = {{"train", d.split.train.size()}, {"val", d.split.val.size()}, {"test", d.split.test.size()}};
    return d;
  }
  if (!fs::is_directory(cfg.data_root)) throw IngestionError("dataset root not found: " + cfg.data_root.string());
  ScanOptions opt;
  opt.class_filter = cfg.classes;
  opt.max_per_class = cfg.max_per_class;
  opt.val_pct = cfg.val_pct;
  opt.test_pct = cfg.test_pct;
  auto scan = scan_corpus(cfg.data_root, opt);
  LoadedData d{std::move(scan.split), ordered_json::parse(scan.report.to_json())};
  d.report["source"] = cfg.data_root.string();
  return d;
}

std::vector<std::string> class_names(Session& s) {
  const auto p = s.path("classes.json");
  if (fs::exists(p)) {
    std::ifstream in(p);
    return json::parse(in).get<std::vector<std::string>>();
  }
  return load_data(s.cfg()).split.class_names;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error("missing " + what + " checkpoint: " + p.string());
}

ClassifierModel load_clf(Session& s, const std::string& name) {
  const auto p = s.path(name + ".amx");
  require_file(p, name);
  return load_classifier(p);
}

AutoencoderModel load_ae(Session& s) {
  const auto p = s.path("autoencoder.amx");
  require_file(p, "autoencoder");
  return load_autoencoder(p);
}

void cmd_features(Session& s, const std::string& wav) {
  if (!wav.empty()) {
    const auto grid = log_mel(load_wav(wav));
    auto out = io::open_output(s.artifact(fs::path(wav).stem().string() + ".logmel.csv"));
    io::write_matrix_csv(out, grid.values(), FeatureGrid::kMels, FeatureGrid::kFrames, 9);
    return;
  }
  const auto data = load_data(s.cfg());
  auto out = io::open_output(s.artifact("ingestion.json"));
  out << data.report.dump(2) << '\n';
  s.metrics() = {{"train", data.split.train.size()}, {"val", data.split.val.size()}, {"test", data.split.test.size()}};
}

void cmd_train_classifier(Session& s, const std::string& which) {
  if (which != "original" && which != "separate" && which != "both") {
    throw ConfigError("--which must be original, separate or both");
  }
  const auto data = load_data(s.cfg());
  {
    auto out = io::open_output(s.artifact("classes.json"));
    out << json(data.split.class_names).dump() << '\n';
  }
  auto train_one = [&](const std::string& name, std::uint64_t seed) {
    TrainConfig tc = s.cfg().classifier;
    tc.seed = seed;
    spdlog::info("training {} classifier (seed {})", name, seed);
    const auto run = train_classifier(data.split, tc);
    save_checkpoint(run.model, s.artifact(name + ".amx"));
    write_history_csv(run.history, s.artifact(name + "_history.csv"));
    ordered_json m{{"best_epoch", run.history.best_epoch}};
    if (!data.split.test.empty()) m["test_accuracy"] = evaluate_accuracy(run.model, data.split.test, tc.precision);
    s.metrics()[name] = m;
  };
  if (which != "separate") train_one("classifier", s.cfg().seeds.classifier);
  if (which != "original") train_one("separate", s.cfg().seeds.separate_classifier);
}

void cmd_train_autoencoder(Session& s) {
  const auto data = load_data(s.cfg());
  const auto run = train_autoencoder(data.split, s.cfg().autoencoder);
  save_checkpoint(run.model, s.artifact("autoencoder.amx"));
  write_history_csv(run.history, s.artifact("autoencoder_history.csv"));
  s.metrics()["best_epoch"] = run.history.best_epoch;
  if (!data.split.test.empty()) {
    s.metrics()["test_mse"] = reconstruction_mse(run.model, data.split.test, s.cfg().autoencoder.precision);
  }
}

std::vector<MaxMode> parse_modes(const std::string& mode) {
  if (mode == "both") return {MaxMode::kDirect, MaxMode::kLatent};
  return {parse_mode(mode)};
}

std::string samples_name(MaxMode mode) { return std::string("maximize_") + mode_name(mode) + ".f32"; }
std::string summary_name(MaxMode mode) { return std::string("maximize_") + mode_name(mode) + ".csv"; }

void run_maximize(Session& s, MaxMode mode) {
  const auto& cfg = s.cfg();
  const auto clf = load_clf(s, "classifier");
  std::optional<AutoencoderModel> ae;
  if (mode == MaxMode::kLatent) ae = load_ae(s);
  const MaxConfig& mc = mode == MaxMode::kDirect ? cfg.direct : cfg.latent;
  const auto plan = noise_run_plan(clf.num_classes, cfg.runs_per_class,
                                   mix_seed(cfg.seeds.maximization, static_cast<std::uint64_t>(mode)));
  spdlog::info("maximize {}: {} runs", mode_name(mode), plan.size());
  const auto results = noise_to_class_batch(mode, MaxModels{&clf, ae ? &*ae : nullptr}, plan, mc);

  std::size_t hits = 0, reached = 0;
  {
    auto out = io::open_output(s.artifact(summary_name(mode)));
    out << "run,target,seed,iterations,reached_stop,target_prob,predicted,top1_energy\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      const auto predicted = argmax(r.final_probs);
      hits += predicted == r.target;
      reached += r.reached_stop;
      out << i << ',' << r.target << ',' << plan[i].seed << ',' << r.iterations_used << ',' << int(r.reached_stop)
          << ',' << io::format_number(r.final_probs[r.target], 17) << ',' << predicted << ','
          << io::format_number(top_energy_fraction(additive_noise(r)), 17) << '\n';
    }
  }
  {
    auto out = io::open_output(s.artifact(samples_name(mode)));
    for (const auto& r : results) {
      const auto v = r.maximized.values();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    }
  }
  std::vector<std::size_t> saved(clf.num_classes, 0);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto t = results[i].target;
    if (saved[t] >= cfg.save_examples) continue;
    const std::string stem = "class" + std::to_string(t) + "_run" + std::to_string(saved[t]);
    const std::string dir = std::string("maximize_") + mode_name(mode);
    write_result(results[i], mc, s.path(dir), stem);
    for (const char* ext : {".json", ".csv", ".diff.csv"}) s.artifact(dir + "/" + stem + ext);
    ++saved[t];
  }
  s.metrics()[mode_name(mode)] = {{"runs", results.size()},
                                  {"original_hit_rate", double(hits) / double(results.size())},
                                  {"reached_stop_rate", double(reached) / double(results.size())}};
}

struct StoredSamples {
  std::vector<std::size_t> targets;
  std::vector<FeatureGrid> grids;
};

StoredSamples read_samples(Session& s, MaxMode mode) {
  StoredSamples st;
  const auto csv = s.path(summary_name(mode));
  std::ifstream in(csv);
  if (!in) throw Error("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    st.targets.push_back(std::stoul(line.substr(a + 1, b - a - 1)));
  }
  const auto bin = s.path(samples_name(mode));
  std::ifstream raw(bin, std::ios::binary);
  if (!raw) throw Error("cannot read " + bin.string());
  for (std::size_t i = 0; i < st.targets.size(); ++i) {
    std::vector<float> v(FeatureGrid::kSize);
    raw.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!raw) throw CorruptionError(bin.string() + " holds fewer samples than " + csv.string());
    st.grids.emplace_back(std::move(v));
  }
  return st;
}

void cmd_maximize(Session& s, const std::string& mode) {
  for (auto m : parse_modes(mode)) run_maximize(s, m);
}

void cmd_evaluate_transfer(Session& s, const std::string& mode) {
  const auto original = load_clf(s, "classifier");
  const auto separate = load_clf(s, "separate");
  const auto names = class_names(s);
  if (names.size() != original.num_classes || names.size() != separate.num_classes) {
    throw ContractError("evaluate-transfer: class count disagrees between checkpoints and classes.json");
  }
  ordered_json summary;
  for (auto m : parse_modes(mode)) {
    if (!fs::exists(s.path(samples_name(m))) || !fs::exists(s.path(summary_name(m)))) run_maximize(s, m);
    const auto st = read_samples(s, m);
    std::vector<Prediction> preds(st.grids.size());
    std::vector<char> success(st.grids.size(), 0);
    std::vector<char> original_hit(st.grids.size(), 0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < st.grids.size(); ++i) {
      const auto o = classifier_forward(original, st.grids[i]).argmax();
      const auto p = classifier_forward(separate, st.grids[i]).argmax();
      preds[i] = {st.targets[i], p};
      original_hit[i] = o == st.targets[i];
      success[i] = maximization_success(o, p, st.targets[i]);
    }
    const auto grid = transfer_grid(preds, names);
    const std::string stem = std::string("transfer_") + mode_name(m);
    write_transfer_csv(grid, s.artifact(stem + ".csv"));
    write_transfer_svg(grid, s.artifact(stem + ".svg"), std::string("Transfer grid (") + mode_name(m) + ")");
    double ok = 0, hit = 0;
    for (std::size_t i = 0; i < success.size(); ++i) {
      ok += success[i];
      hit += original_hit[i];
    }
    const double n = double(success.size());
    summary[mode_name(m)] = {{"samples", success.size()},
                             {"original_hit_rate", hit / n},
                             {"success_rate", ok / n},
                             {"mean_diagonal", grid.mean_diagonal()}};
  }
  auto out = io::open_output(s.artifact("transfer_summary.json"));
  out << summary.dump(2) << '\n';
  s.metrics()["transfer"] = summary;
}

void cmd_embed(Session& s) {
  const auto& cfg = s.cfg();
  const auto clf = load_clf(s, "classifier");
  const auto ae = load_ae(s);
  auto data = load_data(cfg);
  auto& test = data.split.test;
  std::vector<LabeledExample> chosen;
  if (cfg.embed_max_examples == 0 || cfg.embed_max_examples >= test.size()) {
    chosen = std::move(test);
  } else {
    for (std::size_t i = 0; i < cfg.embed_max_examples; ++i) chosen.push_back(test[i * test.size() / cfg.embed_max_examples]);
  }
  ShiftConfig sc;
  sc.max = cfg.latent;
  sc.tsne = cfg.tsne;
  const auto report = latent_shift_report(ae, clf, chosen, data.split.class_names, sc);
  write_embeddings_csv(report.points, s.artifact("embeddings.csv"));
  write_embeddings_svg(report.points, s.artifact("embeddings.svg"), "Latent codes before and after maximization");
  write_shift_csv(report.rows, s.artifact("latent_shift.csv"));
  {
    auto out = io::open_output(s.artifact("tsne_kl.csv"));
    out << "iteration,kl\n";
    for (std::size_t i = 0; i < report.kl.size(); ++i) out << i + 1 << ',' << io::format_number(report.kl[i], 17) << '\n';
  }
  s.metrics()["examples"] = chosen.size();
  s.metrics()["misclassified"] = report.count(true);
  if (report.count(true) > 0) s.metrics()["mean_displacement_misclassified"] = report.mean_displacement(true);
  if (report.count(false) > 0) s.metrics()["mean_displacement_correct"] = report.mean_displacement(false);
}

// dotted.path=value; the value is parsed as JSON when possible, else taken as a string.
void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::stringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!(*node)[parts[i]].is_object()) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = std::move(value);
}

struct CommonOptions {
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::string> sets;
  int threads = 0;
};

RunConfig resolve_config(const CommonOptions& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot read config file " + o.config);
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + o.config);
  }
  for (const auto& s : o.sets) apply_override(j, s);
  if (!o.out.empty()) j["output_dir"] = o.out;
  if (!o.data.empty()) j["dataset"]["root"] = o.data;
  return RunConfig::from_json(j);
}

void apply_threads(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("AMX_THREADS"); env && *env) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("AMX_THREADS must be a positive integer, got '") + env + "'");
      }
      if (n <= 0) throw ConfigError(std::string("AMX_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Activation maximization for spoken-command classifiers", "amx"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  app.add_option("-c,--config", common.config, "JSON run configuration");
  app.add_option("-o,--out", common.out, "Output directory (overrides output_dir)");
  app.add_option("--data", common.data, "Speech Commands root (overrides dataset.root)");
  app.add_option("--set", common.sets, "Config override key.path=value (repeatable)");
  app.add_option("--threads", common.threads, "Worker threads (falls back to AMX_THREADS)")->check(CLI::PositiveNumber);

  std::string which = "both";
  std::string mode = "both";
  std::string wav;
  auto* features = app.add_subcommand("features", "Scan the dataset and write the ingestion report");
  features->add_option("--wav", wav, "Write the log-mel grid of one WAV file instead");
  auto* train_c = app.add_subcommand("train-classifier", "Train the original and/or separate classifier");
  train_c->add_option("--which", which, "original, separate or both")
      ->check(CLI::IsMember({"original", "separate", "both"}));
  auto* train_a = app.add_subcommand("train-autoencoder", "Train the autoencoder");
  auto* maximize = app.add_subcommand("maximize", "Noise-to-class maximization with the original classifier");
  auto* transfer = app.add_subcommand("evaluate-transfer", "Transfer grids and success rates on the separate classifier");
  auto* embed = app.add_subcommand("embed", "Latent shift report with a joint t-SNE embedding");
  auto* report = app.add_subcommand("report", "maximize, evaluate-transfer and embed in one run");
  for (auto* sub : {maximize, transfer, report}) {
    sub->add_option("--mode", mode, "direct, latent or both")->check(CLI::IsMember({"direct", "latent", "both"}));
  }

  std::vector<const char*> args;
  for (const auto& a : argv) args.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    for (std::size_t i = 1; i < argv.size(); ++i) {
      if (argv[i].starts_with("-")) break;
      if (!app.get_subcommand_no_throw(argv[i])) message = "unknown subcommand '" + argv[i] + "'";
      break;
    }
    err << "amx: " << message << "\n\n" << app.help();
    return 2;
  }

  try {
    apply_threads(common.threads);
    const auto* sub = app.get_subcommands().front();
    Session session(sub->get_name(), resolve_config(common));
    if (sub == features) {
      cmd_features(session, wav);
    } else if (sub == train_c) {
      cmd_train_classifier(session, which);
    } else if (sub == train_a) {
      cmd_train_autoencoder(session);
    } else if (sub == maximize) {
      cmd_maximize(session, mode);
    } else if (sub == transfer) {
      cmd_evaluate_transfer(session, mode);
    } else if (sub == embed) {
      cmd_embed(session);
    } else {
      cmd_maximize(session, mode);
      cmd_evaluate_transfer(session, mode);
      cmd_embed(session);
    }
    session.write_manifest();
    return 0;
  } catch (const ConfigError& e) {
    err << "amx: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "amx: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace amx::cli
