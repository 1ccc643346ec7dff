#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amx/cli/cli.hpp"
#include "amx/error.hpp"

namespace fs = std::filesystem;
using amx::cli::RunConfig;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result amx_run(std::vector<std::string> args) {
  args.insert(args.begin(), "amx");
  std::ostringstream out, err;
  const int code = amx::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "amx_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small enough that a full pipeline takes seconds.
const char* kConfig = R"({
  "dataset": {"synthetic": {"classes": 3, "per_class": 30, "seed": 5}},
  "train": {"epochs": 1},
  "autoencoder": {"epochs": 1},
  "maximize": {"runs_per_class": 2, "direct": {"max_iters": 20}, "latent": {"max_iters": 20}},
  "embed": {"perplexity": 4, "iterations": 260},
  "seeds": {"classifier": 1, "separate_classifier": 2, "autoencoder": 3, "maximization": 4}
})";

fs::path write_config(const fs::path& dir) {
  const auto p = dir / "c.json";
  std::ofstream(p) << kConfig;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::set<std::string> listing(const fs::path& root) {
  std::set<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(root)) names.insert(fs::relative(e.path(), root).string());
  return names;
}

void run_pipeline(const fs::path& config, const fs::path& out, const std::string& threads) {
  for (std::vector<std::string> cmd : {std::vector<std::string>{"train-classifier"}, {"train-autoencoder"}, {"report"}}) {
    cmd.insert(cmd.end(), {"--config", config.string(), "--out", out.string(), "--threads", threads});
    const auto r = amx_run(cmd);
    INFO(cmd[0] << ": " << r.err);
    REQUIRE(r.code == 0);
  }
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = amx_run({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown subcommand 'frobnicate'") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);

  CHECK(amx_run({}).code == 2);
  CHECK(amx_run({"train-classifier", "--which", "neither"}).code == 2);
  CHECK(amx_run({"maximize", "--threads", "0"}).code == 2);

  const auto dir = fresh_dir("usage");
  std::ofstream(dir / "bad.json") << R"({"train": {"epochz": 3}})";
  r = amx_run({"features", "--config", (dir / "bad.json").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("train.epochz") != std::string::npos);

  std::ofstream(dir / "seeds.json") << R"({"seeds": {"classifier": 1}})";
  r = amx_run({"features", "--config", (dir / "seeds.json").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("seeds.separate_classifier") != std::string::npos);

  CHECK(amx_run({"features", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(amx_run({"features", "--out", (dir / "out").string(), "--set", "train.epochs=0"}).code == 2);
}

TEST_CASE("missing checkpoint exits 1 and names the path") {
  const auto dir = fresh_dir("missing");
  const auto out = dir / "out";
  const auto r = amx_run({"maximize", "--config", write_config(dir).string(), "--out", out.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find((out / "classifier.amx").string()) != std::string::npos);
}

TEST_CASE("missing dataset root is a runtime error") {
  const auto dir = fresh_dir("nodata");
  const auto r = amx_run({"features", "--out", (dir / "out").string(), "--data", (dir / "nope").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("nope") != std::string::npos);
}

TEST_CASE("config round trip and overrides") {
  const RunConfig defaults;
  const auto again = RunConfig::from_json(nlohmann::json::parse(defaults.to_json().dump()));
  CHECK(again.to_json() == defaults.to_json());
  CHECK(amx::cli::config_hash(again) == amx::cli::config_hash(defaults));

  auto j = nlohmann::json::parse(kConfig);
  const auto cfg = RunConfig::from_json(j);
  CHECK(cfg.synthetic.classes == 3);
  CHECK(cfg.classifier.seed == 1);
  CHECK(cfg.autoencoder.seed == 3);
  CHECK(cfg.direct.max_iters == 20);
  CHECK(cfg.direct.learning_rate == doctest::Approx(0.05));
  CHECK_FALSE(cfg.latent.clamp_inputs);
  CHECK(amx::cli::config_hash(cfg) != amx::cli::config_hash(defaults));

  j["maximize"]["direct"]["clamp_inputs"] = false;
  CHECK_THROWS_AS(RunConfig::from_json(j), amx::ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"train": {"epochs": "ten"}})")), amx::ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::array()), amx::ConfigError);
}

TEST_CASE("features writes the ingestion report and a manifest") {
  const auto dir = fresh_dir("features");
  const auto out = dir / "out";
  const auto r = amx_run({"features", "--config", write_config(dir).string(), "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(out / "ingestion.json"));
  CHECK(report["class_names"].size() == 3);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest-features.json"));
  CHECK(manifest["subcommand"] == "features");
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest["seeds"]["maximization"] == 4);
  CHECK(manifest["artifacts"] == nlohmann::json::array({"ingestion.json"}));
}

TEST_CASE("pipeline end to end on the synthetic fixture") {
  const auto dir = fresh_dir("pipeline");
  const auto config = write_config(dir);
  const auto a = dir / "a";

  const auto r = amx_run({"train-classifier", "--config", config.string(), "--out", a.string(), "--which", "original"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(a / "classifier.amx"));
  CHECK(fs::exists(a / "classifier_history.csv"));
  CHECK_FALSE(fs::exists(a / "separate.amx"));
  CHECK(slurp(a / "classifier_history.csv").starts_with("epoch,train_loss,val_loss,val_acc\n"));

  // Direct mode only needs the two classifiers; maximization runs on demand.
  REQUIRE(amx_run({"train-classifier", "--config", config.string(), "--out", a.string(), "--which", "separate"}).code == 0);
  const auto t = amx_run({"evaluate-transfer", "--config", config.string(), "--out", a.string(), "--mode", "direct"});
  INFO(t.err);
  REQUIRE(t.code == 0);
  CHECK(fs::exists(a / "transfer_direct.csv"));
  CHECK(fs::exists(a / "transfer_direct.svg"));
  CHECK(slurp(a / "transfer_direct.csv").starts_with("target,"));
  CHECK(slurp(a / "transfer_direct.svg").find("<svg") != std::string::npos);

  // Two full runs with one thread and with the default thread count.
  const auto b = dir / "b";
  const auto c = dir / "c";
  run_pipeline(config, b, "1");
  run_pipeline(config, c, "4");
  const auto files = listing(b);
  CHECK(files == listing(c));
  for (const char* name : {"embeddings.csv", "latent_shift.csv", "tsne_kl.csv", "transfer_latent.csv",
                           "maximize_latent.csv", "maximize_direct.f32", "autoencoder.amx"}) {
    CHECK(files.count(name) == 1);
  }
  std::size_t compared = 0;
  for (const auto& name : files) {
    if (name.starts_with("manifest-") || fs::is_directory(b / name)) continue;
    INFO(name);
    CHECK(slurp(b / name) == slurp(c / name));
    ++compared;
  }
  CHECK(compared > 20);

  // Nothing escapes the output directories.
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(dir)) top.insert(e.path().filename().string());
  CHECK(top == std::set<std::string>{"a", "b", "c", "c.json"});

  const auto manifest = nlohmann::json::parse(slurp(b / "manifest-report.json"));
  for (const auto& artifact : manifest["artifacts"]) CHECK(fs::exists(b / artifact.get<std::string>()));
}
