#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amx/actmax/actmax.hpp"
#include "amx/eval/eval.hpp"
#include "amx/train/train.hpp"

namespace amx::cli {

struct Seeds {
  std::uint64_t classifier = 1;
  std::uint64_t separate_classifier = 2;
  std::uint64_t autoencoder = 3;
  std::uint64_t maximization = 4;
};

struct SyntheticSpec {
  std::size_t classes = 5;
  std::size_t per_class = 200;
  std::uint64_t seed = 42;
};

struct RunConfig {
  // Empty root selects the synthetic fixture.
  std::filesystem::path data_root;
  std::vector<std::string> classes;
  std::size_t max_per_class = 0;
  int val_pct = 10;
  int test_pct = 10;
  SyntheticSpec synthetic;

  TrainConfig classifier;
  TrainConfig autoencoder;

  MaxConfig direct = MaxConfig::direct_defaults();
  MaxConfig latent = MaxConfig::latent_defaults();
  std::size_t runs_per_class = 1000;
  // Full per-run artifacts (json + grid csv) for the first N runs of each class.
  std::size_t save_examples = 1;

  TsneConfig tsne;
  // 0 embeds the whole test split; otherwise evenly spaced examples.
  std::size_t embed_max_examples = 0;

  std::filesystem::path output_dir = "amx-out";
  Seeds seeds;

  nlohmann::ordered_json to_json() const;
  // Applies `j` on top of the defaults. Unknown keys, wrong types and
  // incomplete seed sets raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
};

// FNV-1a of the canonical JSON dump.
std::uint64_t config_hash(const RunConfig& cfg);

// argv[0] is the program name. Returns 0 on success, 1 on runtime and data
// errors, 2 on usage and configuration errors.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace amx::cli
