#include "amx/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include <nlohmann/json.hpp>

#include <spdlog/spdlog.h>

#include "amx/error.hpp"
#include "amx/features/spectral.hpp"
#include "amx/rng.hpp"

namespace amx {

namespace fs = std::filesystem;

const char* split_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::kTrain: return "train";
    case SplitKind::kVal: return "val";
    case SplitKind::kTest: return "test";
  }
  return "?";
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

SplitKind assign_split(std::string_view speaker_id, int val_pct, int test_pct) {
  if (val_pct < 0 || test_pct < 0 || val_pct + test_pct >= 100) {
    throw ConfigError("assign_split: percentages must be non-negative and sum below 100");
  }
  const auto bucket = static_cast<int>(fnv1a64(speaker_id) % 100);
  if (bucket < val_pct) return SplitKind::kVal;
  if (bucket < val_pct + test_pct) return SplitKind::kTest;
  return SplitKind::kTrain;
}

std::string parse_speaker_id(std::string_view filename) {
  constexpr std::string_view marker = "_nohash_";
  if (filename.size() < 4 || filename.substr(filename.size() - 4) != ".wav") return {};
  const auto pos = filename.find(marker);
  if (pos == std::string_view::npos || pos == 0) return {};
  const auto digits = filename.substr(pos + marker.size(),
                                      filename.size() - 4 - (pos + marker.size()));
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                     [](char c) { return c >= '0' && c <= '9'; })) {
    return {};
  }
  return std::string(filename.substr(0, pos));
}

std::string IngestionReport::to_json() const {
  nlohmann::ordered_json j;
  j["class_names"] = class_names;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  std::map<std::string, std::size_t> totals;
  for (const auto& name : class_names) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (const char* s : {"train", "val", "test"}) {
      const auto it = counts.find(name);
      const std::size_t n = it == counts.end() || !it->second.count(s) ? 0 : it->second.at(s);
      row[s] = n;
      totals[s] += n;
    }
    per_class[name] = row;
  }
  j["counts"] = per_class;
  j["totals"] = {{"train", totals["train"]}, {"val", totals["val"]}, {"test", totals["test"]}};
  j["skipped"] = skipped;
  return j.dump(2);
}

ScanResult scan_corpus(const fs::path& root, const ScanOptions& options) {
  if (!fs::is_directory(root)) throw IngestionError("corpus root is not a directory: " + root.string());
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    if (name.empty() || name[0] == '_' || name[0] == '.') continue;
    if (!options.class_filter.empty() &&
        std::find(options.class_filter.begin(), options.class_filter.end(), name) ==
            options.class_filter.end()) {
      continue;
    }
    classes.push_back(name);
  }
  std::sort(classes.begin(), classes.end());
  for (const auto& wanted : options.class_filter) {
    if (std::find(classes.begin(), classes.end(), wanted) == classes.end()) {
      throw IngestionError("class directory not found: " + (root / wanted).string());
    }
  }
  if (classes.empty()) throw IngestionError("no class directories under " + root.string());

  struct Pending {
    fs::path path;
    std::size_t label;
    std::string speaker;
  };
  std::vector<Pending> pending;
  ScanResult result;
  result.report.class_names = classes;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / classes[c])) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t taken = 0;
    for (const auto& f : files) {
      if (options.max_per_class && taken >= options.max_per_class) break;
      auto speaker = parse_speaker_id(f.filename().string());
      if (speaker.empty()) {
        spdlog::warn("skipping {}: name does not match <speaker>_nohash_<n>.wav", f.string());
        result.report.skipped.push_back(f.string());
        continue;
      }
      pending.push_back({f, c, std::move(speaker)});
      ++taken;
    }
    if (taken == 0) throw IngestionError("empty class directory: " + (root / classes[c]).string());
  }

  std::vector<FeatureGrid> grids(pending.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(pending.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      grids[i] = log_mel(load_wav(pending[i].path));
    } catch (...) {
#pragma omp critical(amx_scan_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < pending.size(); ++i) {
    LabeledExample ex{std::move(grids[i]), pending[i].label, pending[i].speaker,
                      pending[i].path.string()};
    const auto kind = assign_split(ex.speaker_id, options.val_pct, options.test_pct);
    ++result.report.counts[classes[ex.label]][split_name(kind)];
    switch (kind) {
      case SplitKind::kTrain: result.split.train.push_back(std::move(ex)); break;
      case SplitKind::kVal: result.split.val.push_back(std::move(ex)); break;
      case SplitKind::kTest: result.split.test.push_back(std::move(ex)); break;
    }
  }
  result.split.class_names = std::move(classes);
  return result;
}

double synth_band_center(std::size_t c, std::size_t num_classes) {
  return double(c + 1) * double(FeatureGrid::kMels) / double(num_classes + 1);
}

DatasetSplit synth_dataset(std::size_t num_classes, std::size_t per_class, std::uint64_t seed,
                           const SynthOptions& options) {
  if (num_classes < 2) throw ConfigError("synth_dataset: need at least 2 classes");
  DatasetSplit split;
  for (std::size_t c = 0; c < num_classes; ++c) split.class_names.push_back("band" + std::to_string(c));

  for (std::size_t c = 0; c < num_classes; ++c) {
    const double center = synth_band_center(c, num_classes);
    std::vector<double> profile(FeatureGrid::kMels);
    for (std::size_t r = 0; r < FeatureGrid::kMels; ++r) {
      const double d = (double(r) - center) / options.band_width_rows;
      profile[r] = options.band_amplitude * std::exp(-0.5 * d * d);
    }
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(mix_seed(seed, c * 1000003ull + i));
      std::vector<float> v(FeatureGrid::kSize);
      for (std::size_t r = 0; r < FeatureGrid::kMels; ++r) {
        for (std::size_t t = 0; t < FeatureGrid::kFrames; ++t) {
          const double noise = options.noise_sigma > 0 ? options.noise_sigma * rng.normal() : 0.0;
          v[r * FeatureGrid::kFrames + t] = to_feature_range(profile[r] + noise);
        }
      }
      LabeledExample ex{FeatureGrid(std::move(v)), c,
                        "synth" + std::to_string(c) + "x" + std::to_string(i),
                        "synthetic://" + split.class_names[c] + "/" + std::to_string(i)};
      switch (assign_split(ex.speaker_id, options.val_pct, options.test_pct)) {
        case SplitKind::kTrain: split.train.push_back(std::move(ex)); break;
        case SplitKind::kVal: split.val.push_back(std::move(ex)); break;
        case SplitKind::kTest: split.test.push_back(std::move(ex)); break;
      }
    }
  }
  return split;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed, std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_iter: batch_size must be at least 1");
  if (count == 0) throw IterationError("batch_iter: empty split");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(shuffle_seed, epoch));
  for (std::size_t i = count - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < count; b += batch_size) {
    batches.emplace_back(order.begin() + b, order.begin() + std::min(count, b + batch_size));
  }
  return batches;
}

}  // namespace amx
