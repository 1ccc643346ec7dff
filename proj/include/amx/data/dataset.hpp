#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "amx/features/feature_grid.hpp"

namespace amx {

struct LabeledExample {
  FeatureGrid features;
  std::size_t label = 0;
  std::string speaker_id;
  std::string path;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> val;
  std::vector<LabeledExample> test;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
};

enum class SplitKind { kTrain, kVal, kTest };

const char* split_name(SplitKind kind);

// 64-bit FNV-1a over the bytes of s.
std::uint64_t fnv1a64(std::string_view s);

// bucket = fnv1a64(speaker_id) % 100; [0, val) -> val, [val, val+test) ->
// test, otherwise train. Requires val_pct + test_pct < 100.
SplitKind assign_split(std::string_view speaker_id, int val_pct = 10, int test_pct = 10);

struct ScanOptions {
  // Empty keeps every class directory.
  std::vector<std::string> class_filter;
  // 0 = unlimited; otherwise the first N files of each class in name order.
  std::size_t max_per_class = 0;
  int val_pct = 10;
  int test_pct = 10;
};

struct IngestionReport {
  std::vector<std::string> class_names;
  // counts[class][split]
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::vector<std::string> skipped;

  std::string to_json() const;
};

struct ScanResult {
  DatasetSplit split;
  IngestionReport report;
};

// Speaker id parsed from `<speaker>_nohash_<n>.wav`; empty when the name does
// not follow the convention.
std::string parse_speaker_id(std::string_view filename);

// Expects one subdirectory per class; directories starting with '_' (such as
// _background_noise_) are ignored. Classes are indexed in lexicographic
// order. Feature extraction runs file-parallel.
ScanResult scan_corpus(const std::filesystem::path& root, const ScanOptions& options = {});

struct SynthOptions {
  double noise_sigma = 0.05;
  double band_amplitude = 0.8;
  double band_width_rows = 2.0;
  int val_pct = 10;
  int test_pct = 10;
};

// Mel row on which class c's band is centred.
double synth_band_center(std::size_t c, std::size_t num_classes);

// Class c is a Gaussian-blurred horizontal band centred at synth_band_center
// plus seeded Gaussian noise, clamped to [0, 1]. Every example gets its own
// speaker id, so the speaker-hash split applies unchanged.
DatasetSplit synth_dataset(std::size_t num_classes, std::size_t per_class, std::uint64_t seed,
                           const SynthOptions& options = {});

// Index batches of one epoch: seeded Fisher-Yates shuffle (stream derived
// from seed and epoch), consecutive chunks, final short batch kept.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed, std::size_t epoch = 0);

}  // namespace amx
