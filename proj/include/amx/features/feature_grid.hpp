#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace amx {

// Normalized log-mel spectrogram: 80 mel rows x 64 frame columns, row-major,
// values in [0, 1]. This is the classifier's input space.
class FeatureGrid {
 public:
  static constexpr std::size_t kMels = 80;
  static constexpr std::size_t kFrames = 64;
  static constexpr std::size_t kSize = kMels * kFrames;

  // All zeros (digital silence).
  FeatureGrid() : values_(kSize, 0.0f) {}
  // Throws DimensionError on wrong size, ContractError on values outside [0, 1].
  explicit FeatureGrid(std::vector<float> values);

  float at(std::size_t mel, std::size_t frame) const { return values_[mel * kFrames + frame]; }
  std::span<const float> values() const { return values_; }
  const std::vector<float>& data() const { return values_; }

  bool operator==(const FeatureGrid&) const = default;

 private:
  std::vector<float> values_;
};

// Projects an arbitrary value onto the feature range: clamps to [0, 1] and
// flushes magnitudes below 2^-24 to zero. Every non-zero feature therefore
// has a binary exponent in [-24, 0], which makes differences of two features
// exact in double precision.
float to_feature_range(double v);

}  // namespace amx
