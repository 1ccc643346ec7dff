#include "amx/features/feature_grid.hpp"

#include <algorithm>

#include "amx/error.hpp"

namespace amx {

FeatureGrid::FeatureGrid(std::vector<float> values) : values_(std::move(values)) {
  if (values_.size() != kSize) {
    throw DimensionError("feature grid: expected " + std::to_string(kSize) + " values, got " +
                         std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0f && values_[i] <= 1.0f)) {
      throw ContractError("feature grid: value " + std::to_string(values_[i]) +
                          " outside [0, 1] at index " + std::to_string(i));
    }
  }
}

float to_feature_range(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  if (c < 0x1.0p-24) return 0.0f;
  return static_cast<float>(c);
}

}  // namespace amx
