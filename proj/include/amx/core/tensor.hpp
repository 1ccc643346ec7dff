#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "amx/error.hpp"

namespace amx {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array. grad is empty until a backward pass populates it.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  bool requires_grad = false;
  std::vector<T> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> v, bool needs_grad = false)
      : shape(std::move(s)), values(std::move(v)), requires_grad(needs_grad) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_to_string(shape));
    }
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_to_string(shape) + " holds " +
                           std::to_string(shape_size(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
  }

  static Tensor zeros(Shape s, bool needs_grad = false) {
    const auto n = shape_size(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)), needs_grad);
  }

  std::size_t size() const { return values.size(); }
};

}  // namespace amx
