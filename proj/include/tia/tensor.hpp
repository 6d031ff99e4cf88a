#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "tia/common.hpp"

namespace tia::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit floats. `node >= 0` ties the tensor to a
/// record on its owning tape; plain value carriers have node == -1.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  int node = -1;
  std::uint32_t tape_id = 0;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(Shape s);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  /// Value of a scalar (numel == 1) tensor.
  double item() const;
};

}  // namespace tia::ad
