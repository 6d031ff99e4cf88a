#include "tia/tensor.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

namespace tia {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace tia

namespace tia::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (numel(shape) != values.size()) {
    throw InvalidArgument("tensor: shape " + shape_str(shape) + " expects " +
                          std::to_string(numel(shape)) + " values, got " +
                          std::to_string(values.size()));
  }
}

Tensor Tensor::zeros(Shape s) {
  std::size_t n = numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

double Tensor::item() const {
  if (values.size() != 1) {
    throw InvalidArgument("item(): tensor " + shape_str(shape) +
                          " is not a scalar");
  }
  return values[0];
}

}  // namespace tia::ad
