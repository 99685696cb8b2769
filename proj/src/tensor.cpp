#include "lichw/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lichw/error.hpp"

namespace lichw {

std::string Dims::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Dims dims, float fill) : dims_(dims), data_(dims.count(), fill) {}

Tensor::Tensor(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims_.count()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match extents " + dims_.str());
  }
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace lichw
