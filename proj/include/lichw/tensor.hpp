#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lichw {

/// Extents of a dense NCHW array.
struct Dims {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  std::string str() const;
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Dense 4-D float array, row-major in (n, c, h, w) order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, float fill = 0.0f);
  /// Takes ownership of `data`; throws DimensionError when its length is not dims.count().
  Tensor(Dims dims, std::vector<float> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * dims_.c + c) * dims_.h + h) * dims_.w + w;
  }
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[offset(n, c, h, w)];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[offset(n, c, h, w)];
  }

  /// True when every element is finite.
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Dims dims_{};
  std::vector<float> data_;
};

}  // namespace lichw
