#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lichw/model.hpp"
#include "lichw/tensor.hpp"

namespace testing {

inline std::vector<float> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(u(rng));
  return v;
}

inline lichw::Tensor random_tensor(lichw::Dims d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return lichw::Tensor(d, random_values(d.count(), rng, lo, hi));
}

inline lichw::LayerSpec random_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                                    std::size_t pad, std::mt19937_64& rng) {
  return lichw::LayerSpec::conv(in, out, k, stride, pad, random_values(out * in * k * k, rng),
                                random_values(out, rng));
}

inline lichw::LayerSpec random_deconv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                                      std::size_t pad, std::mt19937_64& rng) {
  return lichw::LayerSpec::deconv(in, out, k, stride, pad, random_values(out * in * k * k, rng),
                                  random_values(out, rng));
}

}  // namespace testing
