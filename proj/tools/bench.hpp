#pragma once

#include <cstddef>
#include <cstdint>

#include "lichw/gdn_params.hpp"
#include "lichw/tensor.hpp"

namespace lichw::cli {

/// Seeded GDN parameters: beta uniform in [0.1, 1], gamma uniform in [0, 0.1].
GdnParams random_gdn_params(std::size_t channels, std::uint64_t seed);

/// Seeded (1, channels, h, w) corpus uniform in [-range, range].
Tensor random_corpus(std::size_t channels, std::size_t h, std::size_t w, double range, std::uint64_t seed);

}  // namespace lichw::cli
