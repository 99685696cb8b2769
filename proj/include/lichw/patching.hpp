#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lichw/tensor.hpp"

namespace lichw {

/// Repeats the image along both axes and crops to height x width.
Tensor tile_to_resolution(const Tensor& image, std::size_t width = 1280, std::size_t height = 720);

struct PatchOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  /// Set on the extra border patch pulled back so it ends at the image edge.
  bool clamped_row = false;
  bool clamped_col = false;
};

struct PatchGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch = 256;
  std::size_t stride = 56;
  std::vector<PatchOrigin> origins;  // row-major
};

/// Origins along one axis: multiples of stride that fit, plus length - patch when the border is not reached.
std::vector<std::size_t> axis_origins(std::size_t length, std::size_t patch, std::size_t stride);

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch = 256, std::size_t stride = 56);

struct PatchSet {
  std::vector<Tensor> patches;  // each (n, c, patch, patch)
  PatchGrid grid;
};

PatchSet extract_patches(const Tensor& image, std::size_t patch = 256, std::size_t stride = 56);

/// Each output pixel is the mean of every patch value covering it.
Tensor reassemble(std::span<const Tensor> patches, const PatchGrid& grid);

/// Binary PPM (P6, maxval 255) as a (1, 3, h, w) tensor scaled to [0, 1].
Tensor decode_ppm(std::span<const std::uint8_t> bytes);

}  // namespace lichw
