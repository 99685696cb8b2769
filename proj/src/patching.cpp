#include "lichw/patching.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "lichw/error.hpp"

namespace lichw {

Tensor tile_to_resolution(const Tensor& image, std::size_t width, std::size_t height) {
  const Dims d = image.dims();
  if (image.empty()) throw DimensionError("cannot tile an empty image");
  if (width == 0 || height == 0) throw DimensionError("target resolution must be positive");
  Tensor out(Dims{d.n, d.c, height, width});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t col = 0; col < width; ++col) {
          out.at(n, c, r, col) = image.at(n, c, r % d.h, col % d.w);
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> axis_origins(std::size_t length, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw ParameterError("patch size and stride must be positive");
  if (patch > length) {
    throw DimensionError("patch " + std::to_string(patch) + " exceeds image extent " + std::to_string(length));
  }
  std::vector<std::size_t> o;
  for (std::size_t p = 0; p + patch <= length; p += stride) o.push_back(p);
  if (o.back() + patch < length) o.push_back(length - patch);
  return o;
}

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch, std::size_t stride) {
  PatchGrid g{height, width, patch, stride, {}};
  const auto rows = axis_origins(height, patch, stride);
  const auto cols = axis_origins(width, patch, stride);
  for (std::size_t r : rows) {
    for (std::size_t c : cols) g.origins.push_back({r, c, r % stride != 0, c % stride != 0});
  }
  return g;
}

PatchSet extract_patches(const Tensor& image, std::size_t patch, std::size_t stride) {
  const Dims d = image.dims();
  PatchSet s{{}, make_patch_grid(d.h, d.w, patch, stride)};
  s.patches.reserve(s.grid.origins.size());
  for (const auto& o : s.grid.origins) {
    Tensor p(Dims{d.n, d.c, patch, patch});
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t r = 0; r < patch; ++r) {
          const float* src = &image.data()[image.offset(n, c, o.row + r, o.col)];
          std::copy(src, src + patch, &p.data()[p.offset(n, c, r, 0)]);
        }
      }
    }
    s.patches.push_back(std::move(p));
  }
  return s;
}

Tensor reassemble(std::span<const Tensor> patches, const PatchGrid& grid) {
  if (patches.size() != grid.origins.size()) {
    throw DimensionError("grid has " + std::to_string(grid.origins.size()) + " origins, got " +
                         std::to_string(patches.size()) + " patches");
  }
  if (patches.empty()) throw DimensionError("no patches to reassemble");
  const Dims pd = patches.front().dims();
  const std::size_t p = grid.patch;
  if (pd.h != p || pd.w != p) throw DimensionError("patch extents do not match the grid");
  for (const auto& t : patches) {
    if (t.dims() != pd) throw DimensionError("patches differ in extents");
  }
  std::vector<double> sum(pd.n * pd.c * grid.height * grid.width, 0.0);
  std::vector<std::uint32_t> count(grid.height * grid.width, 0);
  const std::size_t plane = grid.height * grid.width;
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const PatchOrigin& o = grid.origins[k];
    if (o.row + p > grid.height || o.col + p > grid.width) throw DimensionError("patch origin outside the image");
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) ++count[(o.row + r) * grid.width + o.col + c];
    }
    for (std::size_t nc = 0; nc < pd.n * pd.c; ++nc) {
      for (std::size_t r = 0; r < p; ++r) {
        const float* src = &patches[k].data()[(nc * p + r) * p];
        double* dst = &sum[nc * plane + (o.row + r) * grid.width + o.col];
        for (std::size_t c = 0; c < p; ++c) dst[c] += src[c];
      }
    }
  }
  Tensor out(Dims{pd.n, pd.c, grid.height, grid.width});
  for (std::size_t nc = 0; nc < pd.n * pd.c; ++nc) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (count[i] == 0) throw DimensionError("grid leaves pixels uncovered");
      out.data()[nc * plane + i] = static_cast<float>(sum[nc * plane + i] / count[i]);
    }
  }
  return out;
}

namespace {

std::size_t ppm_token(std::span<const std::uint8_t> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw MalformedHeaderError("PPM header is malformed");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > (1u << 24)) throw MalformedHeaderError("PPM header value too large");
  }
  return v;
}

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw MalformedHeaderError("not a binary PPM (P6)");
  std::size_t pos = 2;
  const std::size_t w = ppm_token(bytes, pos);
  const std::size_t h = ppm_token(bytes, pos);
  const std::size_t maxval = ppm_token(bytes, pos);
  if (w == 0 || h == 0) throw MalformedHeaderError("PPM has zero extent");
  if (maxval != 255) throw MalformedHeaderError("only 8-bit PPM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw MalformedHeaderError("PPM header is malformed");
  ++pos;
  if (bytes.size() - pos < w * h * 3) throw TruncatedError("PPM pixel data truncated");
  Tensor t(Dims{1, 3, h, w});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        t.at(0, ch, r, c) = static_cast<float>(bytes[pos + (r * w + c) * 3 + ch]) / 255.0f;
      }
    }
  }
  return t;
}

}  // namespace lichw
