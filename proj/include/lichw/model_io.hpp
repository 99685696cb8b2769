#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lichw/model.hpp"
#include "lichw/tensor.hpp"

namespace lichw {

using Bytes = std::vector<std::uint8_t>;

/// Container version written by save_model; load_model rejects anything else.
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Model container: "LICM", u32 version, u64 header length, JSON header, then
/// one u64-length-prefixed little-endian payload per stored array, in layer order.
Bytes save_model(const ModelSpec& model);
ModelSpec load_model(std::span<const std::uint8_t> bytes);

/// Tensor file: four u32 extents (n, c, h, w) followed by float32 data, all little-endian.
Bytes save_tensor(const Tensor& tensor);
Tensor load_tensor(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace lichw
