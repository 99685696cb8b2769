#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lichw/fixed_point.hpp"
#include "lichw/gdn_params.hpp"
#include "lichw/tensor.hpp"

namespace lichw {

/// y_i = x_i / (beta_i + sum_j gamma_ij x_j^2)^alpha at every spatial position.
Tensor gdn_float(const Tensor& x, const GdnParams& params);
/// x_i = y_i * (beta_i + sum_j gamma_ij y_j^2)^alpha.
Tensor igdn_float(const Tensor& y, const GdnParams& params);

/// Stage boundaries of the fixed-point pipeline, in evaluation order.
enum class GdnStage : std::size_t { input, square, mac, add_beta, sqrt, reciprocal, output };
inline constexpr std::size_t kGdnStageCount = 7;
std::string_view to_string(GdnStage stage);

/// Formats at each stage boundary of the fixed-point (i)GDN pipeline.
struct GdnStageFormats {
  FixedPointFormat input;
  FixedPointFormat square;
  FixedPointFormat gamma;
  FixedPointFormat accumulator;  // MAC result, beta, and the sqrt argument
  FixedPointFormat sqrt;
  FixedPointFormat reciprocal;
  FixedPointFormat output;
  FixedPointFormat lut;
  int lut_segments = 64;

  void validate() const;

  /// Every stage at `bits` width with integer headroom sized for inputs in
  /// [-16, 16) and denominators below 1024. The LUT keeps at most 24 fraction bits.
  static GdnStageFormats uniform(int bits);
};

/// Raw integer tensor sharing one fixed-point format.
struct FixedTensor {
  Dims dims;
  std::vector<std::int64_t> raw;
  FixedPointFormat format;

  static FixedTensor quantize(const Tensor& t, const FixedPointFormat& fmt, std::uint64_t* overflows = nullptr);
  Tensor dequantize() const;
  /// Same values expressed in `fmt`.
  FixedTensor convert(const FixedPointFormat& fmt, std::uint64_t* overflows = nullptr) const;
};

/// Saturation events per stage boundary.
struct SaturationCounts {
  std::array<std::uint64_t, kGdnStageCount> per_stage{};

  std::uint64_t& operator[](GdnStage s) { return per_stage[static_cast<std::size_t>(s)]; }
  std::uint64_t operator[](GdnStage s) const { return per_stage[static_cast<std::size_t>(s)]; }
  std::uint64_t total() const noexcept;
  SaturationCounts& operator+=(const SaturationCounts& other);
};

/// Raw stage values for one pixel, one entry per channel.
struct PixelTrace {
  std::vector<std::int64_t> square;
  std::vector<std::int64_t> mac;
  std::vector<std::int64_t> denominator;  // after adding beta
  std::vector<std::int64_t> root;
  std::vector<std::int64_t> reciprocal;   // empty for the inverse transform
  std::vector<std::int64_t> output;
};

/// Quantized parameters plus the sqrt LUT for one GDN layer.
///
/// gamma rounds to the gamma format; beta is rounded *up* into the
/// accumulator format and never below one LSB, so every denominator stays
/// strictly positive. Only alpha = 0.5 is supported.
class GdnFixedKernel {
 public:
  GdnFixedKernel(const GdnParams& params, GdnStageFormats formats);

  std::size_t channels() const noexcept { return channels_; }
  const GdnStageFormats& formats() const noexcept { return formats_; }
  const SqrtLut& lut() const noexcept { return lut_; }
  std::span<const std::int64_t> beta_raw() const noexcept { return beta_; }
  std::span<const std::int64_t> gamma_raw() const noexcept { return gamma_; }
  /// Saturations while quantizing the parameters themselves.
  std::uint64_t parameter_overflows() const noexcept { return param_overflows_; }

  /// Runs one pixel; `x_raw` holds one value per channel in formats().input.
  PixelTrace trace_pixel(std::span<const std::int64_t> x_raw, bool inverse,
                         SaturationCounts* sat = nullptr) const;

 private:
  std::size_t channels_;
  GdnStageFormats formats_;
  SqrtLut lut_;
  std::vector<std::int64_t> beta_;
  std::vector<std::int64_t> gamma_;
  std::uint64_t param_overflows_ = 0;
};

/// Fixed-point GDN. Inputs in another format are first requantized to the
/// kernel's input format. Saturation is never an error; it is tallied in `sat`.
FixedTensor gdn_fixed(const FixedTensor& x, const GdnFixedKernel& kernel, SaturationCounts* sat = nullptr);
FixedTensor igdn_fixed(const FixedTensor& y, const GdnFixedKernel& kernel, SaturationCounts* sat = nullptr);

struct GdnErrorReport {
  std::size_t elements = 0;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  std::uint64_t saturation_count = 0;
  SaturationCounts saturations;
  /// Max |fixed - float| of each stage's intermediate against its float counterpart.
  std::array<double, kGdnStageCount> stage_max_error{};
};

/// Compares the fixed pipeline against the float reference over `corpus`.
GdnErrorReport gdn_error_report(const GdnFixedKernel& kernel, const GdnParams& params, const Tensor& corpus,
                                bool inverse = false);
GdnErrorReport gdn_error_report(const GdnParams& params, const GdnStageFormats& formats, const Tensor& corpus,
                                bool inverse = false);

}  // namespace lichw
