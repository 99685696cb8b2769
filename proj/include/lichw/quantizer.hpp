#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lichw/model.hpp"
#include "lichw/model_io.hpp"
#include "lichw/tensor.hpp"

namespace lichw {

struct MinMax {
  float min = 0.0f;
  float max = 0.0f;

  static MinMax of(std::span<const float> values);
  MinMax merged(const MinMax& other) const noexcept;
  friend bool operator==(const MinMax&, const MinMax&) = default;
};

/// Observed ranges per layer. For GDN layers `weights` tracks gamma and `bias` tracks beta.
struct LayerStats {
  std::optional<MinMax> weights;
  std::optional<MinMax> bias;
  MinMax activation;  // the layer's output
  friend bool operator==(const LayerStats&, const LayerStats&) = default;
};

struct CalibrationStats {
  MinMax input;
  std::vector<LayerStats> layers;

  /// Elementwise min/max merge; both sides must describe the same number of layers.
  CalibrationStats merged(const CalibrationStats& other) const;
  friend bool operator==(const CalibrationStats&, const CalibrationStats&) = default;
};

/// Runs every calibration input through the float model and records ranges.
CalibrationStats calibrate(const ModelSpec& model, std::span<const Tensor> calibration_set);

struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  int bits = 8;
  /// Set when the observed range was empty and the scale fell back to 2^-24.
  bool degenerate = false;

  std::int64_t qmax() const noexcept { return (std::int64_t{1} << (bits - 1)) - 1; }
  void validate() const;
  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

inline constexpr double kDegenerateScale = 0x1p-24;

QuantParams quant_params_from_stats(const MinMax& range, int bits);

struct QuantizedTensor {
  std::vector<std::int32_t> values;
  QuantParams params;
  std::uint64_t saturations = 0;
};

QuantizedTensor quantize(std::span<const float> x, const QuantParams& p);
std::int32_t quantize_value(double x, const QuantParams& p, std::uint64_t* saturations = nullptr);
std::vector<float> dequantize(std::span<const std::int32_t> q, const QuantParams& p);
Tensor quantize_dequantize(const Tensor& x, const QuantParams& p);

/// Bit-width resolution: per-layer override, then gdn_bits for (i)GDN, then default_bits.
struct PrecisionPolicy {
  int default_bits = 8;
  int gdn_bits = 32;
  std::map<std::size_t, int> overrides;

  int bits_for(const ModelSpec& model, std::size_t layer) const;
  void validate() const;
  static PrecisionPolicy uniform(int bits) { return {bits, bits, {}}; }
};

struct QuantizedLayer {
  int bits = 8;
  std::optional<QuantizedTensor> weights;  // gamma for GDN layers
  std::optional<QuantizedTensor> bias;     // beta for GDN layers
  QuantParams activation;
};

/// Integer model. `spec` keeps the structure only; its float arrays are empty.
struct QuantizedModel {
  ModelSpec spec;
  QuantParams input;
  std::vector<QuantizedLayer> layers;
};

/// Post-training quantization. GDN beta never quantizes below one step so
/// the denominator stays positive.
QuantizedModel ptq(const ModelSpec& model, const CalibrationStats& stats, const PrecisionPolicy& policy);

/// Float model carrying q * scale in every weight, bias, gamma and beta.
ModelSpec dequantize_model(const QuantizedModel& qm);

/// Forward pass with quantize-dequantize on the input, every parameter tensor and every layer output.
Tensor fake_quant_forward(const ModelSpec& model, const CalibrationStats& stats, const PrecisionPolicy& policy,
                          const Tensor& input);

/// Straight-through gradient: upstream where |x / scale| < qmax, zero where the clamp is active.
Tensor ste_grad(const Tensor& upstream, const Tensor& x, const QuantParams& p);

struct QuantReportRow {
  std::size_t layer = 0;
  std::string role;  // input, weights, bias, activation
  int bits = 8;
  double scale = 0.0;
  std::uint64_t saturation_count = 0;
};

std::vector<QuantReportRow> quant_report(const QuantizedModel& qm);
/// CSV with header layer,role,bits,scale,saturation_count.
std::string quant_report_csv(const QuantizedModel& qm);

Bytes save_quantized_model(const QuantizedModel& qm);
QuantizedModel load_quantized_model(std::span<const std::uint8_t> bytes);

}  // namespace lichw
