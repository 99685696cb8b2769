#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lichw/gdn_params.hpp"
#include "lichw/tensor.hpp"

namespace lichw {

enum class LayerKind { conv, deconv, gdn, igdn, relu };

enum class ModelRole { main_encoder, main_decoder, hyper_encoder, hyper_decoder, entropy_params };

std::string_view to_string(LayerKind kind);
std::string_view to_string(ModelRole role);
LayerKind parse_layer_kind(std::string_view s);
ModelRole parse_model_role(std::string_view s);

/// One layer of a model. Convolution weights are (out, in, K, K) for both conv and deconv.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<float> weights;
  std::vector<float> bias;
  std::optional<GdnParams> gdn;

  bool is_conv_like() const noexcept { return kind == LayerKind::conv || kind == LayerKind::deconv; }
  bool is_gdn_like() const noexcept { return kind == LayerKind::gdn || kind == LayerKind::igdn; }

  /// Throws ParameterError/DimensionError when the layer's invariants are broken.
  void validate() const;

  /// Output extents for an input of `in`; throws DimensionError when incompatible.
  Dims output_dims(const Dims& in) const;

  /// Number of stored parameters (weights + bias, or beta + gamma).
  std::size_t parameter_count() const noexcept;

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                        std::size_t padding, std::vector<float> weights, std::vector<float> bias);
  static LayerSpec deconv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          std::size_t padding, std::vector<float> weights, std::vector<float> bias);
  static LayerSpec gdn_layer(GdnParams params, bool inverse = false);
  static LayerSpec relu(std::size_t channels);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  std::string name;
  ModelRole role = ModelRole::main_encoder;
  std::vector<LayerSpec> layers;
  /// Per-layer precision in bits. Empty means 8 everywhere except 32 for GDN layers.
  std::vector<int> bit_widths;

  /// Validates every layer plus channel compatibility between neighbours.
  void validate() const;
  int bits_for(std::size_t layer) const;
  std::size_t parameter_count() const noexcept;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

Tensor conv2d_forward(const Tensor& input, const LayerSpec& layer);
Tensor deconv2d_forward(const Tensor& input, const LayerSpec& layer);
Tensor relu_forward(const Tensor& input);

/// Dispatches on layer.kind.
Tensor layer_forward(const Tensor& input, const LayerSpec& layer);

struct ForwardResult {
  Tensor output;
  /// One entry per layer (the layer's output) when recording was requested.
  std::vector<Tensor> activations;
};

/// Applies the layers in order. Failures are rethrown as LayerError carrying the index.
ForwardResult model_forward(const ModelSpec& model, const Tensor& input, bool record = false);

/// Operation counts (1 MAC = 2 ops), per layer and in total.
struct FlopsReport {
  std::vector<std::uint64_t> per_layer;
  std::uint64_t total = 0;
};

std::uint64_t layer_flops(const LayerSpec& layer, const Dims& in);
FlopsReport flops_of(const ModelSpec& model, const Dims& input);

}  // namespace lichw
