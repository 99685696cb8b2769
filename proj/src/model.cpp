#include "lichw/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "lichw/error.hpp"
#include "lichw/gdn.hpp"

namespace lichw {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::conv, "conv"}, {LayerKind::deconv, "deconv"}, {LayerKind::gdn, "gdn"},
    {LayerKind::igdn, "igdn"}, {LayerKind::relu, "relu"}};

constexpr std::pair<ModelRole, std::string_view> kRoleNames[] = {
    {ModelRole::main_encoder, "main_encoder"},
    {ModelRole::main_decoder, "main_decoder"},
    {ModelRole::hyper_encoder, "hyper_encoder"},
    {ModelRole::hyper_decoder, "hyper_decoder"},
    {ModelRole::entropy_params, "entropy_params"}};

std::string layer_label(const LayerSpec& layer) {
  return std::string(to_string(layer.kind)) + " " + std::to_string(layer.in_channels) + "->" +
         std::to_string(layer.out_channels);
}

void check_input_channels(const Tensor& input, const LayerSpec& layer) {
  if (input.dims().c != layer.in_channels) {
    throw DimensionError(layer_label(layer) + ": input has " + std::to_string(input.dims().c) +
                         " channels, expected " + std::to_string(layer.in_channels));
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::string_view to_string(ModelRole role) {
  for (const auto& [r, name] : kRoleNames) {
    if (r == role) return name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view s) {
  for (const auto& [k, name] : kKindNames) {
    if (name == s) return k;
  }
  throw ParameterError("unknown layer kind '" + std::string(s) + "'");
}

ModelRole parse_model_role(std::string_view s) {
  for (const auto& [r, name] : kRoleNames) {
    if (name == s) return r;
  }
  throw ParameterError("unknown model role '" + std::string(s) + "'");
}

void LayerSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) {
    throw ParameterError(layer_label(*this) + ": channel counts must be positive");
  }
  if (is_conv_like()) {
    if (kernel == 0 || stride == 0) {
      throw ParameterError(layer_label(*this) + ": kernel and stride must be positive");
    }
    const std::size_t expected = out_channels * in_channels * kernel * kernel;
    if (weights.size() != expected) {
      throw DimensionError(layer_label(*this) + ": weight length " + std::to_string(weights.size()) +
                           ", expected " + std::to_string(expected));
    }
    if (bias.size() != out_channels) {
      throw DimensionError(layer_label(*this) + ": bias length " + std::to_string(bias.size()) +
                           ", expected " + std::to_string(out_channels));
    }
    if (gdn) throw ParameterError(layer_label(*this) + ": convolution carries gdn parameters");
    return;
  }
  if (in_channels != out_channels) {
    throw DimensionError(layer_label(*this) + ": channel-wise layer must keep the channel count");
  }
  if (!weights.empty() || !bias.empty()) {
    throw ParameterError(layer_label(*this) + ": channel-wise layer carries weights");
  }
  if (is_gdn_like()) {
    if (!gdn) throw ParameterError(layer_label(*this) + ": missing gdn parameters");
    if (gdn->channels() != in_channels) {
      throw DimensionError(layer_label(*this) + ": gdn parameters describe " +
                           std::to_string(gdn->channels()) + " channels");
    }
    gdn->validate();
  } else if (gdn) {
    throw ParameterError(layer_label(*this) + ": relu carries gdn parameters");
  }
}

Dims LayerSpec::output_dims(const Dims& in) const {
  if (in.c != in_channels) {
    throw DimensionError(layer_label(*this) + ": input has " + std::to_string(in.c) +
                         " channels, expected " + std::to_string(in_channels));
  }
  if (kind == LayerKind::conv) {
    const std::size_t ph = in.h + 2 * padding;
    const std::size_t pw = in.w + 2 * padding;
    if (ph < kernel || pw < kernel) {
      throw DimensionError(layer_label(*this) + ": padded input " + std::to_string(ph) + "x" +
                           std::to_string(pw) + " smaller than kernel " + std::to_string(kernel));
    }
    return {in.n, out_channels, (ph - kernel) / stride + 1, (pw - kernel) / stride + 1};
  }
  if (kind == LayerKind::deconv) {
    if (in.h == 0 || in.w == 0) throw DimensionError(layer_label(*this) + ": empty input");
    const std::size_t full_h = (in.h - 1) * stride + kernel;
    const std::size_t full_w = (in.w - 1) * stride + kernel;
    if (full_h <= 2 * padding || full_w <= 2 * padding) {
      throw DimensionError(layer_label(*this) + ": padding " + std::to_string(padding) +
                           " consumes the whole output");
    }
    return {in.n, out_channels, full_h - 2 * padding, full_w - 2 * padding};
  }
  return {in.n, out_channels, in.h, in.w};
}

std::size_t LayerSpec::parameter_count() const noexcept {
  if (gdn) return gdn->beta.size() + gdn->gamma.size();
  return weights.size() + bias.size();
}

LayerSpec LayerSpec::conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          std::size_t padding, std::vector<float> weights, std::vector<float> bias) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  l.validate();
  return l;
}

LayerSpec LayerSpec::deconv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, std::vector<float> weights, std::vector<float> bias) {
  LayerSpec l = conv(in, out, kernel, stride, padding, std::move(weights), std::move(bias));
  l.kind = LayerKind::deconv;
  return l;
}

LayerSpec LayerSpec::gdn_layer(GdnParams params, bool inverse) {
  LayerSpec l;
  l.kind = inverse ? LayerKind::igdn : LayerKind::gdn;
  l.in_channels = l.out_channels = params.channels();
  l.gdn = std::move(params);
  l.validate();
  return l;
}

LayerSpec LayerSpec::relu(std::size_t channels) {
  LayerSpec l;
  l.kind = LayerKind::relu;
  l.in_channels = l.out_channels = channels;
  l.validate();
  return l;
}

void ModelSpec::validate() const {
  if (!bit_widths.empty() && bit_widths.size() != layers.size()) {
    throw ParameterError("model '" + name + "': " + std::to_string(bit_widths.size()) +
                         " bit widths for " + std::to_string(layers.size()) + " layers");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      layers[i].validate();
    } catch (const Error& e) {
      throw LayerError(i, e.what());
    }
    if (i > 0 && layers[i - 1].out_channels != layers[i].in_channels) {
      throw LayerError(i, "expects " + std::to_string(layers[i].in_channels) +
                              " input channels but previous layer produces " +
                              std::to_string(layers[i - 1].out_channels));
    }
  }
}

int ModelSpec::bits_for(std::size_t layer) const {
  if (!bit_widths.empty()) return bit_widths.at(layer);
  return layers.at(layer).is_gdn_like() ? 32 : 8;
}

std::size_t ModelSpec::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.parameter_count();
  return total;
}

Tensor conv2d_forward(const Tensor& input, const LayerSpec& layer) {
  if (layer.kind != LayerKind::conv) throw LayerKindError(layer_label(layer) + ": not a conv layer");
  check_input_channels(input, layer);
  const Dims in = input.dims();
  const Dims out = layer.output_dims(in);
  const std::size_t k = layer.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(layer.padding);
  Tensor result(out);
  for (std::size_t n = 0; n < out.n; ++n) {
    for (std::size_t o = 0; o < out.c; ++o) {
      for (std::size_t y = 0; y < out.h; ++y) {
        for (std::size_t x = 0; x < out.w; ++x) {
          double acc = layer.bias[o];
          for (std::size_t i = 0; i < in.c; ++i) {
            const float* wk = &layer.weights[((o * in.c + i) * k) * k];
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * layer.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * layer.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
                acc += static_cast<double>(wk[ky * k + kx]) *
                       input.at(n, i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          result.at(n, o, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return result;
}

Tensor deconv2d_forward(const Tensor& input, const LayerSpec& layer) {
  if (layer.kind != LayerKind::deconv) {
    throw LayerKindError(layer_label(layer) + ": not a deconv layer");
  }
  check_input_channels(input, layer);
  const Dims in = input.dims();
  const Dims out = layer.output_dims(in);
  const std::size_t k = layer.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(layer.padding);
  std::vector<double> acc(out.count());
  for (std::size_t n = 0; n < out.n; ++n) {
    for (std::size_t o = 0; o < out.c; ++o) {
      double* plane = &acc[(n * out.c + o) * out.plane()];
      std::fill(plane, plane + out.plane(), static_cast<double>(layer.bias[o]));
      for (std::size_t i = 0; i < in.c; ++i) {
        const float* wk = &layer.weights[((o * in.c + i) * k) * k];
        for (std::size_t h = 0; h < in.h; ++h) {
          for (std::size_t w = 0; w < in.w; ++w) {
            const double v = input.at(n, i, h, w);
            if (v == 0.0) continue;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(h * layer.stride + ky) - pad;
              if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(out.h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(w * layer.stride + kx) - pad;
                if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(out.w)) continue;
                plane[static_cast<std::size_t>(oy) * out.w + static_cast<std::size_t>(ox)] +=
                    v * wk[ky * k + kx];
              }
            }
          }
        }
      }
    }
  }
  std::vector<float> data(acc.size());
  std::transform(acc.begin(), acc.end(), data.begin(), [](double v) { return static_cast<float>(v); });
  return Tensor(out, std::move(data));
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = std::max(v, 0.0f);
  return out;
}

Tensor layer_forward(const Tensor& input, const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::conv:
      return conv2d_forward(input, layer);
    case LayerKind::deconv:
      return deconv2d_forward(input, layer);
    case LayerKind::gdn:
      check_input_channels(input, layer);
      return gdn_float(input, *layer.gdn);
    case LayerKind::igdn:
      check_input_channels(input, layer);
      return igdn_float(input, *layer.gdn);
    case LayerKind::relu:
      check_input_channels(input, layer);
      return relu_forward(input);
  }
  throw LayerKindError("unhandled layer kind");
}

ForwardResult model_forward(const ModelSpec& model, const Tensor& input, bool record) {
  ForwardResult result;
  result.output = input;
  if (record) result.activations.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    try {
      result.output = layer_forward(result.output, model.layers[i]);
    } catch (const LayerError&) {
      throw;
    } catch (const Error& e) {
      throw LayerError(i, e.what());
    }
    if (record) result.activations.push_back(result.output);
  }
  return result;
}

std::uint64_t layer_flops(const LayerSpec& layer, const Dims& in) {
  const Dims out = layer.output_dims(in);
  switch (layer.kind) {
    case LayerKind::conv:
    case LayerKind::deconv:
      return 2ull * out.n * out.h * out.w * layer.in_channels * layer.out_channels * layer.kernel *
             layer.kernel;
    case LayerKind::gdn:
    case LayerKind::igdn: {
      const std::uint64_t hw = static_cast<std::uint64_t>(out.n) * out.h * out.w;
      const std::uint64_t c = out.c;
      return 2 * hw * c * c + 5 * hw * c;
    }
    case LayerKind::relu:
      return static_cast<std::uint64_t>(out.n) * out.h * out.w * out.c;
  }
  return 0;
}

FlopsReport flops_of(const ModelSpec& model, const Dims& input) {
  FlopsReport report;
  Dims cur = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    try {
      const std::uint64_t f = layer_flops(model.layers[i], cur);
      report.per_layer.push_back(f);
      report.total += f;
      cur = model.layers[i].output_dims(cur);
    } catch (const Error& e) {
      throw LayerError(i, e.what());
    }
  }
  return report;
}

}  // namespace lichw
