#include "lichw/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "container.hpp"
#include "lichw/error.hpp"

namespace lichw {

MinMax MinMax::of(std::span<const float> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

MinMax MinMax::merged(const MinMax& other) const noexcept {
  return {std::min(min, other.min), std::max(max, other.max)};
}

namespace {

std::optional<MinMax> merge_opt(const std::optional<MinMax>& a, const std::optional<MinMax>& b) {
  if (!a) return b;
  if (!b) return a;
  return a->merged(*b);
}

void require_bits(int bits) {
  if (bits != 8 && bits != 16 && bits != 32) {
    throw ParameterError("bit width must be 8, 16 or 32, got " + std::to_string(bits));
  }
}

std::string layer_label(const ModelSpec& model, std::size_t i) {
  return "layer " + std::to_string(i) + " (" + std::string(to_string(model.layers[i].kind)) + ")";
}

void check_coverage(const ModelSpec& model, const CalibrationStats& stats) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (i >= stats.layers.size()) {
      throw CalibrationError("no calibration stats for " + layer_label(model, i));
    }
    const LayerSpec& l = model.layers[i];
    const LayerStats& s = stats.layers[i];
    if ((l.is_conv_like() || l.is_gdn_like()) && (!s.weights || !s.bias)) {
      throw CalibrationError("calibration stats for " + layer_label(model, i) + " lack parameter ranges");
    }
  }
  if (stats.layers.size() > model.layers.size()) {
    throw CalibrationError("calibration stats describe " + std::to_string(stats.layers.size()) +
                           " layers, model has " + std::to_string(model.layers.size()));
  }
}

}  // namespace

CalibrationStats CalibrationStats::merged(const CalibrationStats& other) const {
  if (layers.size() != other.layers.size()) {
    throw CalibrationError("cannot merge stats over " + std::to_string(layers.size()) + " and " +
                           std::to_string(other.layers.size()) + " layers");
  }
  CalibrationStats out{input.merged(other.input), {}};
  out.layers.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.layers.push_back({merge_opt(layers[i].weights, other.layers[i].weights),
                          merge_opt(layers[i].bias, other.layers[i].bias),
                          layers[i].activation.merged(other.layers[i].activation)});
  }
  return out;
}

CalibrationStats calibrate(const ModelSpec& model, std::span<const Tensor> calibration_set) {
  if (calibration_set.empty()) throw CalibrationError("calibration set is empty");
  model.validate();
  std::optional<CalibrationStats> acc;
  for (const Tensor& x : calibration_set) {
    const ForwardResult fr = model_forward(model, x, true);
    CalibrationStats s;
    s.input = MinMax::of(x.data());
    s.layers.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const LayerSpec& l = model.layers[i];
      if (l.is_conv_like()) {
        s.layers[i].weights = MinMax::of(l.weights);
        s.layers[i].bias = MinMax::of(l.bias);
      } else if (l.is_gdn_like()) {
        s.layers[i].weights = MinMax::of(l.gdn->gamma);
        s.layers[i].bias = MinMax::of(l.gdn->beta);
      }
      s.layers[i].activation = MinMax::of(fr.activations[i].data());
    }
    acc = acc ? acc->merged(s) : std::move(s);
  }
  return *acc;
}

void QuantParams::validate() const {
  require_bits(bits);
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("quantization scale must be positive");
  if (zero_point != 0) throw ParameterError("zero point must be 0 for symmetric quantization");
}

QuantParams quant_params_from_stats(const MinMax& range, int bits) {
  require_bits(bits);
  if (range.min > range.max) throw CalibrationError("calibration range has min > max");
  QuantParams p;
  p.bits = bits;
  const double m = std::max(std::abs(static_cast<double>(range.min)), std::abs(static_cast<double>(range.max)));
  if (m == 0.0) {
    p.scale = kDegenerateScale;
    p.degenerate = true;
  } else {
    p.scale = m / static_cast<double>(p.qmax());
  }
  return p;
}

std::int32_t quantize_value(double x, const QuantParams& p, std::uint64_t* saturations) {
  const double qmax = static_cast<double>(p.qmax());
  const double r = std::round(x / p.scale);
  if (r > qmax || r < -qmax) {
    if (saturations) ++*saturations;
    return static_cast<std::int32_t>(r > 0 ? qmax : -qmax);
  }
  return static_cast<std::int32_t>(r);
}

QuantizedTensor quantize(std::span<const float> x, const QuantParams& p) {
  p.validate();
  QuantizedTensor q{std::vector<std::int32_t>(x.size()), p, 0};
  for (std::size_t i = 0; i < x.size(); ++i) q.values[i] = quantize_value(x[i], p, &q.saturations);
  return q;
}

std::vector<float> dequantize(std::span<const std::int32_t> q, const QuantParams& p) {
  std::vector<float> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = static_cast<float>(q[i] * p.scale);
  return out;
}

Tensor quantize_dequantize(const Tensor& x, const QuantParams& p) {
  return Tensor(x.dims(), dequantize(quantize(x.data(), p).values, p));
}

int PrecisionPolicy::bits_for(const ModelSpec& model, std::size_t layer) const {
  if (layer >= model.layers.size()) throw ParameterError("layer index out of range");
  if (auto it = overrides.find(layer); it != overrides.end()) return it->second;
  return model.layers[layer].is_gdn_like() ? gdn_bits : default_bits;
}

void PrecisionPolicy::validate() const {
  require_bits(default_bits);
  require_bits(gdn_bits);
  for (const auto& [layer, bits] : overrides) require_bits(bits);
}

namespace {

QuantizedTensor quantize_beta(std::span<const float> beta, const QuantParams& p) {
  QuantizedTensor q = quantize(beta, p);
  for (auto& v : q.values) v = std::max(v, 1);
  return q;
}

}  // namespace

QuantizedModel ptq(const ModelSpec& model, const CalibrationStats& stats, const PrecisionPolicy& policy) {
  model.validate();
  policy.validate();
  check_coverage(model, stats);
  QuantizedModel qm;
  qm.spec.name = model.name;
  qm.spec.role = model.role;
  qm.spec.bit_widths.resize(model.layers.size());
  qm.input = quant_params_from_stats(stats.input,
                                     model.layers.empty() ? policy.default_bits : policy.bits_for(model, 0));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const LayerStats& s = stats.layers[i];
    QuantizedLayer ql;
    ql.bits = policy.bits_for(model, i);
    qm.spec.bit_widths[i] = ql.bits;
    ql.activation = quant_params_from_stats(s.activation, ql.bits);
    LayerSpec shell = l;
    shell.weights.clear();
    shell.bias.clear();
    if (l.is_conv_like()) {
      ql.weights = quantize(l.weights, quant_params_from_stats(*s.weights, ql.bits));
      ql.bias = quantize(l.bias, quant_params_from_stats(*s.bias, ql.bits));
    } else if (l.is_gdn_like()) {
      ql.weights = quantize(l.gdn->gamma, quant_params_from_stats(*s.weights, ql.bits));
      ql.bias = quantize_beta(l.gdn->beta, quant_params_from_stats(*s.bias, ql.bits));
      shell.gdn->beta.clear();
      shell.gdn->gamma.clear();
    }
    qm.spec.layers.push_back(std::move(shell));
    qm.layers.push_back(std::move(ql));
  }
  return qm;
}

ModelSpec dequantize_model(const QuantizedModel& qm) {
  if (qm.layers.size() != qm.spec.layers.size()) {
    throw ParameterError("quantized model layer count does not match its structure");
  }
  ModelSpec m = qm.spec;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    LayerSpec& l = m.layers[i];
    const QuantizedLayer& ql = qm.layers[i];
    if (!l.is_conv_like() && !l.is_gdn_like()) continue;
    if (!ql.weights || !ql.bias) throw ParameterError("quantized layer " + std::to_string(i) + " lacks payloads");
    auto w = dequantize(ql.weights->values, ql.weights->params);
    auto b = dequantize(ql.bias->values, ql.bias->params);
    if (l.is_conv_like()) {
      l.weights = std::move(w);
      l.bias = std::move(b);
    } else {
      l.gdn->gamma = std::move(w);
      l.gdn->beta = std::move(b);
    }
  }
  m.validate();
  return m;
}

Tensor fake_quant_forward(const ModelSpec& model, const CalibrationStats& stats, const PrecisionPolicy& policy,
                          const Tensor& input) {
  const ModelSpec qmodel = dequantize_model(ptq(model, stats, policy));
  const int first_bits = model.layers.empty() ? policy.default_bits : policy.bits_for(model, 0);
  Tensor x = quantize_dequantize(input, quant_params_from_stats(stats.input, first_bits));
  for (std::size_t i = 0; i < qmodel.layers.size(); ++i) {
    try {
      x = layer_forward(x, qmodel.layers[i]);
    } catch (const LayerError&) {
      throw;
    } catch (const Error& e) {
      throw LayerError(i, e.what());
    }
    x = quantize_dequantize(x, quant_params_from_stats(stats.layers[i].activation, policy.bits_for(model, i)));
  }
  return x;
}

Tensor ste_grad(const Tensor& upstream, const Tensor& x, const QuantParams& p) {
  if (upstream.dims() != x.dims()) {
    throw DimensionError("ste_grad shapes differ: " + upstream.dims().str() + " vs " + x.dims().str());
  }
  p.validate();
  const double qmax = static_cast<double>(p.qmax());
  Tensor g(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.data()[i] = std::abs(x.data()[i] / p.scale) < qmax ? upstream.data()[i] : 0.0f;
  }
  return g;
}

std::vector<QuantReportRow> quant_report(const QuantizedModel& qm) {
  std::vector<QuantReportRow> rows;
  rows.push_back({0, "input", qm.input.bits, qm.input.scale, 0});
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    const QuantizedLayer& ql = qm.layers[i];
    if (ql.weights) rows.push_back({i, "weights", ql.bits, ql.weights->params.scale, ql.weights->saturations});
    if (ql.bias) rows.push_back({i, "bias", ql.bits, ql.bias->params.scale, ql.bias->saturations});
    rows.push_back({i, "activation", ql.bits, ql.activation.scale, 0});
  }
  return rows;
}

std::string quant_report_csv(const QuantizedModel& qm) {
  std::string out = "layer,role,bits,scale,saturation_count\n";
  char buf[160];
  for (const auto& r : quant_report(qm)) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%d,%.6e,%llu\n", r.layer, r.role.c_str(), r.bits, r.scale,
                  static_cast<unsigned long long>(r.saturation_count));
    out += buf;
  }
  return out;
}

namespace {

using nlohmann::json;
using detail::field;

json qp_to_json(const QuantParams& p) {
  return {{"scale", p.scale}, {"zero_point", p.zero_point}, {"bits", p.bits}, {"degenerate", p.degenerate}};
}

QuantParams qp_from_json(const json& j) {
  QuantParams p;
  p.scale = field<double>(j, "scale");
  p.zero_point = field<std::int32_t>(j, "zero_point");
  p.bits = field<int>(j, "bits");
  p.degenerate = field<bool>(j, "degenerate");
  try {
    p.validate();
  } catch (const ParameterError& e) {
    throw MalformedHeaderError(e.what());
  }
  return p;
}

Bytes ints_to_bytes(std::span<const std::int32_t> values, int bits) {
  Bytes out;
  const int width = bits / 8;
  out.reserve(values.size() * static_cast<std::size_t>(width));
  for (std::int32_t v : values) {
    const auto u = static_cast<std::uint32_t>(v);
    for (int b = 0; b < width; ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
  }
  return out;
}

std::vector<std::int32_t> bytes_to_ints(const Bytes& bytes, std::size_t expected, int bits, const std::string& what) {
  const std::size_t width = static_cast<std::size_t>(bits / 8);
  if (bytes.size() != expected * width) {
    throw MalformedHeaderError(what + ": payload holds " + std::to_string(bytes.size()) + " bytes, header implies " +
                               std::to_string(expected * width));
  }
  std::vector<std::int32_t> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t u = 0;
    for (std::size_t b = 0; b < width; ++b) u |= static_cast<std::uint32_t>(bytes[i * width + b]) << (8 * b);
    // Sign-extend from the stored width.
    const int shift = 32 - bits;
    out[i] = static_cast<std::int32_t>(u << shift) >> shift;
  }
  return out;
}

}  // namespace

Bytes save_quantized_model(const QuantizedModel& qm) {
  if (qm.layers.size() != qm.spec.layers.size()) {
    throw ParameterError("quantized model layer count does not match its structure");
  }
  detail::Container c;
  json layers = json::array();
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    const LayerSpec& l = qm.spec.layers[i];
    const QuantizedLayer& ql = qm.layers[i];
    json jl = {{"kind", to_string(l.kind)}, {"in_channels", l.in_channels}, {"out_channels", l.out_channels},
               {"kernel", l.kernel},         {"stride", l.stride},           {"padding", l.padding},
               {"bits", ql.bits},            {"activation", qp_to_json(ql.activation)}};
    if (l.is_gdn_like()) jl["alpha"] = l.gdn->alpha;
    if (l.is_conv_like() || l.is_gdn_like()) {
      if (!ql.weights || !ql.bias) throw ParameterError("quantized layer " + std::to_string(i) + " lacks payloads");
      jl["weights"] = qp_to_json(ql.weights->params);
      jl["bias"] = qp_to_json(ql.bias->params);
      jl["saturations"] = {ql.weights->saturations, ql.bias->saturations};
      c.payloads.push_back(ints_to_bytes(ql.weights->values, ql.weights->params.bits));
      c.payloads.push_back(ints_to_bytes(ql.bias->values, ql.bias->params.bits));
    }
    layers.push_back(std::move(jl));
  }
  c.header = {{"format", "lic-model"},        {"payload", "int"},
              {"name", qm.spec.name},         {"role", to_string(qm.spec.role)},
              {"input", qp_to_json(qm.input)}, {"layers", std::move(layers)}};
  return detail::encode_container(c);
}

QuantizedModel load_quantized_model(std::span<const std::uint8_t> bytes) {
  detail::Container c = detail::decode_container(bytes);
  if (field<std::string>(c.header, "format") != "lic-model" || field<std::string>(c.header, "payload") != "int") {
    throw MalformedHeaderError("container does not hold a quantized model");
  }
  QuantizedModel qm;
  qm.spec.name = field<std::string>(c.header, "name");
  try {
    qm.spec.role = parse_model_role(field<std::string>(c.header, "role"));
  } catch (const ParameterError& e) {
    throw MalformedHeaderError(e.what());
  }
  qm.input = qp_from_json(field<json>(c.header, "input"));
  const auto layers = field<json>(c.header, "layers");
  if (!layers.is_array()) throw MalformedHeaderError("'layers' is not an array");
  std::size_t next = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& jl = layers[i];
    LayerSpec l;
    try {
      l.kind = parse_layer_kind(field<std::string>(jl, "kind"));
    } catch (const ParameterError& e) {
      throw MalformedHeaderError(e.what());
    }
    l.in_channels = field<std::size_t>(jl, "in_channels");
    l.out_channels = field<std::size_t>(jl, "out_channels");
    l.kernel = field<std::size_t>(jl, "kernel");
    l.stride = field<std::size_t>(jl, "stride");
    l.padding = field<std::size_t>(jl, "padding");
    QuantizedLayer ql;
    ql.bits = field<int>(jl, "bits");
    ql.activation = qp_from_json(field<json>(jl, "activation"));
    if (l.is_gdn_like()) l.gdn = GdnParams{{}, {}, field<double>(jl, "alpha")};
    if (l.is_conv_like() || l.is_gdn_like()) {
      const std::string what = "layer " + std::to_string(i);
      if (next + 2 > c.payloads.size()) throw TruncatedError("missing payload for " + what);
      const auto sat = field<std::vector<std::uint64_t>>(jl, "saturations");
      if (sat.size() != 2) throw MalformedHeaderError(what + ": 'saturations' needs two entries");
      const QuantParams wp = qp_from_json(field<json>(jl, "weights"));
      const QuantParams bp = qp_from_json(field<json>(jl, "bias"));
      const std::size_t wn = l.is_conv_like() ? l.out_channels * l.in_channels * l.kernel * l.kernel
                                              : l.in_channels * l.in_channels;
      const std::size_t bn = l.is_conv_like() ? l.out_channels : l.in_channels;
      ql.weights = QuantizedTensor{bytes_to_ints(c.payloads[next++], wn, wp.bits, what + " weights"), wp, sat[0]};
      ql.bias = QuantizedTensor{bytes_to_ints(c.payloads[next++], bn, bp.bits, what + " bias"), bp, sat[1]};
    }
    qm.spec.bit_widths.push_back(ql.bits);
    qm.spec.layers.push_back(std::move(l));
    qm.layers.push_back(std::move(ql));
  }
  if (next != c.payloads.size()) throw MalformedHeaderError("payloads not described by the header");
  try {
    dequantize_model(qm);
  } catch (const Error& e) {
    throw MalformedHeaderError(std::string("decoded quantized model is invalid: ") + e.what());
  }
  return qm;
}

}  // namespace lichw
