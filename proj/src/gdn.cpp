#include "lichw/gdn.hpp"

#include <algorithm>
#include <cmath>

#include "lichw/error.hpp"

namespace lichw {

void GdnParams::validate() const {
  const std::size_t c = beta.size();
  if (c == 0) throw ParameterError("gdn parameters have no channels");
  if (gamma.size() != c * c) {
    throw ParameterError("gdn gamma holds " + std::to_string(gamma.size()) + " entries, expected " +
                         std::to_string(c * c));
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (!(beta[i] > 0.0f) || !std::isfinite(beta[i])) {
      throw ParameterError("gdn beta[" + std::to_string(i) + "] = " + std::to_string(beta[i]) +
                           " is not strictly positive");
    }
  }
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    if (!(gamma[k] >= 0.0f) || !std::isfinite(gamma[k])) {
      throw ParameterError("gdn gamma[" + std::to_string(k / c) + "][" + std::to_string(k % c) +
                           "] = " + std::to_string(gamma[k]) + " is negative");
    }
  }
  if (!std::isfinite(alpha)) throw ParameterError("gdn alpha is not finite");
}

GdnParams GdnParams::identity(std::size_t channels) {
  return {std::vector<float>(channels, 1.0f), std::vector<float>(channels * channels, 0.0f), 0.5};
}

namespace {

Tensor normalize_float(const Tensor& x, const GdnParams& params, bool inverse) {
  params.validate();
  const Dims d = x.dims();
  const std::size_t c = params.channels();
  if (d.c != c) {
    throw DimensionError("gdn input has " + std::to_string(d.c) + " channels, parameters describe " +
                         std::to_string(c));
  }
  Tensor out(d);
  std::vector<double> v(c);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < d.plane(); ++p) {
      for (std::size_t j = 0; j < c; ++j) v[j] = x.data()[(n * c + j) * d.plane() + p];
      for (std::size_t i = 0; i < c; ++i) {
        double den = params.beta[i];
        for (std::size_t j = 0; j < c; ++j) den += static_cast<double>(params.gamma_at(i, j)) * v[j] * v[j];
        if (!(den > 0.0)) throw ParameterError("gdn denominator is not positive");
        const double scale = params.alpha == 0.5 ? std::sqrt(den) : std::pow(den, params.alpha);
        const double r = inverse ? v[i] * scale : v[i] / scale;
        out.data()[(n * c + i) * d.plane() + p] = static_cast<float>(r);
      }
    }
  }
  return out;
}

FixedPointFormat stage_format(int bits, int integer_bits, bool is_signed) {
  const int frac = std::max(0, bits - integer_bits - (is_signed ? 1 : 0));
  return {bits, frac, is_signed, true};
}

}  // namespace

Tensor gdn_float(const Tensor& x, const GdnParams& params) { return normalize_float(x, params, false); }
Tensor igdn_float(const Tensor& y, const GdnParams& params) { return normalize_float(y, params, true); }

std::string_view to_string(GdnStage stage) {
  static constexpr std::string_view names[kGdnStageCount] = {"input", "square",     "mac",   "add_beta",
                                                             "sqrt",  "reciprocal", "output"};
  return names[static_cast<std::size_t>(stage)];
}

void GdnStageFormats::validate() const {
  for (const auto* f : {&input, &square, &gamma, &accumulator, &sqrt, &reciprocal, &output, &lut}) {
    f->validate();
  }
  if (lut_segments < 2) throw ParameterError("gdn sqrt LUT needs at least 2 segments");
}

GdnStageFormats GdnStageFormats::uniform(int bits) {
  GdnStageFormats f;
  f.input = stage_format(bits, 4, true);
  f.square = stage_format(bits, 8, false);
  f.gamma = stage_format(bits, 2, false);
  f.accumulator = stage_format(bits, 10, false);
  f.sqrt = stage_format(bits, 6, false);
  f.reciprocal = stage_format(bits, 3, false);
  f.output = stage_format(bits, 5, true);
  f.lut = {bits, std::min(24, bits - 2), false, true};
  f.validate();
  return f;
}

FixedTensor FixedTensor::quantize(const Tensor& t, const FixedPointFormat& fmt, std::uint64_t* overflows) {
  fmt.validate();
  FixedTensor q{t.dims(), std::vector<std::int64_t>(t.size()), fmt};
  for (std::size_t i = 0; i < t.size(); ++i) q.raw[i] = to_fixed(t.data()[i], fmt, overflows);
  return q;
}

Tensor FixedTensor::dequantize() const {
  std::vector<float> v(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) v[i] = static_cast<float>(from_fixed(raw[i], format));
  return Tensor(dims, std::move(v));
}

FixedTensor FixedTensor::convert(const FixedPointFormat& fmt, std::uint64_t* overflows) const {
  FixedTensor q{dims, std::vector<std::int64_t>(raw.size()), fmt};
  for (std::size_t i = 0; i < raw.size(); ++i) q.raw[i] = requantize(raw[i], format.frac_bits, fmt, overflows);
  return q;
}

std::uint64_t SaturationCounts::total() const noexcept {
  std::uint64_t t = 0;
  for (auto v : per_stage) t += v;
  return t;
}

SaturationCounts& SaturationCounts::operator+=(const SaturationCounts& other) {
  for (std::size_t i = 0; i < kGdnStageCount; ++i) per_stage[i] += other.per_stage[i];
  return *this;
}

GdnFixedKernel::GdnFixedKernel(const GdnParams& params, GdnStageFormats formats)
    : channels_(params.channels()), formats_(formats) {
  params.validate();
  formats_.validate();
  if (params.alpha != 0.5) {
    throw ParameterError("fixed-point gdn supports alpha = 0.5 only, got " + std::to_string(params.alpha));
  }
  lut_ = build_sqrt_lut(1.0, 4.0, formats_.lut_segments, formats_.lut);
  gamma_.resize(params.gamma.size());
  for (std::size_t k = 0; k < gamma_.size(); ++k) {
    gamma_[k] = to_fixed(params.gamma[k], formats_.gamma, &param_overflows_);
  }
  beta_.resize(channels_);
  for (std::size_t i = 0; i < channels_; ++i) {
    const double up = std::ceil(std::ldexp(static_cast<double>(params.beta[i]), formats_.accumulator.frac_bits));
    beta_[i] = fit_to_format(std::max<int128>(1, static_cast<int128>(std::min(up, std::ldexp(1.0, 40)))),
                             formats_.accumulator, &param_overflows_);
  }
}

PixelTrace GdnFixedKernel::trace_pixel(std::span<const std::int64_t> x_raw, bool inverse,
                                       SaturationCounts* sat) const {
  const std::size_t c = channels_;
  if (x_raw.size() != c) throw DimensionError("pixel has " + std::to_string(x_raw.size()) + " channels");
  SaturationCounts local;
  SaturationCounts& s = sat ? *sat : local;
  const GdnStageFormats& f = formats_;
  PixelTrace t;
  t.square.resize(c);
  t.mac.resize(c);
  t.denominator.resize(c);
  t.root.resize(c);
  t.output.resize(c);
  if (!inverse) t.reciprocal.resize(c);

  for (std::size_t j = 0; j < c; ++j) {
    t.square[j] = requantize(static_cast<int128>(x_raw[j]) * x_raw[j], 2 * f.input.frac_bits, f.square,
                             &s[GdnStage::square]);
  }
  for (std::size_t i = 0; i < c; ++i) {
    int128 acc = 0;
    for (std::size_t j = 0; j < c; ++j) acc += static_cast<int128>(gamma_[i * c + j]) * t.square[j];
    t.mac[i] = requantize(acc, f.gamma.frac_bits + f.square.frac_bits, f.accumulator, &s[GdnStage::mac]);
    t.denominator[i] =
        fit_to_format(static_cast<int128>(t.mac[i]) + beta_[i], f.accumulator, &s[GdnStage::add_beta]);
    std::int64_t root = fixed_sqrt({t.denominator[i], f.accumulator}, lut_, f.sqrt, &s[GdnStage::sqrt]);
    if (root == 0) {
      // The root underflowed the sqrt format; hold it at one LSB.
      ++s[GdnStage::sqrt];
      root = 1;
    }
    t.root[i] = root;
    if (inverse) {
      t.output[i] = requantize(static_cast<int128>(x_raw[i]) * root, f.input.frac_bits + f.sqrt.frac_bits,
                               f.output, &s[GdnStage::output]);
    } else {
      t.reciprocal[i] = reciprocal_fixed({root, f.sqrt}, f.reciprocal, &s[GdnStage::reciprocal]).raw;
      t.output[i] = requantize(static_cast<int128>(x_raw[i]) * t.reciprocal[i],
                               f.input.frac_bits + f.reciprocal.frac_bits, f.output, &s[GdnStage::output]);
    }
  }
  return t;
}

namespace {

FixedTensor run_fixed(const FixedTensor& x, const GdnFixedKernel& kernel, bool inverse, SaturationCounts* sat) {
  const std::size_t c = kernel.channels();
  if (x.dims.c != c) {
    throw DimensionError("fixed gdn input has " + std::to_string(x.dims.c) + " channels, kernel expects " +
                         std::to_string(c));
  }
  SaturationCounts local;
  SaturationCounts& s = sat ? *sat : local;
  const FixedTensor in = x.format == kernel.formats().input
                             ? x
                             : x.convert(kernel.formats().input, &s[GdnStage::input]);
  FixedTensor out{x.dims, std::vector<std::int64_t>(x.raw.size()), kernel.formats().output};
  const std::size_t plane = x.dims.plane();
  std::vector<std::int64_t> pixel(c);
  for (std::size_t n = 0; n < x.dims.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t j = 0; j < c; ++j) pixel[j] = in.raw[(n * c + j) * plane + p];
      const PixelTrace t = kernel.trace_pixel(pixel, inverse, &s);
      for (std::size_t i = 0; i < c; ++i) out.raw[(n * c + i) * plane + p] = t.output[i];
    }
  }
  return out;
}

}  // namespace

FixedTensor gdn_fixed(const FixedTensor& x, const GdnFixedKernel& kernel, SaturationCounts* sat) {
  return run_fixed(x, kernel, false, sat);
}

FixedTensor igdn_fixed(const FixedTensor& y, const GdnFixedKernel& kernel, SaturationCounts* sat) {
  return run_fixed(y, kernel, true, sat);
}

GdnErrorReport gdn_error_report(const GdnFixedKernel& kernel, const GdnParams& params, const Tensor& corpus,
                                bool inverse) {
  if (corpus.empty()) throw DomainError("gdn error report needs a non-empty corpus");
  const Tensor reference = inverse ? igdn_float(corpus, params) : gdn_float(corpus, params);
  const GdnStageFormats& f = kernel.formats();
  GdnErrorReport report;
  report.elements = corpus.size();
  const FixedTensor xq = FixedTensor::quantize(corpus, f.input, &report.saturations[GdnStage::input]);

  const Dims d = corpus.dims();
  const std::size_t c = kernel.channels();
  const std::size_t plane = d.plane();
  std::vector<std::int64_t> pixel(c);
  std::vector<double> xv(c);
  auto note = [&](GdnStage stage, double fixed_value, double float_value) {
    double& slot = report.stage_max_error[static_cast<std::size_t>(stage)];
    slot = std::max(slot, std::abs(fixed_value - float_value));
  };
  double sum = 0.0;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t idx = (n * c + j) * plane + p;
        pixel[j] = xq.raw[idx];
        xv[j] = corpus.data()[idx];
        note(GdnStage::input, from_fixed(pixel[j], f.input), xv[j]);
      }
      const PixelTrace t = kernel.trace_pixel(pixel, inverse, &report.saturations);
      for (std::size_t j = 0; j < c; ++j) note(GdnStage::square, from_fixed(t.square[j], f.square), xv[j] * xv[j]);
      for (std::size_t i = 0; i < c; ++i) {
        double mac = 0.0;
        for (std::size_t j = 0; j < c; ++j) mac += static_cast<double>(params.gamma_at(i, j)) * xv[j] * xv[j];
        const double den = mac + params.beta[i];
        const double root = std::sqrt(den);
        note(GdnStage::mac, from_fixed(t.mac[i], f.accumulator), mac);
        note(GdnStage::add_beta, from_fixed(t.denominator[i], f.accumulator), den);
        note(GdnStage::sqrt, from_fixed(t.root[i], f.sqrt), root);
        if (!inverse) note(GdnStage::reciprocal, from_fixed(t.reciprocal[i], f.reciprocal), 1.0 / root);
        const double err =
            std::abs(from_fixed(t.output[i], f.output) - reference.data()[(n * c + i) * plane + p]);
        note(GdnStage::output, err, 0.0);
        report.max_abs_error = std::max(report.max_abs_error, err);
        sum += err;
      }
    }
  }
  report.mean_abs_error = sum / static_cast<double>(report.elements);
  report.saturation_count = report.saturations.total();
  return report;
}

GdnErrorReport gdn_error_report(const GdnParams& params, const GdnStageFormats& formats, const Tensor& corpus,
                                bool inverse) {
  return gdn_error_report(GdnFixedKernel(params, formats), params, corpus, inverse);
}

}  // namespace lichw
