#include "lichw/perf_model.hpp"

#include <cmath>

#include "lichw/error.hpp"

namespace lichw {

void DpuConfig::validate() const {
  if (pp == 0 || icp == 0 || ocp == 0 || cores == 0) throw ParameterError("DPU parallelism and cores must be positive");
  if (!(freq_hz > 0.0) || !std::isfinite(freq_hz)) throw ParameterError("freq_hz must be positive");
  if (!(eta > 0.0 && eta <= 1.0)) throw ParameterError("eta must lie in (0, 1]");
  if (!(mem_bandwidth_bytes_per_s > 0.0)) throw ParameterError("mem_bandwidth_bytes_per_s must be positive");
  if (!(workload_scale > 0.0) || !std::isfinite(workload_scale)) {
    throw ParameterError("workload_scale must be positive");
  }
}

PeakOps peak_ops_per_cycle(const DpuConfig& cfg) {
  cfg.validate();
  const std::uint64_t per_core = cfg.pp * cfg.icp * cfg.ocp * 2;
  return {per_core, per_core * cfg.cores};
}

double WorkloadProfile::total() const noexcept {
  double t = 0.0;
  for (const auto& [name, v] : gop) t += v;
  return t;
}

FpsEstimate estimate_fps(const DpuConfig& cfg, const WorkloadProfile& workload) {
  const PeakOps peak = peak_ops_per_cycle(cfg);
  const double ops = workload.total() * 1e9 * cfg.workload_scale;
  if (!(ops > 0.0) || !std::isfinite(ops)) throw DomainError("workload must be positive");
  FpsEstimate e;
  e.effective_ops_per_s = static_cast<double>(peak.total) * cfg.freq_hz * cfg.eta;
  e.t_compute_s = ops / e.effective_ops_per_s;
  e.t_frame_s = e.t_compute_s;
  e.fps = e.effective_ops_per_s / ops;
  return e;
}

BandwidthLoad bandwidth_load(std::span<const LayerTraffic> layers) {
  std::uint64_t bits = 0;
  for (const auto& l : layers) {
    bits += (l.h * l.w * l.n_in + l.h * l.w * l.n_out + l.n_in * l.n_out * l.kernel * l.kernel) * l.bits;
  }
  return {bits, static_cast<double>(bits) / 8.0};
}

std::vector<LayerTraffic> traffic_from_model(const ModelSpec& model, const Dims& input) {
  model.validate();
  std::vector<LayerTraffic> out;
  Dims d = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const auto bits = static_cast<std::uint64_t>(model.bits_for(i));
    if (l.is_conv_like()) {
      out.push_back({d.h, d.w, l.in_channels, l.out_channels, l.kernel, bits});
    } else if (l.is_gdn_like()) {
      out.push_back({d.h, d.w, l.in_channels, l.out_channels, 1, bits});
    }
    d = l.output_dims(d);
  }
  return out;
}

WorkloadProfile workload_from_model(const ModelSpec& model, const Dims& input) {
  WorkloadProfile p;
  if (model.layers.empty()) return p;
  p.gop[std::string(to_string(model.role))] = static_cast<double>(flops_of(model, input).total) / 1e9;
  return p;
}

WorkloadProfile workload_from_models(std::span<const ModelSpec> models, std::span<const Dims> inputs) {
  if (models.size() != inputs.size()) throw ParameterError("one input extent per model is required");
  WorkloadProfile p;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (const auto& [k, v] : workload_from_model(models[i], inputs[i]).gop) p.gop[k] += v;
  }
  return p;
}

}  // namespace lichw
