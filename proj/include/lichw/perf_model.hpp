#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lichw/model.hpp"

namespace lichw {

struct DpuConfig {
  std::uint64_t pp = 8;
  std::uint64_t icp = 16;
  std::uint64_t ocp = 16;
  std::uint64_t cores = 3;
  double freq_hz = 3.0e8;
  double eta = 0.8;
  double mem_bandwidth_bytes_per_s = 19.2e9;
  double workload_scale = 1.0;

  /// All fields positive and 0 < eta <= 1.
  void validate() const;
};

struct PeakOps {
  std::uint64_t per_core = 0;
  std::uint64_t total = 0;
};

/// per_core = pp * icp * ocp * 2 (one MAC counts as two ops).
PeakOps peak_ops_per_cycle(const DpuConfig& cfg);

/// Operations per frame in GOP, keyed by module name.
struct WorkloadProfile {
  std::map<std::string, double> gop;

  double total() const noexcept;
  static WorkloadProfile single(double total_gop) { return {{{"total", total_gop}}}; }
};

struct FpsEstimate {
  double effective_ops_per_s = 0.0;
  double t_compute_s = 0.0;
  double t_frame_s = 0.0;
  double fps = 0.0;
};

/// fps = cores * per_core * freq_hz * eta / (total GOP * 1e9 * workload_scale).
/// Memory time is treated as negligible, so t_frame equals t_compute.
FpsEstimate estimate_fps(const DpuConfig& cfg, const WorkloadProfile& workload);

/// Extents feeding the memory-load sum for one layer.
struct LayerTraffic {
  std::uint64_t h = 0;
  std::uint64_t w = 0;
  std::uint64_t n_in = 0;
  std::uint64_t n_out = 0;
  std::uint64_t kernel = 1;
  std::uint64_t bits = 8;
};

struct BandwidthLoad {
  std::uint64_t bits = 0;
  double bytes = 0.0;
};

/// Sum over layers of (h w n_in + h w n_out + n_in n_out K^2) * bits.
BandwidthLoad bandwidth_load(std::span<const LayerTraffic> layers);

/// One entry per conv-like and (i)GDN layer, at the layer's input resolution.
/// GDN contributes its C x C gamma as a K = 1 kernel; ReLU moves no parameters and is skipped.
std::vector<LayerTraffic> traffic_from_model(const ModelSpec& model, const Dims& input);

/// Sums flops_of per model role, in GOP.
WorkloadProfile workload_from_model(const ModelSpec& model, const Dims& input);
WorkloadProfile workload_from_models(std::span<const ModelSpec> models, std::span<const Dims> inputs);

}  // namespace lichw
