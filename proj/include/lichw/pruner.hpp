#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lichw/model.hpp"

namespace lichw {

/// sqrt of the sum of squares over (in, K, K) for each output filter. LayerKindError for non-conv layers.
std::vector<double> filter_l2_norms(const LayerSpec& layer);

struct PruneSchedule {
  double per_iteration_fraction = 0.10;  // of the original filter count
  std::size_t iterations = 3;

  void validate() const;
};

struct PruneOptions {
  /// Hyper encoder/decoder and entropy-parameter models are left intact unless set.
  bool prune_hyperprior = false;
  /// Spatial size used for FLOPs accounting.
  std::size_t input_height = 256;
  std::size_t input_width = 256;
};

/// Per-layer bookkeeping that survives across iterations.
struct PruneTracking {
  /// Filter count of each layer before any pruning; 0 for layers without filters.
  std::vector<std::size_t> original_filters;
  /// For each layer, the original index of every current output filter.
  std::vector<std::vector<std::size_t>> filter_ids;

  static PruneTracking start(const ModelSpec& model);
};

struct PruneRecord {
  std::size_t layer = 0;
  std::size_t iteration = 0;
  std::vector<std::size_t> removed_ids;  // original indices, ascending
  std::size_t filters_before = 0;
  std::size_t filters_after = 0;
  std::uint64_t flops_before = 0;  // of this layer
  std::uint64_t flops_after = 0;
};

struct PruneReport {
  std::vector<PruneRecord> records;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  /// (1 - cumulative_ratio) * flops of the unpruned model, the linear approximation.
  double linear_flops_estimate = 0.0;
  /// Removed filters over original filters, across prunable layers.
  double cumulative_ratio = 0.0;

  std::string to_json() const;
  /// layer,iteration,removed_count,flops_before,flops_after
  std::string to_csv() const;
};

struct PruneResult {
  ModelSpec model;
  PruneReport report;
  PruneTracking tracking;
};

/// Layers eligible for filter removal under `options` (never the model's last conv-like layer).
std::vector<bool> prunable_layers(const ModelSpec& model, const PruneOptions& options);

/// Removes floor(fraction * original) lowest-norm filters from every prunable
/// layer, ranking on the weights as they stand before the step, and deletes
/// the matching channels downstream up to the next conv-like layer.
PruneResult prune_step(const ModelSpec& model, double fraction_of_original, const PruneOptions& options = {},
                       PruneTracking tracking = {}, std::size_t iteration = 0);

using FinetuneHook = std::function<void(ModelSpec& model, std::size_t iteration)>;

/// Runs schedule.iterations steps; `hook` runs after each one.
PruneResult iterative_prune(const ModelSpec& model, const PruneSchedule& schedule, const FinetuneHook& hook = {},
                            const PruneOptions& options = {});

}  // namespace lichw
