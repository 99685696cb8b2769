#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lichw/perf_model.hpp"

namespace lichw {

struct StageSpec {
  std::string name;
  double compute_ops = 0.0;         // per patch
  double intermediate_bytes = 0.0;  // produced per patch
};

enum class SimMode { sequential, pipelined };

std::string_view to_string(SimMode mode);
SimMode parse_sim_mode(std::string_view s);

struct SimOptions {
  SimMode mode = SimMode::pipelined;
  /// Charged once per module in sequential mode, with every core idle.
  double launch_overhead_s = 0.5e-3;
  std::size_t patches_per_frame = 1;
  /// Pipelined mode: core index of each stage. Empty means balance automatically.
  std::vector<std::size_t> partition;
  bool record_trace = false;
};

struct TraceRow {
  double time_s = 0.0;  // task start
  std::size_t core = 0;
  std::size_t stage = 0;
  std::size_t patch = 0;
};

struct SimResult {
  double makespan_s = 0.0;
  std::size_t frames = 0;
  double fps = 0.0;
  std::vector<double> core_busy_s;
  std::vector<double> core_busy_fraction;
  /// Sum of busy time over cores * makespan.
  double busy_fraction = 0.0;
  double external_bytes = 0.0;
  double avg_bandwidth_bytes_per_s = 0.0;
  std::vector<std::size_t> partition;  // pipelined mode only
  std::vector<TraceRow> trace;

  std::string to_json() const;
  std::string trace_csv() const;
};

/// Greedy balance: stages by decreasing ops, each onto the least-loaded core (lowest index on ties).
std::vector<std::size_t> balance_stages(const std::vector<StageSpec>& stages, std::size_t cores);

/// Per-core service rate, pp * icp * ocp * 2 * freq_hz * eta ops/s.
double core_ops_per_s(const DpuConfig& cfg);

/// Event-driven schedule of `patch_count` patches through `stages`.
///
/// Pipelined: stages are pinned to cores; each idle core starts the ready task
/// with the lowest (patch, stage); handoffs are free.
/// Sequential: modules run one after another over all patches, each patch on
/// the earliest-free core; between modules the intermediates make a round
/// trip through external memory while the cores idle.
SimResult simulate(const std::vector<StageSpec>& stages, std::size_t patch_count, const DpuConfig& cfg,
                   const SimOptions& options);

/// Encoder scenario used to compare the two modes: one 1280x720 frame as
/// fifteen 256x256 tiles through main encoder, hyper encoder, entropy
/// parameters and hyper decoder.
struct SimScenario {
  std::vector<StageSpec> stages;
  std::size_t patch_count = 0;
  std::size_t patches_per_frame = 0;
  double launch_overhead_s = 0.0;
  DpuConfig cfg;
};

SimScenario encoder_scenario();

}  // namespace lichw
