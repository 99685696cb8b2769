#include "lichw/pipeline_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <set>
#include <tuple>

#include <json.hpp>

#include "lichw/error.hpp"

namespace lichw {

std::string_view to_string(SimMode mode) { return mode == SimMode::pipelined ? "pipelined" : "sequential"; }

SimMode parse_sim_mode(std::string_view s) {
  if (s == "pipelined") return SimMode::pipelined;
  if (s == "sequential") return SimMode::sequential;
  throw ParameterError("unknown simulation mode '" + std::string(s) + "'");
}

double core_ops_per_s(const DpuConfig& cfg) {
  return static_cast<double>(peak_ops_per_cycle(cfg).per_core) * cfg.freq_hz * cfg.eta;
}

std::vector<std::size_t> balance_stages(const std::vector<StageSpec>& stages, std::size_t cores) {
  if (cores == 0) throw ParameterError("at least one core is required");
  std::vector<std::size_t> order(stages.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return stages[a].compute_ops > stages[b].compute_ops; });
  std::vector<double> load(cores, 0.0);
  std::vector<std::size_t> part(stages.size());
  for (std::size_t s : order) {
    const auto c = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    part[s] = c;
    load[c] += stages[s].compute_ops;
  }
  return part;
}

namespace {

struct Completion {
  double time;
  std::size_t core;
  std::size_t patch;
  std::size_t stage;
  bool operator>(const Completion& o) const { return std::tie(time, core) > std::tie(o.time, o.core); }
};

void run_pipelined(const std::vector<StageSpec>& stages, std::size_t patches, std::size_t cores,
                   const std::vector<double>& dur, const std::vector<std::size_t>& part, const SimOptions& opt,
                   SimResult& r) {
  std::vector<std::set<std::pair<std::size_t, std::size_t>>> ready(cores);
  for (std::size_t p = 0; p < patches; ++p) ready[part[0]].insert({p, 0});
  std::vector<bool> busy(cores, false);
  std::priority_queue<Completion, std::vector<Completion>, std::greater<>> events;

  auto dispatch = [&](double now) {
    for (std::size_t c = 0; c < cores; ++c) {
      if (busy[c] || ready[c].empty()) continue;
      const auto [p, s] = *ready[c].begin();
      ready[c].erase(ready[c].begin());
      busy[c] = true;
      r.core_busy_s[c] += dur[s];
      events.push({now + dur[s], c, p, s});
      if (opt.record_trace) r.trace.push_back({now, c, s, p});
    }
  };

  dispatch(0.0);
  while (!events.empty()) {
    const double now = events.top().time;
    while (!events.empty() && events.top().time == now) {
      const Completion e = events.top();
      events.pop();
      busy[e.core] = false;
      if (e.stage + 1 < stages.size()) ready[part[e.stage + 1]].insert({e.patch, e.stage + 1});
    }
    r.makespan_s = now;
    dispatch(now);
  }
}

void run_sequential(const std::vector<StageSpec>& stages, std::size_t patches, std::size_t cores,
                    const std::vector<double>& dur, const DpuConfig& cfg, const SimOptions& opt, SimResult& r) {
  double t = 0.0;
  std::vector<double> free_at(cores);
  for (std::size_t m = 0; m < stages.size(); ++m) {
    t += opt.launch_overhead_s;
    std::fill(free_at.begin(), free_at.end(), t);
    for (std::size_t p = 0; p < patches; ++p) {
      const auto c = static_cast<std::size_t>(std::min_element(free_at.begin(), free_at.end()) - free_at.begin());
      if (opt.record_trace) r.trace.push_back({free_at[c], c, m, p});
      free_at[c] += dur[m];
      r.core_busy_s[c] += dur[m];
    }
    t = *std::max_element(free_at.begin(), free_at.end());
    if (m + 1 < stages.size()) {
      // Written out after this module, read back by the next.
      const double bytes = 2.0 * stages[m].intermediate_bytes * static_cast<double>(patches);
      r.external_bytes += bytes;
      t += bytes / cfg.mem_bandwidth_bytes_per_s;
    }
  }
  r.makespan_s = t;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

SimResult simulate(const std::vector<StageSpec>& stages, std::size_t patch_count, const DpuConfig& cfg,
                   const SimOptions& options) {
  cfg.validate();
  if (stages.empty()) throw ParameterError("simulation needs at least one stage");
  if (patch_count == 0) throw ParameterError("simulation needs at least one patch");
  if (options.patches_per_frame == 0) throw ParameterError("patches_per_frame must be positive");
  if (!(options.launch_overhead_s >= 0.0)) throw ParameterError("launch overhead must be non-negative");
  for (const auto& s : stages) {
    if (!(s.compute_ops > 0.0) || !std::isfinite(s.compute_ops)) {
      throw ParameterError("stage '" + s.name + "' needs positive compute_ops");
    }
    if (!(s.intermediate_bytes >= 0.0)) throw ParameterError("stage '" + s.name + "' has negative intermediate_bytes");
  }
  const auto cores = static_cast<std::size_t>(cfg.cores);
  const double rate = core_ops_per_s(cfg);
  std::vector<double> dur;
  for (const auto& s : stages) dur.push_back(s.compute_ops / rate);

  SimResult r;
  r.core_busy_s.assign(cores, 0.0);
  if (options.mode == SimMode::pipelined) {
    std::vector<std::size_t> part = options.partition;
    if (part.empty()) {
      part = balance_stages(stages, cores);
    } else {
      if (part.size() != stages.size()) throw ParameterError("partition must assign every stage to a core");
      for (std::size_t c : part) {
        if (c >= cores) {
          throw ParameterError("partition uses core " + std::to_string(c) + " but only " + std::to_string(cores) +
                               " cores exist");
        }
      }
    }
    r.partition = part;
    run_pipelined(stages, patch_count, cores, dur, part, options, r);
  } else {
    run_sequential(stages, patch_count, cores, dur, cfg, options, r);
  }

  r.frames = (patch_count + options.patches_per_frame - 1) / options.patches_per_frame;
  r.fps = static_cast<double>(r.frames) / r.makespan_s;
  double busy = 0.0;
  for (double b : r.core_busy_s) {
    busy += b;
    r.core_busy_fraction.push_back(b / r.makespan_s);
  }
  r.busy_fraction = busy / (static_cast<double>(cores) * r.makespan_s);
  r.avg_bandwidth_bytes_per_s = r.external_bytes / r.makespan_s;
  return r;
}

std::string SimResult::to_json() const {
  nlohmann::json busy = nlohmann::json::array();
  for (double b : core_busy_fraction) busy.push_back(round6(b));
  nlohmann::json j = {{"makespan_s", round6(makespan_s)},
                      {"frames", frames},
                      {"fps", round6(fps)},
                      {"busy_fraction", round6(busy_fraction)},
                      {"core_busy_fraction", std::move(busy)},
                      {"external_bytes", round6(external_bytes)},
                      {"avg_bandwidth_bytes_per_s", round6(avg_bandwidth_bytes_per_s)},
                      {"partition", partition}};
  return j.dump(2) + "\n";
}

std::string SimResult::trace_csv() const {
  std::string out = "time,core,stage,patch\n";
  char buf[96];
  for (const auto& t : trace) {
    std::snprintf(buf, sizeof buf, "%.9f,%zu,%zu,%zu\n", t.time_s, t.core, t.stage, t.patch);
    out += buf;
  }
  return out;
}

SimScenario encoder_scenario() {
  SimScenario s;
  s.patch_count = 15;
  s.patches_per_frame = 15;
  // Per-patch operations for one fifteenth of the frame workload.
  s.stages = {{"main_encoder", 22.5e9 / 15, 16.0 * 16 * 160 * 4},
              {"hyper_encoder", 13.8e9 / 15, 4.0 * 4 * 128 * 4},
              {"entropy", 0.05e9 / 15, 4.0 * 4 * 128 * 4},
              {"hyper_decoder", 22.5e9 / 15, 0.0}};
  s.launch_overhead_s = 9.4e-3;
  return s;
}

}  // namespace lichw
