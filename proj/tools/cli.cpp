#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include <CLI11.hpp>
#include <json.hpp>

#include "bench.hpp"
#include "lichw/bd_metrics.hpp"
#include "lichw/error.hpp"
#include "lichw/gdn.hpp"
#include "lichw/kd_loss.hpp"
#include "lichw/model_io.hpp"
#include "lichw/patching.hpp"
#include "lichw/perf_model.hpp"
#include "lichw/pipeline_sim.hpp"
#include "lichw/pruner.hpp"
#include "lichw/quantizer.hpp"

namespace lichw::cli {

namespace fs = std::filesystem;
using nlohmann::json;

GdnParams random_gdn_params(std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> beta(0.1, 1.0);
  std::uniform_real_distribution<double> gamma(0.0, 0.1);
  GdnParams p;
  for (std::size_t i = 0; i < channels; ++i) p.beta.push_back(static_cast<float>(beta(rng)));
  for (std::size_t i = 0; i < channels * channels; ++i) p.gamma.push_back(static_cast<float>(gamma(rng)));
  return p;
}

Tensor random_corpus(std::size_t channels, std::size_t h, std::size_t w, double range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-range, range);
  Tensor t(Dims{1, channels, h, w});
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

namespace {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads keys from one JSON object and rejects any key it was never asked about.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw SchemaError(where_ + " must be a JSON object");
  }

  template <typename T>
  T req(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(where_ + ": missing required key '" + key + "'");
    return get<T>(key);
  }

  template <typename T>
  T opt(const std::string& key, T fallback) {
    seen_.insert(key);
    return j_.contains(key) ? get<T>(key) : fallback;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& sub(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw SchemaError(where_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  template <typename T>
  T get(const std::string& key) const {
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SchemaError(where_ + ": '" + key + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw SchemaError(where_ + ": '" + key + "' must be an integer");
      if (std::is_unsigned_v<T> && v.get<long long>() < 0) {
        throw SchemaError(where_ + ": '" + key + "' must be non-negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw SchemaError(where_ + ": '" + key + "' must be a number");
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw SchemaError(where_ + ": '" + key + "' has the wrong type");
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string fmt6(double v) {
  if (v == 0.0) v = 0.0;  // no "-0.000000"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string sci6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

struct Context {
  fs::path config_dir = ".";
  fs::path out_dir = ".";
  std::ostream* out = nullptr;
};

fs::path resolve(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : ctx.config_dir / path;
}

Bytes load_input(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw InputError("input file not found: " + path.string());
  try {
    return read_file(path);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
}

void write_output(const Context& ctx, const std::string& name, const std::string& text) {
  const Bytes b(text.begin(), text.end());
  try {
    write_file(ctx.out_dir / name, b);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
}

void write_output(const Context& ctx, const std::string& name, const Bytes& bytes) {
  try {
    write_file(ctx.out_dir / name, bytes);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
}

json load_config(const fs::path& path) {
  const Bytes b = load_input(path);
  try {
    return json::parse(b.begin(), b.end());
  } catch (const json::exception& e) {
    throw SchemaError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// Runs a config-value check, reporting parameter violations as schema errors.
template <typename F>
void check(F&& f) {
  try {
    f();
  } catch (const lichw::Error& e) {
    throw SchemaError(e.what());
  }
}

DpuConfig parse_dpu(const json& j) {
  Fields f(j, "dpu");
  DpuConfig c;
  c.pp = f.opt<std::uint64_t>("pp", c.pp);
  c.icp = f.opt<std::uint64_t>("icp", c.icp);
  c.ocp = f.opt<std::uint64_t>("ocp", c.ocp);
  c.cores = f.opt<std::uint64_t>("cores", c.cores);
  c.freq_hz = f.opt<double>("freq_hz", c.freq_hz);
  c.eta = f.opt<double>("eta", c.eta);
  c.mem_bandwidth_bytes_per_s = f.opt<double>("mem_bandwidth_bytes_per_s", c.mem_bandwidth_bytes_per_s);
  c.workload_scale = f.opt<double>("workload_scale", c.workload_scale);
  f.finish();
  check([&] { c.validate(); });
  return c;
}

// ---------------------------------------------------------------- quantize

constexpr const char* kQuantizeHelp = R"(Config keys:
  model         (string, required)  float model container
  calibration   (array of strings, required)  tensor files run through the model
  policy        (object)  default_bits (8), gdn_bits (32), overrides {"<layer>": bits}
  output        (string, "quantized.licm")  quantized model written under --out
  report        (string, "quant_report.csv")  CSV: layer,role,bits,scale,saturation_count
Paths are relative to the config file.)";

int cmd_quantize(const json& cfg, const Context& ctx) {
  Fields f(cfg, "quantize config");
  const fs::path model_path = resolve(ctx, f.req<std::string>("model"));
  const auto calib = f.req<std::vector<std::string>>("calibration");
  PrecisionPolicy policy;
  if (f.has("policy")) {
    Fields p(f.sub("policy"), "policy");
    policy.default_bits = p.opt<int>("default_bits", 8);
    policy.gdn_bits = p.opt<int>("gdn_bits", 32);
    const auto overrides = p.opt<std::map<std::string, int>>("overrides", {});
    p.finish();
    for (const auto& [k, bits] : overrides) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw SchemaError("policy.overrides: '" + k + "' is not a layer index");
      }
      policy.overrides[idx] = bits;
    }
  }
  const std::string output = f.opt<std::string>("output", "quantized.licm");
  const std::string report = f.opt<std::string>("report", "quant_report.csv");
  f.finish();
  if (calib.empty()) throw SchemaError("quantize config: 'calibration' must list at least one tensor");
  check([&] { policy.validate(); });

  const ModelSpec model = load_model(load_input(model_path));
  for (const auto& [idx, bits] : policy.overrides) {
    if (idx >= model.layers.size()) {
      throw SchemaError("policy.overrides names layer " + std::to_string(idx) + " but the model has " +
                        std::to_string(model.layers.size()));
    }
  }
  std::vector<Tensor> set;
  for (const auto& c : calib) set.push_back(load_tensor(load_input(resolve(ctx, c))));

  const CalibrationStats stats = calibrate(model, set);
  const QuantizedModel qm = ptq(model, stats, policy);
  const std::string csv = quant_report_csv(qm);
  write_output(ctx, output, save_quantized_model(qm));
  write_output(ctx, report, csv);
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- prune

constexpr const char* kPruneHelp = R"(Config keys:
  model             (string, required)  float model container
  schedule          (object)  per_iteration_fraction (0.1, of the original count), iterations (3)
  prune_hyperprior  (bool, false)  also prune hyper encoder/decoder and entropy-parameter models
  input_height      (int, 256)  spatial size for FLOPs accounting
  input_width       (int, 256)
  output            (string, "pruned.licm")
  report_json       (string, "prune_report.json")
  report_csv        (string, "prune_report.csv")  CSV: layer,iteration,removed_count,flops_before,flops_after)";

int cmd_prune(const json& cfg, const Context& ctx) {
  Fields f(cfg, "prune config");
  const fs::path model_path = resolve(ctx, f.req<std::string>("model"));
  PruneSchedule schedule;
  if (f.has("schedule")) {
    Fields s(f.sub("schedule"), "schedule");
    schedule.per_iteration_fraction = s.opt<double>("per_iteration_fraction", schedule.per_iteration_fraction);
    schedule.iterations = s.opt<std::size_t>("iterations", schedule.iterations);
    s.finish();
  }
  PruneOptions opts;
  opts.prune_hyperprior = f.opt<bool>("prune_hyperprior", false);
  opts.input_height = f.opt<std::size_t>("input_height", opts.input_height);
  opts.input_width = f.opt<std::size_t>("input_width", opts.input_width);
  const std::string output = f.opt<std::string>("output", "pruned.licm");
  const std::string report_json = f.opt<std::string>("report_json", "prune_report.json");
  const std::string report_csv = f.opt<std::string>("report_csv", "prune_report.csv");
  f.finish();
  check([&] { schedule.validate(); });

  const ModelSpec model = load_model(load_input(model_path));
  const PruneResult r = iterative_prune(model, schedule, {}, opts);
  const std::string csv = r.report.to_csv();
  write_output(ctx, output, save_model(r.model));
  write_output(ctx, report_json, r.report.to_json());
  write_output(ctx, report_csv, csv);
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- estimate

constexpr const char* kEstimateHelp = R"(Config keys:
  dpu        (object)  pp (8), icp (16), ocp (16), cores (3), freq_hz (3e8), eta (0.8),
                       mem_bandwidth_bytes_per_s (19.2e9), workload_scale (1.0)
  workloads  (array)   entries {name (string), gop (number, operations per frame in GOP)}
  models     (array)   entries {path (string), height (int), width (int), name (string, optional)};
                       workload from the model's operation count, plus its memory load
  report     (string, "estimate.csv")  CSV: name,gop,effective_ops_per_s,t_frame_ms,fps,bandwidth_bytes
  summary    (string, "estimate.json")
At least one workload or model is required.)";

int cmd_estimate(const json& cfg, const Context& ctx) {
  Fields f(cfg, "estimate config");
  const DpuConfig dpu = f.has("dpu") ? parse_dpu(f.sub("dpu")) : DpuConfig{};
  struct Entry {
    std::string name;
    double gop = 0.0;
    std::optional<fs::path> model;
    std::size_t h = 0, w = 0;
  };
  std::vector<Entry> entries;
  if (f.has("workloads")) {
    const json& arr = f.sub("workloads");
    if (!arr.is_array()) throw SchemaError("'workloads' must be an array");
    for (const auto& item : arr) {
      Fields w(item, "workloads entry");
      Entry e;
      e.name = w.req<std::string>("name");
      e.gop = w.req<double>("gop");
      w.finish();
      entries.push_back(e);
    }
  }
  if (f.has("models")) {
    const json& arr = f.sub("models");
    if (!arr.is_array()) throw SchemaError("'models' must be an array");
    for (const auto& item : arr) {
      Fields m(item, "models entry");
      Entry e;
      const std::string p = m.req<std::string>("path");
      e.model = resolve(ctx, p);
      e.h = m.req<std::size_t>("height");
      e.w = m.req<std::size_t>("width");
      e.name = m.opt<std::string>("name", fs::path(p).stem().string());
      m.finish();
      entries.push_back(e);
    }
  }
  const std::string report = f.opt<std::string>("report", "estimate.csv");
  const std::string summary = f.opt<std::string>("summary", "estimate.json");
  f.finish();
  if (entries.empty()) throw SchemaError("estimate config needs 'workloads' or 'models'");

  const PeakOps peak = peak_ops_per_cycle(dpu);
  std::string csv = "name,gop,effective_ops_per_s,t_frame_ms,fps,bandwidth_bytes\n";
  json rows = json::array();
  for (auto& e : entries) {
    std::optional<double> bw;
    WorkloadProfile wp = WorkloadProfile::single(e.gop);
    if (e.model) {
      const ModelSpec m = load_model(load_input(*e.model));
      if (m.layers.empty()) throw SchemaError("model '" + e.model->string() + "' has no layers");
      const Dims in{1, m.layers.front().in_channels, e.h, e.w};
      wp = workload_from_model(m, in);
      e.gop = wp.total();
      bw = bandwidth_load(traffic_from_model(m, in)).bytes;
    }
    const FpsEstimate est = estimate_fps(dpu, wp);
    csv += e.name + "," + fmt6(e.gop) + "," + fmt6(est.effective_ops_per_s) + "," + fmt6(est.t_frame_s * 1e3) +
           "," + fmt6(est.fps) + "," + (bw ? fmt6(*bw) : std::string()) + "\n";
    json row = {{"name", e.name},
                {"gop", round6(e.gop)},
                {"t_compute_ms", round6(est.t_compute_s * 1e3)},
                {"t_frame_ms", round6(est.t_frame_s * 1e3)},
                {"fps", round6(est.fps)}};
    if (bw) row["bandwidth_bytes"] = round6(*bw);
    rows.push_back(std::move(row));
  }
  const json sum = {{"peak_ops_per_cycle", {{"per_core", peak.per_core}, {"total", peak.total}}},
                    {"effective_ops_per_s", round6(static_cast<double>(peak.total) * dpu.freq_hz * dpu.eta)},
                    {"workload_scale", dpu.workload_scale},
                    {"estimates", std::move(rows)}};
  write_output(ctx, report, csv);
  write_output(ctx, summary, sum.dump(2) + "\n");
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

constexpr const char* kSimulateHelp = R"(Config keys:
  scenario           (string)  "encoder" loads the built-in encoder scenario; excludes 'stages'
  stages             (array)   entries {name, compute_ops (per patch), intermediate_bytes (per patch, 0)}
  patch_count        (int)     required with 'stages'
  patches_per_frame  (int, 1)
  launch_overhead_s  (number, 0.0005)  per module, sequential mode
  dpu                (object)  as for 'estimate'
  modes              (array of "sequential" | "pipelined", both)
  partition          (array of int)  core of each stage in pipelined mode; balanced when absent
  trace              (bool, false)   write trace_<mode>.csv (time,core,stage,patch)
  report             (string, "simulate.csv")
CSV: mode,fps,makespan_s,busy_fraction,external_bytes,avg_bandwidth_bytes_per_s,fps_ratio
fps_ratio is relative to the sequential run when one is requested.)";

int cmd_simulate(const json& cfg, const Context& ctx) {
  Fields f(cfg, "simulate config");
  std::vector<StageSpec> stages;
  std::size_t patch_count = 0;
  std::size_t ppf = 1;
  double launch = 0.5e-3;
  DpuConfig dpu;
  if (f.has("scenario")) {
    const std::string name = f.req<std::string>("scenario");
    if (name != "encoder") throw SchemaError("unknown scenario '" + name + "'");
    if (f.has("stages")) throw SchemaError("'scenario' and 'stages' are mutually exclusive");
    const SimScenario s = encoder_scenario();
    stages = s.stages;
    patch_count = s.patch_count;
    ppf = s.patches_per_frame;
    launch = s.launch_overhead_s;
    dpu = s.cfg;
  } else {
    const json& arr = f.has("stages") ? f.sub("stages") : throw SchemaError("simulate config needs 'stages' or 'scenario'");
    if (!arr.is_array()) throw SchemaError("'stages' must be an array");
    for (const auto& item : arr) {
      Fields s(item, "stages entry");
      StageSpec st;
      st.name = s.req<std::string>("name");
      st.compute_ops = s.req<double>("compute_ops");
      st.intermediate_bytes = s.opt<double>("intermediate_bytes", 0.0);
      s.finish();
      stages.push_back(st);
    }
    patch_count = f.req<std::size_t>("patch_count");
  }
  patch_count = f.opt<std::size_t>("patch_count", patch_count);
  ppf = f.opt<std::size_t>("patches_per_frame", ppf);
  launch = f.opt<double>("launch_overhead_s", launch);
  if (f.has("dpu")) dpu = parse_dpu(f.sub("dpu"));
  const auto mode_names = f.opt<std::vector<std::string>>("modes", {"sequential", "pipelined"});
  const auto partition = f.opt<std::vector<std::size_t>>("partition", {});
  const bool trace = f.opt<bool>("trace", false);
  const std::string report = f.opt<std::string>("report", "simulate.csv");
  f.finish();
  std::vector<SimMode> modes;
  for (const auto& m : mode_names) {
    check([&] { modes.push_back(parse_sim_mode(m)); });
  }
  if (modes.empty()) throw SchemaError("'modes' must not be empty");
  if (patch_count == 0) throw SchemaError("'patch_count' must be positive");
  if (ppf == 0) throw SchemaError("'patches_per_frame' must be positive");

  std::vector<std::pair<SimMode, SimResult>> results;
  for (SimMode mode : modes) {
    SimOptions o;
    o.mode = mode;
    o.launch_overhead_s = launch;
    o.patches_per_frame = ppf;
    o.partition = partition;
    o.record_trace = trace;
    results.emplace_back(mode, simulate(stages, patch_count, dpu, o));
  }
  std::optional<double> seq_fps;
  for (const auto& [mode, r] : results) {
    if (mode == SimMode::sequential) seq_fps = r.fps;
  }
  std::string csv = "mode,fps,makespan_s,busy_fraction,external_bytes,avg_bandwidth_bytes_per_s,fps_ratio\n";
  for (const auto& [mode, r] : results) {
    const std::string name(to_string(mode));
    csv += name + "," + fmt6(r.fps) + "," + fmt6(r.makespan_s) + "," + fmt6(r.busy_fraction) + "," +
           fmt6(r.external_bytes) + "," + fmt6(r.avg_bandwidth_bytes_per_s) + "," +
           (seq_fps ? fmt6(r.fps / *seq_fps) : std::string()) + "\n";
    write_output(ctx, "simulate_" + name + ".json", r.to_json());
    if (trace) write_output(ctx, "trace_" + name + ".csv", r.trace_csv());
  }
  write_output(ctx, report, csv);
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- bd-metrics

constexpr const char* kBdHelp = R"(Usage: bd-metrics A.csv B.csv   or   bd-metrics --config f.json
Curve CSVs have the header bpp,psnr_db and at least 4 rows with increasing bpp.
Config keys:
  curve_a  (string, required)  reference curve
  curve_b  (string, required)  test curve
  report   (string, "bd_metrics.csv")  CSV: bd_rate_percent,bd_psnr_db,log_rate_lo,log_rate_hi,psnr_lo,psnr_hi
Empty overlap on an axis prints NA for that metric.)";

RdCurve load_curve(const fs::path& path) {
  const Bytes b = load_input(path);
  try {
    RdCurve c = parse_rd_curve_csv(std::string(b.begin(), b.end()));
    c.validate();
    return c;
  } catch (const lichw::Error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

int cmd_bd_metrics(const std::optional<json>& cfg, const std::vector<std::string>& positional, const Context& ctx) {
  fs::path a_path, b_path;
  std::string report = "bd_metrics.csv";
  if (cfg) {
    if (!positional.empty()) throw SchemaError("bd-metrics takes either two curve files or --config, not both");
    Fields f(*cfg, "bd-metrics config");
    a_path = resolve(ctx, f.req<std::string>("curve_a"));
    b_path = resolve(ctx, f.req<std::string>("curve_b"));
    report = f.opt<std::string>("report", report);
    f.finish();
  } else {
    if (positional.size() != 2) throw SchemaError("bd-metrics needs two curve files");
    a_path = positional[0];
    b_path = positional[1];
  }
  const RdCurve a = load_curve(a_path);
  const RdCurve b = load_curve(b_path);
  const BdResult r = bd_metrics(a, b);
  auto num = [](const std::optional<double>& v) { return v ? fmt6(*v) : std::string("NA"); };
  auto lo = [](const std::optional<Interval>& iv) { return iv ? std::optional<double>(iv->lo) : std::nullopt; };
  auto hi = [](const std::optional<Interval>& iv) { return iv ? std::optional<double>(iv->hi) : std::nullopt; };
  const std::string csv = "bd_rate_percent,bd_psnr_db,log_rate_lo,log_rate_hi,psnr_lo,psnr_hi\n" +
                          num(r.bd_rate_percent) + "," + num(r.bd_psnr_db) + "," + num(lo(r.log_rate_overlap)) + "," +
                          num(hi(r.log_rate_overlap)) + "," + num(lo(r.psnr_overlap)) + "," +
                          num(hi(r.psnr_overlap)) + "\n";
  write_output(ctx, report, csv);
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- gdn-bench

constexpr const char* kGdnBenchHelp = R"(Config keys:
  channels  (int, 4)       random parameters when 'params' is absent
  height    (int, 50)
  width     (int, 50)
  seed      (int, 1)       seeds both the corpus and the random parameters
  range     (number, 8.0)  corpus uniform in [-range, range]
  bits      (array of 8 | 16 | 32, [32, 16, 8])
  inverse   (bool, false)  benchmark the inverse transform
  params    (object)       beta (array), gamma (array, C x C row-major)
  dump_lut  (bool, true)   write lut_<bits>.json per width
  report    (string, "gdn_bench.csv")
CSV: bits,inverse,elements,max_abs_error,mean_abs_error,saturation_count,lut_max_abs_error,
     then the max error at each stage: input,square,mac,add_beta,sqrt,reciprocal,output)";

std::string lut_json(const SqrtLut& lut) {
  const json j = {{"format", lut.format.str()},  {"lo", lut.lo},         {"hi", lut.hi},
                  {"segments", lut.segments},    {"starts", lut.starts}, {"slopes", lut.slopes},
                  {"intercepts", lut.intercepts}, {"max_abs_error", lut.max_abs_error}};
  return j.dump(2) + "\n";
}

int cmd_gdn_bench(const json& cfg, const Context& ctx) {
  Fields f(cfg, "gdn-bench config");
  std::size_t channels = f.opt<std::size_t>("channels", 4);
  const auto h = f.opt<std::size_t>("height", 50);
  const auto w = f.opt<std::size_t>("width", 50);
  const auto seed = f.opt<std::uint64_t>("seed", 1);
  const double range = f.opt<double>("range", 8.0);
  const auto bits = f.opt<std::vector<int>>("bits", {32, 16, 8});
  const bool inverse = f.opt<bool>("inverse", false);
  std::optional<GdnParams> params;
  if (f.has("params")) {
    Fields p(f.sub("params"), "params");
    GdnParams gp;
    gp.beta = p.req<std::vector<float>>("beta");
    gp.gamma = p.req<std::vector<float>>("gamma");
    p.finish();
    check([&] { gp.validate(); });
    channels = gp.channels();
    params = std::move(gp);
  }
  const bool dump = f.opt<bool>("dump_lut", true);
  const std::string report = f.opt<std::string>("report", "gdn_bench.csv");
  f.finish();
  if (channels == 0 || h == 0 || w == 0) throw SchemaError("channels, height and width must be positive");
  if (!(range > 0.0)) throw SchemaError("'range' must be positive");
  for (int b : bits) {
    if (b != 8 && b != 16 && b != 32) throw SchemaError("'bits' entries must be 8, 16 or 32");
  }
  if (!params) params = random_gdn_params(channels, seed);
  const Tensor corpus = random_corpus(channels, h, w, range, seed + 1);

  std::string csv =
      "bits,inverse,elements,max_abs_error,mean_abs_error,saturation_count,lut_max_abs_error,"
      "err_input,err_square,err_mac,err_add_beta,err_sqrt,err_reciprocal,err_output\n";
  for (int b : bits) {
    const GdnFixedKernel kernel(*params, GdnStageFormats::uniform(b));
    const GdnErrorReport r = gdn_error_report(kernel, *params, corpus, inverse);
    csv += std::to_string(b) + "," + (inverse ? "true" : "false") + "," + std::to_string(r.elements) + "," +
           sci6(r.max_abs_error) + "," + sci6(r.mean_abs_error) + "," + std::to_string(r.saturation_count) + "," +
           sci6(kernel.lut().max_abs_error);
    for (double e : r.stage_max_error) csv += "," + sci6(e);
    csv += "\n";
    if (dump) write_output(ctx, "lut_" + std::to_string(b) + ".json", lut_json(kernel.lut()));
  }
  write_output(ctx, report, csv);
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- tile

constexpr const char* kTileHelp = R"(Config keys:
  image     (string, required)  binary PPM (P6, 8-bit) or raw tensor file
  width     (int, 1280)         tiled resolution
  height    (int, 720)
  patch     (int, 256)
  stride    (int, 56)
  output    (string, "tiled.tensor")
  grid_csv  (string, "patch_grid.csv")  CSV: index,row,col,clamped_row,clamped_col
  summary   (string, "tile_summary.json")  grid extents and the identity round-trip check)";

int cmd_tile(const json& cfg, const Context& ctx) {
  Fields f(cfg, "tile config");
  const fs::path image_path = resolve(ctx, f.req<std::string>("image"));
  const auto width = f.opt<std::size_t>("width", 1280);
  const auto height = f.opt<std::size_t>("height", 720);
  const auto patch = f.opt<std::size_t>("patch", 256);
  const auto stride = f.opt<std::size_t>("stride", 56);
  const std::string output = f.opt<std::string>("output", "tiled.tensor");
  const std::string grid_csv = f.opt<std::string>("grid_csv", "patch_grid.csv");
  const std::string summary = f.opt<std::string>("summary", "tile_summary.json");
  f.finish();
  if (width == 0 || height == 0 || patch == 0 || stride == 0) {
    throw SchemaError("width, height, patch and stride must be positive");
  }
  if (patch > width || patch > height) throw SchemaError("patch exceeds the tiled resolution");

  const Bytes raw = load_input(image_path);
  const bool ppm = raw.size() >= 2 && raw[0] == 'P' && raw[1] == '6';
  const Tensor image = ppm ? decode_ppm(raw) : load_tensor(raw);
  if (image.empty()) throw InputError("image '" + image_path.string() + "' is empty");
  const Tensor tiled = tile_to_resolution(image, width, height);
  const PatchSet set = extract_patches(tiled, patch, stride);
  const Tensor back = reassemble(set.patches, set.grid);
  double max_err = 0.0;
  for (std::size_t i = 0; i < tiled.size(); ++i) {
    max_err = std::max(max_err, std::abs(static_cast<double>(back.data()[i]) - tiled.data()[i]));
  }
  std::string csv = "index,row,col,clamped_row,clamped_col\n";
  for (std::size_t i = 0; i < set.grid.origins.size(); ++i) {
    const PatchOrigin& o = set.grid.origins[i];
    csv += std::to_string(i) + "," + std::to_string(o.row) + "," + std::to_string(o.col) + "," +
           (o.clamped_row ? "1" : "0") + "," + (o.clamped_col ? "1" : "0") + "\n";
  }
  const json sum = {{"width", width},
                    {"height", height},
                    {"patch", patch},
                    {"stride", stride},
                    {"rows", axis_origins(height, patch, stride).size()},
                    {"cols", axis_origins(width, patch, stride).size()},
                    {"patches", set.grid.origins.size()},
                    {"roundtrip_exact", back == tiled},
                    {"max_roundtrip_error", round6(max_err)}};
  write_output(ctx, output, save_tensor(tiled));
  write_output(ctx, grid_csv, csv);
  write_output(ctx, summary, sum.dump(2) + "\n");
  *ctx.out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- kd-loss

constexpr const char* kKdHelp = R"(Config keys:
  lambda    (number, required)  rate-distortion trade-off
  preset    (string, "text")    "text": early alpha 1.0 beta 0.1; "table": early alpha 0.1 beta 1.0
  schedule  (object)            early {alpha,beta,gamma}, late {alpha,beta,gamma}, window (1000),
                                threshold (0.001), max_phase_steps (250000); overrides the preset
  steps     (array, required)   entries {l_latent, l_perc, rate, distortion}
  report    (string, "kd_loss.csv")
The phase of step i follows the l_latent history of steps before i.
CSV: step,phase,alpha,beta,gamma,l_latent,l_perc,rd,total)";

KdWeights parse_weights(const json& j, const std::string& where, KdWeights w) {
  Fields f(j, where);
  w.alpha = f.opt<double>("alpha", w.alpha);
  w.beta = f.opt<double>("beta", w.beta);
  w.gamma = f.opt<double>("gamma", w.gamma);
  f.finish();
  return w;
}

int cmd_kd_loss(const json& cfg, const Context& ctx) {
  Fields f(cfg, "kd-loss config");
  const double lambda = f.req<double>("lambda");
  const std::string preset = f.opt<std::string>("preset", "text");
  PhaseSchedule sched;
  if (preset == "table") {
    sched = PhaseSchedule::tabulated();
  } else if (preset != "text") {
    throw SchemaError("unknown preset '" + preset + "'");
  }
  if (f.has("schedule")) {
    Fields s(f.sub("schedule"), "schedule");
    if (s.has("early")) sched.early = parse_weights(s.sub("early"), "schedule.early", sched.early);
    if (s.has("late")) sched.late = parse_weights(s.sub("late"), "schedule.late", sched.late);
    sched.window = s.opt<std::size_t>("window", sched.window);
    sched.threshold = s.opt<double>("threshold", sched.threshold);
    sched.max_phase_steps = s.opt<std::size_t>("max_phase_steps", sched.max_phase_steps);
    s.finish();
  }
  struct Step {
    double l_latent, l_perc, rate, distortion;
  };
  std::vector<Step> steps;
  const json& arr = f.has("steps") ? f.sub("steps") : throw SchemaError("kd-loss config: missing required key 'steps'");
  if (!arr.is_array()) throw SchemaError("'steps' must be an array");
  for (const auto& item : arr) {
    Fields s(item, "steps entry");
    steps.push_back({s.req<double>("l_latent"), s.req<double>("l_perc"), s.req<double>("rate"),
                     s.req<double>("distortion")});
    s.finish();
  }
  const std::string report = f.opt<std::string>("report", "kd_loss.csv");
  f.finish();
  check([&] { sched.validate(); });
  if (!(lambda > 0.0)) throw SchemaError("'lambda' must be positive");

  std::vector<double> history;
  for (const auto& s : steps) history.push_back(s.l_latent);
  const std::optional<std::size_t> switch_at = transition_step(history, sched);

  std::string csv = "step,phase,alpha,beta,gamma,l_latent,l_perc,rd,total\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const KdPhase phase = switch_at && i >= *switch_at ? KdPhase::late : KdPhase::early;
    const KdWeights& w = phase == KdPhase::late ? sched.late : sched.early;
    const LossBreakdown b = kd_loss(steps[i].l_latent, steps[i].l_perc, steps[i].rate, steps[i].distortion, lambda, w);
    csv += std::to_string(i) + "," + std::string(to_string(phase)) + "," + fmt6(w.alpha) + "," + fmt6(w.beta) + "," +
           fmt6(w.gamma) + "," + fmt6(b.l_latent) + "," + fmt6(b.l_perc) + "," + fmt6(b.rd) + "," + fmt6(b.total) +
           "\n";
  }
  write_output(ctx, report, csv);
  *ctx.out << csv;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hardware-oriented toolkit for learned image compression models", "lic-hw-kit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lic-hw-kit 1.0.0");

  struct Sub {
    const char* name;
    const char* summary;
    const char* keys;
  };
  const Sub subs[] = {
      {"quantize", "Calibrate and post-training quantize a float model", kQuantizeHelp},
      {"prune", "Iterative L2 filter pruning", kPruneHelp},
      {"estimate", "Analytical FPS and memory-load estimate", kEstimateHelp},
      {"simulate", "Event-driven sequential vs pipelined multi-core schedule", kSimulateHelp},
      {"bd-metrics", "BD-rate and BD-PSNR between two RD curves", kBdHelp},
      {"gdn-bench", "Fixed-point GDN error against the float reference", kGdnBenchHelp},
      {"tile", "Tile an image to a target resolution and split it into patches", kTileHelp},
      {"kd-loss", "Distillation loss breakdown under the plateau schedule", kKdHelp},
  };
  std::string config;
  std::string out_dir = ".";
  std::vector<std::string> positional;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.summary);
    sub->footer(s.keys);
    sub->add_option("--config", config, "JSON config file");
    sub->add_option("--out", out_dir, "Directory for written reports (created if missing)");
    if (std::string_view(s.name) == "bd-metrics") sub->add_option("curves", positional, "Two curve CSV files");
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }
  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();

  try {
    Context ctx;
    ctx.out = &out;
    ctx.out_dir = out_dir;
    std::optional<json> cfg;
    if (!config.empty()) {
      cfg = load_config(config);
      ctx.config_dir = fs::path(config).parent_path();
      if (ctx.config_dir.empty()) ctx.config_dir = ".";
    } else if (name != "bd-metrics") {
      throw SchemaError(name + " requires --config");
    }
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw InputError("cannot create output directory '" + out_dir + "': " + ec.message());

    if (name == "quantize") return cmd_quantize(*cfg, ctx);
    if (name == "prune") return cmd_prune(*cfg, ctx);
    if (name == "estimate") return cmd_estimate(*cfg, ctx);
    if (name == "simulate") return cmd_simulate(*cfg, ctx);
    if (name == "bd-metrics") return cmd_bd_metrics(cfg, positional, ctx);
    if (name == "gdn-bench") return cmd_gdn_bench(*cfg, ctx);
    if (name == "tile") return cmd_tile(*cfg, ctx);
    if (name == "kd-loss") return cmd_kd_loss(*cfg, ctx);
    throw SchemaError("unknown subcommand " + name);
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return kExitInput;
  } catch (const lichw::Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace lichw::cli
