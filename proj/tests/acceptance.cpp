// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bench.hpp"
#include "cli.hpp"
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

using namespace lichw;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<float> uniform(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(u(rng));
  return v;
}

LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::mt19937_64& rng) {
  return LayerSpec::conv(in, out, k, s, k / 2, uniform(out * in * k * k, rng, -1, 1), uniform(out, rng, -0.1, 0.1));
}

Outcome analytical_model() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const double gop[3] = {528.2, 220.2, 153.0};
  const double reported[3] = {18.6, 44.6, 64.1};
  const double raw[3] = {5.58, 13.39, 19.27};
  DpuConfig scaled;
  scaled.workload_scale = 0.3;
  std::string got;
  for (int i = 0; i < 3; ++i) {
    const double f = estimate_fps(scaled, WorkloadProfile::single(gop[i])).fps;
    const double g = estimate_fps(DpuConfig{}, WorkloadProfile::single(gop[i])).fps;
    o.require(std::abs(f - reported[i]) <= 0.5, "scaled fps for " + fmt("%.1f", gop[i]));
    o.require(std::abs(g - raw[i]) <= 0.05, "unscaled fps for " + fmt("%.1f", gop[i]));
    got += fmt(i ? "/%.3f" : "%.3f", f);
  }
  const double dt = seconds_since(t0);
  o.require(dt < 1.0, "runtime");
  o.note("fps at scale 0.3 = " + got);
  return o;
}

Outcome peak_ops() {
  Outcome o;
  const PeakOps p = peak_ops_per_cycle(DpuConfig{});
  o.require(p.per_core == 4096, "per-core");
  o.require(p.total == 12288, "total");
  o.note("per_core " + std::to_string(p.per_core) + ", total " + std::to_string(p.total));
  return o;
}

Outcome gdn_envelope() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const GdnParams p = cli::random_gdn_params(4, 1);
  const Tensor corpus = cli::random_corpus(4, 50, 50, 8.0, 2);
  double err[3];
  const int widths[3] = {32, 16, 8};
  for (int i = 0; i < 3; ++i) err[i] = gdn_error_report(p, GdnStageFormats::uniform(widths[i]), corpus).max_abs_error;
  o.require(corpus.size() == 10000, "corpus size");
  o.require(err[0] <= 1e-3, "32-bit max error <= 1e-3");
  o.require(err[0] <= err[1] && err[1] <= err[2], "error ordering 32 <= 16 <= 8");
  o.note("max error 32/16/8 = " + fmt("%.3e", err[0]) + "/" + fmt("%.3e", err[1]) + "/" + fmt("%.3e", err[2]));

  // Identity parameters pass the corpus through, in float and in 32-bit fixed point.
  const GdnParams id = GdnParams::identity(4);
  o.require(gdn_float(corpus, id) == corpus && igdn_float(corpus, id) == corpus, "float identity");
  const GdnFixedKernel k(id, GdnStageFormats::uniform(32));
  const FixedTensor xq = FixedTensor::quantize(corpus, k.formats().input);
  const double step = k.formats().output.resolution();
  const Tensor xin = xq.dequantize();
  const Tensor yid = gdn_fixed(xq, k).dequantize();
  const Tensor zid = igdn_fixed(xq, k).dequantize();
  bool fixed_id = true;
  for (std::size_t i = 0; i < xin.size(); ++i) {
    fixed_id = fixed_id && std::abs(yid.data()[i] - xin.data()[i]) <= step && std::abs(zid.data()[i] - xin.data()[i]) <= step;
  }
  o.require(fixed_id, "fixed identity within one output step");

  // gamma = 0 round trip on the benchmark's beta values.
  GdnParams g0 = p;
  for (auto& g : g0.gamma) g = 0.0f;
  const Tensor back = igdn_float(gdn_float(corpus, g0), g0);
  std::size_t inexact = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) inexact += back.data()[i] != corpus.data()[i];
  o.require(inexact == 0, "float gamma=0 round trip exact (" + std::to_string(inexact) + "/10000 differ by float rounding)");
  // iGDN input headroom is [-16, 16); beta >= 0.3 keeps |x| / sqrt(beta) inside it.
  GdnParams g0h = g0;
  for (auto& b : g0h.beta) b = std::max(b, 0.3f);
  const GdnFixedKernel kh(g0h, GdnStageFormats::uniform(32));
  const Tensor b = igdn_fixed(gdn_fixed(xq, kh), kh).dequantize();
  double worst_steps = 0.0;
  for (std::size_t i = 0; i < xin.size(); ++i) {
    const double scale = std::max(1.0f, std::abs(xin.data()[i]));
    worst_steps = std::max(worst_steps, std::abs(xin.data()[i] - b.data()[i]) / (step * scale));
  }
  o.require(worst_steps <= 2.0, "fixed gamma=0 round trip within 2 steps of max(1,|x|)");
  o.note("fixed round trip worst " + fmt("%.2f", worst_steps) + " relative steps");

  const double dt = seconds_since(t0);
  o.require(dt < 10.0, "runtime");
  return o;
}

Outcome quantizer_properties() {
  Outcome o;
  std::mt19937_64 rng(4);
  const std::vector<float> x = uniform(1000000, rng, -1, 1);
  const QuantParams p = quant_params_from_stats(MinMax::of(x), 8);
  const QuantizedTensor q = quantize(x, p);
  const std::vector<float> d = dequantize(q.values, p);
  double worst = 0.0;
  std::size_t float_excess = 0;
  bool symmetric = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(q.values[i] * p.scale - x[i]));
    float_excess += std::abs(static_cast<double>(d[i]) - x[i]) > p.scale / 2;
    symmetric = symmetric && quantize_value(-static_cast<double>(x[i]), p) == -q.values[i];
  }
  o.require(worst <= p.scale / 2, "round trip <= scale/2");
  o.require(symmetric, "symmetry");
  o.require(q.saturations == 0, "in-range values saturated");
  bool zero = true;
  for (int bits : {8, 16, 32}) zero = zero && quant_params_from_stats({-3.0f, 0.7f}, bits).zero_point == 0;
  o.require(zero, "zero point");

  ModelSpec m;
  m.layers.push_back(conv(3, 4, 3, 1, rng));
  m.layers.push_back(LayerSpec::gdn_layer(cli::random_gdn_params(4, 5)));
  m.layers.push_back(conv(4, 2, 3, 1, rng));
  const std::vector<Tensor> calib{Tensor(Dims{1, 3, 8, 8}, uniform(192, rng, -1, 1))};
  const QuantizedModel qm = ptq(m, calibrate(m, calib), PrecisionPolicy{});
  o.require(qm.layers[1].bits == 32 && qm.layers[1].weights->params.bits == 32, "GDN resolves to 32 bits");
  o.require(qm.layers[0].bits == 8 && qm.layers[2].bits == 8, "conv resolves to 8 bits");
  o.note("max |q*scale - x| = " + fmt("%.6f", worst / p.scale) + " scale over 1e6 values; " +
         std::to_string(float_excess) + " exceed scale/2 only after float32 storage");
  return o;
}

Outcome pruning() {
  Outcome o;
  std::mt19937_64 rng(6);
  ModelSpec m;
  m.layers.push_back(conv(3, 100, 3, 2, rng));
  m.layers.push_back(LayerSpec::relu(100));
  m.layers.push_back(conv(100, 100, 3, 1, rng));
  m.layers.push_back(conv(100, 100, 3, 1, rng));
  m.layers.push_back(conv(100, 8, 1, 1, rng));
  PruneOptions opts;
  opts.input_height = opts.input_width = 32;
  PruneResult acc{m, {}, PruneTracking::start(m)};
  bool decreasing = true;
  bool ordered = true;
  for (std::size_t it = 0; it < 3; ++it) {
    const ModelSpec before = acc.model;
    PruneResult step = prune_step(before, 0.1, opts, acc.tracking, it);
    decreasing = decreasing && step.report.flops_after < step.report.flops_before;
    for (const auto& rec : step.report.records) {
      const auto norms = filter_l2_norms(before.layers[rec.layer]);
      // Map original ids back to positions in the pre-step layer.
      const auto& ids = acc.tracking.filter_ids[rec.layer];
      double max_removed = 0.0;
      double min_kept = INFINITY;
      for (std::size_t pos = 0; pos < ids.size(); ++pos) {
        const bool removed = std::binary_search(rec.removed_ids.begin(), rec.removed_ids.end(), ids[pos]);
        (removed ? max_removed : min_kept) = removed ? std::max(max_removed, norms[pos]) : std::min(min_kept, norms[pos]);
      }
      ordered = ordered && min_kept >= max_removed;
    }
    acc.model = step.model;
    acc.tracking = step.tracking;
  }
  for (std::size_t i : {0u, 2u, 3u}) o.require(acc.model.layers[i].out_channels == 70, "layer " + std::to_string(i) + " keeps 70");
  o.require(acc.model.layers[4].out_channels == 8, "last layer exempt");
  o.require(decreasing, "flops strictly decrease each iteration");
  o.require(ordered, "surviving norms >= removed norms");
  bool forward_ok = true;
  try {
    forward_ok = model_forward(acc.model, Tensor(Dims{1, 3, 32, 32}, 0.5f)).output.dims() == Dims{1, 8, 16, 16};
  } catch (const Error&) {
    forward_ok = false;
  }
  o.require(forward_ok, "structural forward");
  o.note("100 -> 70 filters in each of 3 prunable layers");
  return o;
}

Outcome patching() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> side(256, 420);
  std::uniform_int_distribution<std::size_t> st(16, 256);
  std::size_t exact = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t h = side(rng), w = side(rng);
    const Tensor img(Dims{1, 1, h, w}, uniform(h * w, rng, 0, 1));
    const PatchSet ps = extract_patches(img, 256, st(rng));
    exact += reassemble(ps.patches, ps.grid) == img;
  }
  o.require(exact == 50, "identity round trip bit exact (" + std::to_string(exact) + "/50)");
  const PatchGrid g = make_patch_grid(720, 1280, 256, 56);
  std::vector<unsigned char> cov(720 * 1280, 0);
  for (const auto& org : g.origins)
    for (std::size_t r = org.row; r < org.row + 256; ++r)
      for (std::size_t c = org.col; c < org.col + 256; ++c) cov[r * 1280 + c] = 1;
  o.require(std::count(cov.begin(), cov.end(), 0) == 0, "1280x720 coverage");
  o.note(std::to_string(g.origins.size()) + " patches cover 1280x720");
  return o;
}

Outcome simulator() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const SimScenario sc = encoder_scenario();
  auto run = [&](SimMode m) {
    SimOptions opt;
    opt.mode = m;
    opt.launch_overhead_s = sc.launch_overhead_s;
    opt.patches_per_frame = sc.patches_per_frame;
    opt.record_trace = true;
    return simulate(sc.stages, sc.patch_count, sc.cfg, opt);
  };
  const SimResult seq = run(SimMode::sequential);
  const SimResult pip = run(SimMode::pipelined);
  bool identical = true;
  for (int i = 0; i < 2; ++i) {
    identical = identical && run(SimMode::sequential).to_json() == seq.to_json() &&
                run(SimMode::pipelined).to_json() == pip.to_json() &&
                run(SimMode::pipelined).trace_csv() == pip.trace_csv();
  }
  const double ratio = pip.fps / seq.fps;
  o.require(ratio >= 2.0 && ratio <= 3.0, "fps ratio in [2, 3]");
  o.require(pip.busy_fraction > seq.busy_fraction, "pipelined busier");
  o.require(identical, "bit-identical across 3 runs");
  o.require(seconds_since(t0) < 5.0, "runtime");
  o.note("sequential " + fmt("%.2f", seq.fps) + " fps (busy " + fmt("%.2f", seq.busy_fraction) + "), pipelined " +
         fmt("%.2f", pip.fps) + " fps (busy " + fmt("%.2f", pip.busy_fraction) + "), ratio " + fmt("%.3f", ratio));
  return o;
}

Outcome bjontegaard() {
  Outcome o;
  const RdCurve base{{{0.1, 28.0}, {0.2, 30.5}, {0.4, 33.0}, {0.8, 35.2}}};
  const BdResult same = bd_metrics(base, base);
  o.require(std::abs(*same.bd_rate_percent) < 1e-9 && std::abs(*same.bd_psnr_db) < 1e-9, "identical curves");
  RdCurve up = base, twice = base;
  for (auto& p : up.points) p.psnr_db += 1.0;
  for (auto& p : twice.points) p.rate_bpp *= 2.0;
  const double dpsnr = *bd_metrics(base, up).bd_psnr_db;
  const double drate = *bd_metrics(base, twice).bd_rate_percent;
  o.require(std::abs(dpsnr - 1.0) <= 1e-9, "+1 dB shift");
  o.require(std::abs(drate - 100.0) <= 1e-6, "rate doubling");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> step(0.15, 1.2), gain(1.0, 3.0), r0(0.05, 0.2), q0(26, 30);
  bool anti = true;
  for (int i = 0; i < 100; ++i) {
    RdCurve a, b;
    for (RdCurve* c : {&a, &b}) {
      double r = r0(rng), q = q0(rng);
      for (int k = 0; k < 4; ++k) {
        c->points.push_back({r, q});
        r *= 1 + step(rng);
        q += gain(rng);
      }
    }
    const BdResult ab = bd_metrics(a, b), ba = bd_metrics(b, a);
    if (ab.bd_psnr_db) anti = anti && *ab.bd_psnr_db == -*ba.bd_psnr_db;
    if (ab.bd_rate_percent) {
      const double prod = (1 + *ab.bd_rate_percent / 100) * (1 + *ba.bd_rate_percent / 100);
      anti = anti && std::abs(prod - 1) <= 1e-9;
    }
    anti = anti && ab.bd_psnr_db.has_value() == ba.bd_psnr_db.has_value();
  }
  o.require(anti, "antisymmetry on 100 random curves");
  o.note("shift " + fmt("%.12f", dpsnr) + " dB, doubling " + fmt("%.9f", drate) + "%");
  return o;
}

Outcome kd() {
  Outcome o;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 10), lam(1e-3, 0.1), wt(0, 2);
  bool identity = true, perfect = true;
  for (int i = 0; i < 10000; ++i) {
    const KdWeights w{wt(rng), wt(rng), wt(rng) + 1e-3};
    const double l = u(rng), p = u(rng), r = u(rng), d = u(rng), la = lam(rng);
    double expect = w.alpha * l;
    expect += w.beta * p;
    expect += w.gamma * (r + la * d);
    identity = identity && kd_loss(l, p, r, d, la, w).total == expect;
    perfect = perfect && kd_loss(0, 0, r, d, la, w).total == w.gamma * (r + la * d);
  }
  o.require(identity, "breakdown identity");
  o.require(perfect, "perfect student");

  // Independent scan over the raw history.
  auto scan = [](const std::vector<double>& h, std::size_t W, double tau) -> std::optional<std::size_t> {
    for (std::size_t t = W; t <= h.size(); ++t) {
      double a = 0, b = 0;
      for (std::size_t i = t - W; i < t - W + W / 2; ++i) a += h[i];
      for (std::size_t i = t - W + W / 2; i < t; ++i) b += h[i];
      a /= static_cast<double>(W / 2);
      b /= static_cast<double>(W - W / 2);
      if ((a - b) / std::abs(a) < tau) return t;
    }
    return std::nullopt;
  };
  std::uniform_real_distribution<double> rate(1e-4, 5e-3), noise(-1e-4, 1e-4);
  std::uniform_int_distribution<std::size_t> win(4, 200);
  std::size_t agree = 0, transitions = 0;
  for (int i = 0; i < 100; ++i) {
    const double k = rate(rng);
    std::vector<double> h;
    for (int s = 0; s < 3000; ++s) h.push_back(1.0 + std::exp(-k * s) + noise(rng));
    PhaseSchedule sched;
    sched.window = win(rng);
    sched.threshold = 1e-3;
    const auto got = transition_step(h, sched);
    agree += got == scan(h, sched.window, sched.threshold);
    transitions += got.has_value();
  }
  o.require(agree == 100, "scheduler matches scan oracle (" + std::to_string(agree) + "/100)");
  o.note(std::to_string(transitions) + "/100 histories reach the plateau");
  return o;
}

Outcome cli_determinism() {
  Outcome o;
  const fs::path dir = fs::path(ACCEPTANCE_TMP_DIR);
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 rng(10);
  ModelSpec m;
  m.layers.push_back(conv(3, 10, 3, 2, rng));
  m.layers.push_back(LayerSpec::gdn_layer(cli::random_gdn_params(10, 3)));
  m.layers.push_back(conv(10, 10, 3, 1, rng));
  m.layers.push_back(conv(10, 4, 3, 2, rng));
  write_file(dir / "model.licm", save_model(m));
  write_file(dir / "calib.tensor", save_tensor(Tensor(Dims{1, 3, 16, 16}, uniform(768, rng, -1, 1))));
  auto put = [&](const std::string& name, const std::string& text) { std::ofstream(dir / name, std::ios::binary) << text; };
  put("a.csv", "bpp,psnr_db\n0.1,28\n0.2,30.5\n0.4,33\n0.8,35.2\n");
  put("b.csv", "bpp,psnr_db\n0.12,28.4\n0.25,30.9\n0.45,33.1\n0.9,35.6\n");
  std::string ppm = "P6\n5 4\n255\n";
  for (int i = 0; i < 60; ++i) ppm.push_back(static_cast<char>(i * 4));
  put("img.ppm", ppm);
  using nlohmann::json;
  json steps = json::array();
  for (int i = 0; i < 30; ++i) steps.push_back({{"l_latent", 1 + 1.0 / (i + 1)}, {"l_perc", 0.2}, {"rate", 0.4}, {"distortion", 12}});
  const std::vector<std::pair<std::string, json>> configs = {
      {"quantize", {{"model", "model.licm"}, {"calibration", {"calib.tensor"}}}},
      {"prune", {{"model", "model.licm"}, {"input_height", 32}, {"input_width", 32}}},
      {"estimate", {{"dpu", {{"workload_scale", 0.3}}},
                    {"workloads", {{{"name", "a"}, {"gop", 528.2}}, {{"name", "b"}, {"gop", 220.2}}, {{"name", "c"}, {"gop", 153.0}}}}}},
      {"simulate", {{"scenario", "encoder"}, {"trace", true}}},
      {"bd-metrics", {{"curve_a", "a.csv"}, {"curve_b", "b.csv"}}},
      {"gdn-bench", json::object()},
      {"tile", {{"image", "img.ppm"}}},
      {"kd-loss", {{"lambda", 0.0016}, {"schedule", {{"window", 8}, {"threshold", 0.01}}}, {"steps", steps}}},
  };
  std::size_t ok = 0;
  for (const auto& [sub, cfg] : configs) {
    put(sub + ".json", cfg.dump());
    bool same = true;
    for (const char* run : {"r1", "r2"}) {
      std::ostringstream out, err;
      const int code = cli::run({sub, "--config", (dir / (sub + ".json")).string(), "--out", (dir / sub / run).string()}, out, err);
      if (code != 0) {
        same = false;
        o.note(sub + " exited " + std::to_string(code) + ": " + err.str());
      }
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / sub / "r1")) {
      auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      };
      same = same && slurp(e.path()) == slurp(dir / sub / "r2" / e.path().filename());
      ++files;
    }
    if (same && files > 0) ++ok;
  }
  o.require(ok == configs.size(), "byte-identical reruns (" + std::to_string(ok) + "/8 subcommands)");
  if (o.pass) o.note("8/8 subcommands byte-identical");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"analytical FPS model", analytical_model},
      {"peak-ops identities", peak_ops},
      {"GDN numeric envelope", gdn_envelope},
      {"quantizer properties", quantizer_properties},
      {"pruning", pruning},
      {"patching", patching},
      {"pipeline simulator", simulator},
      {"Bjontegaard metrics", bjontegaard},
      {"KD loss and schedule", kd},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
