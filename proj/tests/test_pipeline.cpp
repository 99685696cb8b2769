#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "lichw/error.hpp"
#include "lichw/patching.hpp"
#include "lichw/pipeline_sim.hpp"

using namespace lichw;

namespace {

// Counts how many grid patches cover each pixel, by brute force.
std::vector<int> coverage(const PatchGrid& g) {
  std::vector<int> cov(g.height * g.width, 0);
  for (const auto& o : g.origins)
    for (std::size_t r = o.row; r < o.row + g.patch; ++r)
      for (std::size_t c = o.col; c < o.col + g.patch; ++c) ++cov[r * g.width + c];
  return cov;
}

SimOptions opts(SimMode mode, double launch = 0.0, std::size_t ppf = 1) {
  SimOptions o;
  o.mode = mode;
  o.launch_overhead_s = launch;
  o.patches_per_frame = ppf;
  return o;
}

}  // namespace

TEST_SUITE("patching") {
  TEST_CASE("tiling repeats the source") {
    std::mt19937_64 rng(1);
    const Tensor hd = testing::random_tensor(Dims{1, 3, 720, 1280}, rng);
    CHECK(tile_to_resolution(hd) == hd);
    const Tensor dot(Dims{1, 1, 1, 1}, 0.25f);
    const Tensor flat = tile_to_resolution(dot);
    CHECK(flat.dims() == Dims{1, 1, 720, 1280});
    CHECK(flat == Tensor(Dims{1, 1, 720, 1280}, 0.25f));

    const Tensor src = testing::random_tensor(Dims{1, 3, 512, 768}, rng);
    const Tensor t = tile_to_resolution(src);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t r = 0; r < 720; r += 7)
        for (std::size_t q = 0; q < 1280; q += 5) CHECK(t.at(0, c, r, q) == src.at(0, c, r % 512, q % 768));
    CHECK_THROWS(tile_to_resolution(Tensor{}));
  }

  TEST_CASE("grid origins") {
    CHECK(make_patch_grid(512, 512, 256, 256).origins.size() == 4);
    CHECK(make_patch_grid(256, 256).origins.size() == 1);
    CHECK(axis_origins(720, 256, 56) == std::vector<std::size_t>{0, 56, 112, 168, 224, 280, 336, 392, 448, 464});
    const PatchGrid g = make_patch_grid(720, 1280);
    CHECK(g.origins.size() == 10 * 20);
    CHECK(g.origins.back().clamped_row);
    CHECK(g.origins.back().clamped_col);
    CHECK(g.origins.back().col == 1024);
    for (std::size_t i = 1; i < g.origins.size(); ++i) {
      const auto& a = g.origins[i - 1];
      const auto& b = g.origins[i];
      CHECK((a.row < b.row || (a.row == b.row && a.col < b.col)));
    }
    for (int v : coverage(g)) CHECK(v >= 1);
    CHECK_THROWS_AS(make_patch_grid(100, 300, 256, 56), DimensionError);
  }

  TEST_CASE("identity codec round trip is bit exact over random sizes") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> side(16, 70);
    std::uniform_int_distribution<std::size_t> pick(1, 16);
    for (int i = 0; i < 50; ++i) {
      const std::size_t h = side(rng), w = side(rng);
      const std::size_t patch = std::min<std::size_t>({pick(rng) + 4, h, w});
      const std::size_t stride = std::min(patch, pick(rng));
      const Tensor img = testing::random_tensor(Dims{1, 2, h, w}, rng);
      const PatchSet ps = extract_patches(img, patch, stride);
      for (int v : coverage(ps.grid)) CHECK(v >= 1);
      CHECK(reassemble(ps.patches, ps.grid) == img);
    }
  }

  TEST_CASE("overlap is averaged") {
    PatchGrid g;
    g.height = 2;
    g.width = 3;
    g.patch = 2;
    g.stride = 1;
    g.origins = {{0, 0}, {0, 1}};
    const std::vector<Tensor> ps{Tensor(Dims{1, 1, 2, 2}, 1.0f), Tensor(Dims{1, 1, 2, 2}, 4.0f)};
    const Tensor out = reassemble(ps, g);
    CHECK(out.at(0, 0, 0, 0) == 1.0f);
    CHECK(out.at(0, 0, 1, 1) == 2.5f);
    CHECK(out.at(0, 0, 0, 2) == 4.0f);

    const std::vector<Tensor> wrong{Tensor(Dims{1, 1, 3, 3}), Tensor(Dims{1, 1, 2, 2})};
    CHECK_THROWS_AS(reassemble(wrong, g), DimensionError);
    CHECK_THROWS_AS(reassemble(std::vector<Tensor>{ps[0]}, g), DimensionError);
  }

  TEST_CASE("ppm decoding") {
    std::string s = "P6\n# c\n2 1\n255\n";
    for (unsigned char v : {0, 51, 255, 255, 0, 102}) s.push_back(static_cast<char>(v));
    const std::vector<std::uint8_t> bytes(s.begin(), s.end());
    const Tensor t = decode_ppm(bytes);
    CHECK(t.dims() == Dims{1, 3, 1, 2});
    CHECK(t.at(0, 1, 0, 0) == 51.0f / 255.0f);
    CHECK(t.at(0, 0, 0, 1) == 1.0f);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(decode_ppm(cut), FormatError);
  }
}

TEST_SUITE("pipeline_sim") {
  TEST_CASE("single stage on one core matches the closed form in both modes") {
    DpuConfig cfg;
    cfg.cores = 1;
    const std::vector<StageSpec> one{{"main_encoder", 1e9, 0.0}};
    const double expect = core_ops_per_s(cfg) / 1e9;
    for (SimMode m : {SimMode::sequential, SimMode::pipelined}) {
      const SimResult r = simulate(one, 10, cfg, opts(m));
      CHECK(r.fps == doctest::Approx(expect).epsilon(1e-12));
      CHECK(r.busy_fraction == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("equal stages converge as patches grow") {
    const DpuConfig cfg;
    const std::vector<StageSpec> s{{"a", 1e9, 0}, {"b", 1e9, 0}, {"c", 1e9, 0}};
    const double t = 1e9 / core_ops_per_s(cfg);
    double prev_gap = 1.0;
    for (std::size_t P : {3u, 30u, 300u, 3000u}) {
      const SimResult seq = simulate(s, P, cfg, opts(SimMode::sequential));
      const SimResult pip = simulate(s, P, cfg, opts(SimMode::pipelined));
      const double seq_closed = 3.0 * static_cast<double>((P + 2) / 3) * t;
      const double pip_closed = static_cast<double>(P + 2) * t;
      CHECK(seq.makespan_s == doctest::Approx(seq_closed).epsilon(1e-9));
      CHECK(pip.makespan_s == doctest::Approx(pip_closed).epsilon(1e-9));
      const double gap = std::abs(1.0 - pip.fps / seq.fps);
      CHECK(gap <= prev_gap);
      prev_gap = gap;
    }
    CHECK(prev_gap < 1e-3);
  }

  TEST_CASE("work conservation and bounds") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ops(1e8, 5e9);
    std::uniform_real_distribution<double> bytes(0, 1e6);
    const DpuConfig cfg;
    for (int i = 0; i < 30; ++i) {
      std::vector<StageSpec> s;
      const int n = 1 + i % 5;
      double total = 0.0;
      for (int k = 0; k < n; ++k) {
        s.push_back({"s" + std::to_string(k), ops(rng), bytes(rng)});
        total += s.back().compute_ops;
      }
      const std::size_t P = 1 + static_cast<std::size_t>(i) * 3;
      for (SimMode m : {SimMode::sequential, SimMode::pipelined}) {
        const SimResult r = simulate(s, P, cfg, opts(m, 1e-3, 3));
        double busy = 0.0;
        for (double b : r.core_busy_s) busy += b;
        CHECK(busy == doctest::Approx(total * static_cast<double>(P) / core_ops_per_s(cfg)).epsilon(1e-9));
        CHECK(r.busy_fraction >= 0.0);
        CHECK(r.busy_fraction <= 1.0 + 1e-12);
        for (double f : r.core_busy_fraction) CHECK(f <= 1.0 + 1e-12);
        CHECK(r.frames == (P + 2) / 3);
        CHECK(r.fps == doctest::Approx(static_cast<double>(r.frames) / r.makespan_s));
      }
      const SimResult seq = simulate(s, P, cfg, opts(SimMode::sequential, 1e-3, 3));
      const SimResult pip = simulate(s, P, cfg, opts(SimMode::pipelined, 1e-3, 3));
      CHECK(pip.external_bytes == 0.0);
      if (n > 1) {
        double bytes_expect = 0.0;
        for (int k = 0; k + 1 < n; ++k) bytes_expect += 2 * s[static_cast<std::size_t>(k)].intermediate_bytes * static_cast<double>(P);
        CHECK(seq.external_bytes == doctest::Approx(bytes_expect));
      }
    }
  }

  TEST_CASE("balanced stages: both modes follow their closed forms") {
    // Pipelining wins exactly when the sequential overheads exceed the two-slot fill latency.
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ops(1e8, 5e9);
    std::uniform_real_distribution<double> launch(1e-5, 1e-2);
    const DpuConfig cfg;
    int pipelined_wins = 0;
    for (int i = 0; i < 50; ++i) {
      const double o = ops(rng);
      const std::vector<StageSpec> s{{"a", o, 1e5}, {"b", o, 1e5}, {"c", o, 0}};
      const std::size_t P = 1 + static_cast<std::size_t>(i);
      const double l = launch(rng);
      const SimResult seq = simulate(s, P, cfg, opts(SimMode::sequential, l));
      const SimResult pip = simulate(s, P, cfg, opts(SimMode::pipelined, l));
      const double t = o / core_ops_per_s(cfg);
      const double transfer = 2 * (2 * 1e5 * static_cast<double>(P)) / cfg.mem_bandwidth_bytes_per_s;
      const double seq_closed = 3 * (l + static_cast<double>((P + 2) / 3) * t) + transfer;
      const double pip_closed = static_cast<double>(P + 2) * t;
      CHECK(seq.makespan_s == doctest::Approx(seq_closed).epsilon(1e-9));
      CHECK(pip.makespan_s == doctest::Approx(pip_closed).epsilon(1e-9));
      if (pip_closed < seq_closed * (1 - 1e-9)) {
        CHECK(pip.fps > seq.fps);
        ++pipelined_wins;
      }
    }
    CHECK(pipelined_wins > 0);
  }

  TEST_CASE("balancing and explicit partitions") {
    const std::vector<StageSpec> s{{"a", 5, 0}, {"b", 4, 0}, {"c", 3, 0}, {"d", 3, 0}, {"e", 2, 0}};
    // Core loads end at 5, 6, 6.
    CHECK(balance_stages(s, 3) == std::vector<std::size_t>{0, 1, 2, 2, 1});
    SimOptions o = opts(SimMode::pipelined);
    o.partition = {0, 0, 1, 1, 3};
    CHECK_THROWS_AS(simulate(s, 4, DpuConfig{}, o), ParameterError);
    o.partition = {0, 1};
    CHECK_THROWS_AS(simulate(s, 4, DpuConfig{}, o), ParameterError);
    CHECK_THROWS_AS(simulate({}, 4, DpuConfig{}, opts(SimMode::pipelined)), ParameterError);
    CHECK_THROWS_AS(simulate(s, 0, DpuConfig{}, opts(SimMode::pipelined)), ParameterError);
    CHECK(parse_sim_mode("sequential") == SimMode::sequential);
    CHECK_THROWS_AS(parse_sim_mode("parallel"), ParameterError);
  }

  TEST_CASE("determinism and trace") {
    const SimScenario sc = encoder_scenario();
    SimOptions o = opts(SimMode::pipelined, sc.launch_overhead_s, sc.patches_per_frame);
    o.record_trace = true;
    const SimResult a = simulate(sc.stages, sc.patch_count, sc.cfg, o);
    const SimResult b = simulate(sc.stages, sc.patch_count, sc.cfg, o);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.trace_csv() == b.trace_csv());
    CHECK(a.trace.size() == sc.stages.size() * sc.patch_count);
    CHECK(a.trace_csv().rfind("time,core,stage,patch\n", 0) == 0);
  }

  TEST_CASE("encoder scenario: pipelining gains 2-3x and keeps cores busier") {
    const SimScenario sc = encoder_scenario();
    const SimResult seq =
        simulate(sc.stages, sc.patch_count, sc.cfg, opts(SimMode::sequential, sc.launch_overhead_s, sc.patches_per_frame));
    const SimResult pip =
        simulate(sc.stages, sc.patch_count, sc.cfg, opts(SimMode::pipelined, sc.launch_overhead_s, sc.patches_per_frame));
    const double ratio = pip.fps / seq.fps;
    CHECK(ratio >= 2.0);
    CHECK(ratio <= 3.0);
    CHECK(pip.busy_fraction > seq.busy_fraction);
    CHECK(std::abs(seq.fps - 17.3) < 0.5);
  }
}
