#include "lichw/kd_loss.hpp"

#include <cmath>
#include <limits>

#include "lichw/error.hpp"

namespace lichw {

void KdWeights::validate() const {
  for (double v : {alpha, beta, gamma}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("KD weights must be finite and non-negative");
  }
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) throw ParameterError("at least one KD weight must be positive");
}

double latent_loss(const Tensor& z_teacher, const Tensor& z_student) {
  if (z_teacher.dims() != z_student.dims()) {
    throw DimensionError("latent shapes differ: " + z_teacher.dims().str() + " vs " + z_student.dims().str());
  }
  if (z_teacher.empty()) throw DimensionError("latent tensors are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < z_teacher.size(); ++i) {
    const double d = static_cast<double>(z_teacher.data()[i]) - z_student.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(z_teacher.size());
}

std::vector<Tensor> PyramidExtractor::extract(const Tensor& image) const {
  const Dims d = image.dims();
  if (d.h < 2 || d.w < 2) throw DimensionError("pyramid extractor needs at least 2x2 input");

  // Level 1: image, horizontal difference, vertical difference.
  Tensor l1(Dims{d.n, 3 * d.c, d.h, d.w});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t y = 0; y < d.h; ++y) {
        for (std::size_t x = 0; x < d.w; ++x) {
          const float v = image.at(n, c, y, x);
          l1.at(n, 3 * c, y, x) = v;
          l1.at(n, 3 * c + 1, y, x) = x + 1 < d.w ? image.at(n, c, y, x + 1) - v : 0.0f;
          l1.at(n, 3 * c + 2, y, x) = y + 1 < d.h ? image.at(n, c, y + 1, x) - v : 0.0f;
        }
      }
    }
  }

  const std::size_t h2 = d.h / 2;
  const std::size_t w2 = d.w / 2;
  Tensor l2(Dims{d.n, d.c, h2, w2});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t y = 0; y < h2; ++y) {
        for (std::size_t x = 0; x < w2; ++x) {
          const double s = static_cast<double>(image.at(n, c, 2 * y, 2 * x)) + image.at(n, c, 2 * y, 2 * x + 1) +
                           image.at(n, c, 2 * y + 1, 2 * x) + image.at(n, c, 2 * y + 1, 2 * x + 1);
          l2.at(n, c, y, x) = static_cast<float>(s / 4.0);
        }
      }
    }
  }

  // 1-2-1 binomial smoothing with zero padding.
  static constexpr double k[3] = {0.25, 0.5, 0.25};
  Tensor l3(l2.dims());
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t y = 0; y < h2; ++y) {
        for (std::size_t x = 0; x < w2; ++x) {
          double s = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
              const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h2) || xx >= static_cast<std::ptrdiff_t>(w2)) {
                continue;
              }
              s += k[dy + 1] * k[dx + 1] * l2.at(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
          }
          l3.at(n, c, y, x) = static_cast<float>(s);
        }
      }
    }
  }
  return {std::move(l1), std::move(l2), std::move(l3)};
}

double perceptual_loss(const Tensor& x_teacher, const Tensor& x_student, const FeatureExtractor& extractor,
                       bool mean) {
  if (x_teacher.dims() != x_student.dims()) {
    throw DimensionError("image shapes differ: " + x_teacher.dims().str() + " vs " + x_student.dims().str());
  }
  const std::vector<Tensor> ft = extractor.extract(x_teacher);
  const std::vector<Tensor> fs = extractor.extract(x_student);
  if (ft.size() != fs.size()) throw DimensionError("extractor returned different map counts");
  double total = 0.0;
  for (std::size_t i = 0; i < ft.size(); ++i) {
    if (ft[i].dims() != fs[i].dims()) throw DimensionError("feature map " + std::to_string(i) + " shapes differ");
    double s = 0.0;
    for (std::size_t k = 0; k < ft[i].size(); ++k) {
      const double d = static_cast<double>(ft[i].data()[k]) - fs[i].data()[k];
      s += d * d;
    }
    if (mean && !ft[i].empty()) s /= static_cast<double>(ft[i].size());
    total += s;
  }
  return total;
}

LossBreakdown kd_loss(double l_latent, double l_perc, double rate, double distortion, double lambda,
                      const KdWeights& w) {
  w.validate();
  for (double v : {l_latent, l_perc, rate, distortion, lambda}) {
    if (!std::isfinite(v)) throw DomainError("KD loss inputs must be finite");
  }
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  LossBreakdown b;
  b.l_latent = l_latent;
  b.l_perc = l_perc;
  b.rd = rate + lambda * distortion;
  b.total = w.alpha * l_latent;
  b.total += w.beta * l_perc;
  b.total += w.gamma * b.rd;
  b.weights = w;
  return b;
}

std::string_view to_string(KdPhase phase) { return phase == KdPhase::early ? "early" : "late"; }

void PhaseSchedule::validate() const {
  early.validate();
  late.validate();
  if (window < 2) throw ParameterError("plateau window must be at least 2");
  if (!(threshold > 0.0) || !std::isfinite(threshold)) throw ParameterError("plateau threshold must be positive");
  if (max_phase_steps == 0) throw ParameterError("max_phase_steps must be positive");
}

PhaseSchedule PhaseSchedule::tabulated() {
  PhaseSchedule s;
  s.early = {0.1, 1.0, 0.5};
  s.late = {1.0, 0.1, 0.5};
  return s;
}

namespace {

double relative_drop(double mean_old, double mean_new) {
  if (mean_old == 0.0) return mean_new < 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return (mean_old - mean_new) / std::abs(mean_old);
}

}  // namespace

double plateau_improvement(std::span<const double> history, std::size_t end, std::size_t window) {
  if (window < 2 || end < window || end > history.size()) throw ParameterError("window does not fit the history");
  const std::size_t half = window / 2;
  const std::size_t begin = end - window;
  double old_sum = 0.0;
  double new_sum = 0.0;
  for (std::size_t i = begin; i < begin + half; ++i) old_sum += history[i];
  for (std::size_t i = begin + half; i < end; ++i) new_sum += history[i];
  return relative_drop(old_sum / static_cast<double>(half), new_sum / static_cast<double>(window - half));
}

std::optional<std::size_t> transition_step(std::span<const double> history, const PhaseSchedule& schedule) {
  schedule.validate();
  const std::size_t w = schedule.window;
  const std::size_t half = w / 2;
  // Prefix sums in extended precision keep the sliding means close to direct summation.
  std::vector<long double> prefix(history.size() + 1, 0.0L);
  for (std::size_t i = 0; i < history.size(); ++i) prefix[i + 1] = prefix[i] + history[i];
  for (std::size_t t = 1; t <= history.size(); ++t) {
    if (t >= schedule.max_phase_steps) return t;
    if (t < w) continue;
    const long double old_sum = prefix[t - w + half] - prefix[t - w];
    const long double new_sum = prefix[t] - prefix[t - w + half];
    const double rel = relative_drop(static_cast<double>(old_sum / static_cast<long double>(half)),
                                     static_cast<double>(new_sum / static_cast<long double>(w - half)));
    if (rel < schedule.threshold) return t;
  }
  return std::nullopt;
}

PhaseDecision plateau_scheduler(std::span<const double> history, const PhaseSchedule& schedule, KdPhase current) {
  schedule.validate();
  if (current == KdPhase::late || transition_step(history, schedule)) return {KdPhase::late, schedule.late};
  return {KdPhase::early, schedule.early};
}

}  // namespace lichw
