#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lichw/tensor.hpp"

namespace lichw {

struct KdWeights {
  double alpha = 1.0;  // latent term
  double beta = 0.1;   // perceptual term
  double gamma = 0.5;  // rate-distortion term

  /// Non-negative, finite, at least one positive.
  void validate() const;
  friend bool operator==(const KdWeights&, const KdWeights&) = default;
};

struct LossBreakdown {
  double l_latent = 0.0;
  double l_perc = 0.0;
  double rd = 0.0;  // R + lambda * D
  double total = 0.0;
  KdWeights weights;
};

/// Mean squared difference.
double latent_loss(const Tensor& z_teacher, const Tensor& z_student);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor> extract(const Tensor& image) const = 0;
};

/// Returns the image itself as the only map.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<Tensor> extract(const Tensor& image) const override { return {image}; }
};

/// Three fixed maps: the image with its horizontal and vertical differences,
/// a 2x2 average pool, and a 3x3 smoothing of that pool. The first map
/// contains the input unchanged, so distinct inputs give distinct features.
class PyramidExtractor final : public FeatureExtractor {
 public:
  std::vector<Tensor> extract(const Tensor& image) const override;
};

/// Sum over maps of the summed squared feature differences; `mean` divides each map's sum by its size.
double perceptual_loss(const Tensor& x_teacher, const Tensor& x_student, const FeatureExtractor& extractor,
                       bool mean = false);

/// total = alpha * l_latent + beta * l_perc + gamma * (R + lambda * D), accumulated left to right.
LossBreakdown kd_loss(double l_latent, double l_perc, double rate, double distortion, double lambda,
                      const KdWeights& w);

enum class KdPhase { early, late };

std::string_view to_string(KdPhase phase);

struct PhaseSchedule {
  KdWeights early{1.0, 0.1, 0.5};
  KdWeights late{0.1, 1.0, 0.5};
  std::size_t window = 1000;
  double threshold = 1e-3;
  std::size_t max_phase_steps = 250000;

  void validate() const;
  /// Early/late weights as tabulated with the training hyperparameters (alpha and beta swapped).
  static PhaseSchedule tabulated();
};

/// Relative improvement over the last `window` entries of history[0, end):
/// (mean of older half - mean of newer half) / |mean of older half|. The older half has floor(window / 2) entries.
double plateau_improvement(std::span<const double> history, std::size_t end, std::size_t window);

/// Smallest prefix length at which the schedule leaves the early phase:
/// improvement below threshold once a full window exists, or max_phase_steps reached.
std::optional<std::size_t> transition_step(std::span<const double> history, const PhaseSchedule& schedule);

struct PhaseDecision {
  KdPhase phase = KdPhase::early;
  KdWeights weights;
};

/// One-way: a late current phase stays late.
PhaseDecision plateau_scheduler(std::span<const double> history, const PhaseSchedule& schedule, KdPhase current);

/// Training hyperparameters, exported for an external trainer.
namespace kd_training {
inline constexpr double kInitialLearningRate = 1e-3;
inline constexpr double kEarlyLearningRate = 1e-4;
inline constexpr double kLateLearningRate = 1e-6;
inline constexpr std::size_t kInitialDecaySteps = 500000;
inline constexpr std::size_t kFinetuneDecaySteps = 25000;
inline constexpr double kDecayRate = 0.9;
inline constexpr std::size_t kInitialBatch = 16;
inline constexpr std::size_t kFinetuneBatch = 8;
inline constexpr std::size_t kPatchSize = 256;
inline constexpr std::size_t kInitialSteps = 5000000;
inline constexpr std::size_t kPhaseSteps = 250000;
inline constexpr std::array<double, 4> kLambdas = {0.0016, 0.0032, 0.0075, 0.045};
}  // namespace kd_training

}  // namespace lichw
