#pragma once

#include <cstddef>
#include <vector>

namespace lichw {

/// Parameters of a (inverse) generalized divisive normalization layer.
///
/// `gamma` is stored row-major as a C x C matrix, gamma[i * C + j] weighting
/// the squared activation of channel j in the denominator of channel i.
struct GdnParams {
  std::vector<float> beta;
  std::vector<float> gamma;
  double alpha = 0.5;

  std::size_t channels() const noexcept { return beta.size(); }
  float gamma_at(std::size_t i, std::size_t j) const noexcept { return gamma[i * beta.size() + j]; }

  /// Throws ParameterError unless beta > 0, gamma >= 0 and gamma is C x C.
  void validate() const;

  /// beta = 1, gamma = 0: the identity normalization.
  static GdnParams identity(std::size_t channels);

  friend bool operator==(const GdnParams&, const GdnParams&) = default;
};

}  // namespace lichw
