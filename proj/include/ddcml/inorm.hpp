#pragma once

#include <cmath>
#include <cstddef>

#include "ddcml/error.hpp"
#include "ddcml/volume.hpp"

namespace ddcml {

struct NormalizationConfig {
  double mu = 128.0;
  double epsilon = 0.5;
  int max_iter = 100;
};

inline void validate(const NormalizationConfig& cfg) {
  require(cfg.mu > 0.0 && cfg.mu < 255.0, Errc::invalid_argument, "mu must lie in (0, 255)");
  require(cfg.epsilon > 0.0, Errc::invalid_argument, "epsilon must be positive");
  require(cfg.max_iter >= 1, Errc::invalid_argument, "max_iter must be at least 1");
}

struct NormalizationResult {
  Volume volume;
  int iterations = 0;
  double final_mean = 0.0;
  bool converged = false;
};

/// Mean over the brain area, i.e. strictly positive voxels. Returns 0 for an
/// empty mask.
inline double brain_mean(const Volume& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (float x : v.voxels())
    if (x > 0.0f) {
      sum += x;
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Iterative gamma correction: while the brain mean misses mu by more than
/// epsilon, apply x <- 255 (x/255)^(1/gamma) with gamma = mu / mean.
/// Intermediate iterates are kept in double precision; the result is rounded
/// to float once.
inline NormalizationResult normalize_intensity(const Volume& v, const NormalizationConfig& cfg = {}) {
  validate(cfg);
  std::vector<double> x(v.voxels().begin(), v.voxels().end());
  auto mean_of_mask = [&] {
    double sum = 0.0;
    std::size_t n = 0;
    for (double e : x)
      if (e > 0.0) {
        sum += e;
        ++n;
      }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  };

  double mean = mean_of_mask();
  require(mean > 0.0, Errc::empty_input, "volume has no brain area (all voxels are zero)");

  int iterations = 0;
  while (std::abs(mean - cfg.mu) > cfg.epsilon && iterations < cfg.max_iter) {
    const double gamma = cfg.mu / mean;
    const double exponent = 1.0 / gamma;
    for (double& e : x) {
      if (e <= 0.0) continue;
      e = 255.0 * std::pow(e / 255.0, exponent);
      if (!std::isfinite(e)) throw Error(Errc::non_finite, "gamma correction produced a non-finite intensity");
    }
    ++iterations;
    mean = mean_of_mask();
  }

  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(std::min(x[i], 255.0));
  NormalizationResult r{Volume(v.dims(), std::move(out)), iterations, 0.0, false};
  r.final_mean = brain_mean(r.volume);
  r.converged = std::abs(mean - cfg.mu) <= cfg.epsilon;
  return r;
}

}  // namespace ddcml
