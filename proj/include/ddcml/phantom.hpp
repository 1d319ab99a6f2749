#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "ddcml/error.hpp"
#include "ddcml/volume.hpp"

namespace ddcml {

inline constexpr int kSeverityLevels = 5;

/// One synthetic subject. Severity drives the ventricle radius (the
/// "disease" signal); gain and texture phase are disease-irrelevant nuisance.
struct PhantomSpec {
  int severity = 0;
  std::uint64_t subject_seed = 0;
  Dims3 dims{32, 32, 32};
  double nuisance_gain = 1.0;
  double texture_amplitude = 0.0;
  double bias_strength = 0.0;  // peak relative change of the linear bias field
};

// Geometry shared by the generator and its tests.
namespace phantom_geometry {
inline constexpr double kBrainSemiAxisFraction = 0.42;
inline constexpr double kBrainBaseIntensity = 140.0;
inline constexpr double kVentricleIntensity = 40.0;
inline constexpr double kVentricleRadiusFraction = 0.12;
inline constexpr double kVentricleGrowthPerLevel = 0.15;
inline constexpr double kRibbonInnerRadius = 0.7;  // normalized ellipsoid radius
inline constexpr double kTextureWavelengthFraction = 0.25;

inline double ventricle_radius(const Dims3& d, int severity) {
  return kVentricleRadiusFraction * static_cast<double>(d.min()) * (1.0 + kVentricleGrowthPerLevel * severity);
}
}  // namespace phantom_geometry

inline void validate(const PhantomSpec& s) {
  require(s.severity >= 0 && s.severity < kSeverityLevels, Errc::invalid_argument, "severity must be in 0..4");
  require(s.nuisance_gain > 0.0 && std::isfinite(s.nuisance_gain), Errc::invalid_argument,
          "nuisance_gain must be positive");
  require(std::isfinite(s.texture_amplitude) && s.texture_amplitude >= 0.0, Errc::invalid_argument,
          "texture_amplitude must be finite and nonnegative");
  require(std::isfinite(s.bias_strength) && s.bias_strength >= 0.0 && s.bias_strength < 1.0, Errc::invalid_argument,
          "bias_strength must lie in [0, 1)");
  require(s.dims.min() >= 16, Errc::invalid_argument, "phantom dims must be at least 16 per axis");
}

/// Deterministic in the spec. Background 0; brain ellipsoid at 140*gain;
/// sinusoidal texture (random per-subject phase) on the outer ribbon of the
/// brain; central spherical ventricle at 40. Everything inside the brain is
/// then scaled by a linear bias field 1 + b*(u . p) with p in ellipsoid
/// coordinates and u a random per-subject unit direction.
inline Volume gen_phantom(const PhantomSpec& spec) {
  namespace g = phantom_geometry;
  validate(spec);
  const Dims3 d = spec.dims;

  std::mt19937_64 rng(spec.subject_seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double phx = phase_dist(rng), phy = phase_dist(rng), phz = phase_dist(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double ux = gauss(rng), uy = gauss(rng), uz = gauss(rng);
  const double un = std::sqrt(ux * ux + uy * uy + uz * uz);
  ux /= un;
  uy /= un;
  uz /= un;

  const double cx = 0.5 * static_cast<double>(d.nx - 1);
  const double cy = 0.5 * static_cast<double>(d.ny - 1);
  const double cz = 0.5 * static_cast<double>(d.nz - 1);
  const double ax = g::kBrainSemiAxisFraction * static_cast<double>(d.nx);
  const double ay = g::kBrainSemiAxisFraction * static_cast<double>(d.ny);
  const double az = g::kBrainSemiAxisFraction * static_cast<double>(d.nz);
  const double rv = g::ventricle_radius(d, spec.severity);
  const double omega = 2.0 * std::numbers::pi / (g::kTextureWavelengthFraction * static_cast<double>(d.min()));
  const double base = std::clamp(g::kBrainBaseIntensity * spec.nuisance_gain, 0.0, 255.0);

  Volume v(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double px = static_cast<double>(x) - cx;
        const double py = static_cast<double>(y) - cy;
        const double pz = static_cast<double>(z) - cz;
        const double rho2 = (px * px) / (ax * ax) + (py * py) / (ay * ay) + (pz * pz) / (az * az);
        if (rho2 > 1.0) continue;
        double value = base;
        if (px * px + py * py + pz * pz <= rv * rv) {
          value = g::kVentricleIntensity;
        } else if (rho2 >= g::kRibbonInnerRadius * g::kRibbonInnerRadius && spec.texture_amplitude > 0.0) {
          value += spec.texture_amplitude * std::sin(omega * static_cast<double>(x) + phx) *
                   std::sin(omega * static_cast<double>(y) + phy) * std::sin(omega * static_cast<double>(z) + phz);
        }
        if (spec.bias_strength > 0.0) value *= 1.0 + spec.bias_strength * (ux * px / ax + uy * py / ay + uz * pz / az);
        v.at(x, y, z) = static_cast<float>(std::clamp(value, 0.0, 255.0));
      }
  return v;
}

/// Number of voxels at the ventricle intensity inside the brain.
inline std::size_t ventricle_voxel_count(const Dims3& d, int severity) {
  const double rv = phantom_geometry::ventricle_radius(d, severity);
  const double cx = 0.5 * static_cast<double>(d.nx - 1);
  const double cy = 0.5 * static_cast<double>(d.ny - 1);
  const double cz = 0.5 * static_cast<double>(d.nz - 1);
  std::size_t n = 0;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double px = static_cast<double>(x) - cx, py = static_cast<double>(y) - cy,
                     pz = static_cast<double>(z) - cz;
        if (px * px + py * py + pz * pz <= rv * rv) ++n;
      }
  return n;
}

/// Nuisance ranges used when generating a corpus of subjects.
struct CorpusOptions {
  Dims3 dims{32, 32, 32};
  int count_per_class = 40;
  std::uint64_t seed = 1;
  double gain_min = 0.7;
  double gain_max = 1.3;
  double texture_amplitude_min = 8.0;
  double texture_amplitude_max = 12.0;
  double bias_min = 0.0;
  double bias_max = 0.5;
};

/// Subject specs for every severity level, class-major order. Each subject's
/// nuisance draws and seed come from one stream seeded by `opts.seed`.
inline std::vector<PhantomSpec> corpus_specs(const CorpusOptions& opts) {
  require(opts.count_per_class >= 1, Errc::invalid_argument, "count_per_class must be positive");
  require(opts.gain_min > 0.0 && opts.gain_min <= opts.gain_max, Errc::invalid_argument, "bad gain range");
  require(opts.texture_amplitude_min >= 0.0 && opts.texture_amplitude_min <= opts.texture_amplitude_max,
          Errc::invalid_argument, "bad texture amplitude range");
  require(opts.bias_min >= 0.0 && opts.bias_min <= opts.bias_max && opts.bias_max < 1.0, Errc::invalid_argument,
          "bad bias range");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> gain(opts.gain_min, opts.gain_max);
  std::uniform_real_distribution<double> amp(opts.texture_amplitude_min, opts.texture_amplitude_max);
  std::uniform_real_distribution<double> bias(opts.bias_min, opts.bias_max);
  std::vector<PhantomSpec> specs;
  specs.reserve(static_cast<std::size_t>(opts.count_per_class) * kSeverityLevels);
  for (int severity = 0; severity < kSeverityLevels; ++severity)
    for (int i = 0; i < opts.count_per_class; ++i) {
      PhantomSpec s;
      s.severity = severity;
      s.dims = opts.dims;
      s.subject_seed = rng();
      s.nuisance_gain = gain(rng);
      s.texture_amplitude = amp(rng);
      s.bias_strength = bias(rng);
      specs.push_back(s);
    }
  return specs;
}

}  // namespace ddcml
