#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ddcml/error.hpp"
#include "ddcml/evalx/kmeans.hpp"
#include "ddcml/volume.hpp"

namespace ddcml::evalx {

/// Percentage agreement between a 2-way clustering and binary labels, maximized
/// over the two cluster-to-label mappings.
inline double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels) {
  require(assignments.size() == labels.size(), Errc::shape_mismatch, "assignments and labels differ in length");
  require(!labels.empty(), Errc::empty_input, "no labels");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, Errc::invalid_argument, "clustering accuracy needs binary labels");
    require(assignments[i] == 0 || assignments[i] == 1, Errc::invalid_argument, "expected a 2-way clustering");
    if (assignments[i] == labels[i]) ++agree;
  }
  const std::size_t best = std::max(agree, labels.size() - agree);
  return 100.0 * static_cast<double>(best) / static_cast<double>(labels.size());
}

struct SeededAccuracy {
  std::vector<double> per_seed;  // one accuracy per seed, in seed order
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline SeededAccuracy summarize(std::vector<double> values) {
  require(!values.empty(), Errc::empty_input, "nothing to summarize");
  SeededAccuracy s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  s.per_seed = std::move(values);
  return s;
}

inline constexpr int kDefaultSeeds = 10;

/// K-means (K=2) once per seed 0..seeds-1 (offset by `base_seed`), scoring
/// each run's clustering accuracy.
inline SeededAccuracy evaluate_with_seeds(const std::vector<Point>& points, const std::vector<int>& labels,
                                          int seeds = kDefaultSeeds, std::uint64_t base_seed = 0) {
  require(seeds >= 1, Errc::invalid_argument, "need at least one seed");
  std::vector<double> acc;
  for (int s = 0; s < seeds; ++s)
    acc.push_back(clustering_accuracy(kmeans(points, 2, base_seed + static_cast<std::uint64_t>(s)).assignments, labels));
  return summarize(std::move(acc));
}

/// "81.5(±2.76)": mean to one decimal, spread to two.
inline std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f(±%.2f)", mean, std);
  return buf;
}

/// Root mean squared voxel error on the [0,1] intensity scale, times 100.
inline double rmse_percent(const Volume& x, const Volume& x_hat) {
  require(x.dims() == x_hat.dims(), Errc::dimension_mismatch,
          "rmse_percent: " + to_string(x.dims()) + " vs " + to_string(x_hat.dims()));
  double ss = 0.0;
  const auto a = x.voxels(), b = x_hat.voxels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (static_cast<double>(a[i]) - static_cast<double>(b[i])) / 255.0;
    ss += d * d;
  }
  return 100.0 * std::sqrt(ss / static_cast<double>(a.size()));
}

inline constexpr std::size_t kSsimWindow = 7;

/// Mean SSIM over every 7x7x7 window (stride 1, windows fully inside the
/// volume) on the [0,255] scale, with uniform weights, population
/// (co)variances, C1 = (0.01*255)^2 and C2 = (0.03*255)^2.
inline double ssim(const Volume& x, const Volume& y, std::size_t window = kSsimWindow) {
  require(x.dims() == y.dims(), Errc::dimension_mismatch, "ssim: " + to_string(x.dims()) + " vs " + to_string(y.dims()));
  const Dims3 d = x.dims();
  require(window >= 1 && d.nx >= window && d.ny >= window && d.nz >= window, Errc::too_few_samples,
          "ssim: volume " + to_string(d) + " smaller than the window");
  const double C1 = (0.01 * 255.0) * (0.01 * 255.0), C2 = (0.03 * 255.0) * (0.03 * 255.0);

  // Summed-volume tables of x, y, x^2, y^2, xy with a zero border.
  const std::size_t sx = d.nx + 1, sy = d.ny + 1, sz = d.nz + 1;
  std::vector<double> tab[5];
  for (auto& t : tab) t.assign(sx * sy * sz, 0.0);
  auto at = [&](std::size_t i, std::size_t j, std::size_t k) { return i + sx * (j + sy * k); };
  for (std::size_t k = 1; k < sz; ++k)
    for (std::size_t j = 1; j < sy; ++j)
      for (std::size_t i = 1; i < sx; ++i) {
        const double a = x.at(i - 1, j - 1, k - 1), b = y.at(i - 1, j - 1, k - 1);
        const double v[5] = {a, b, a * a, b * b, a * b};
        for (int q = 0; q < 5; ++q) {
          auto& t = tab[q];
          t[at(i, j, k)] = v[q] + t[at(i - 1, j, k)] + t[at(i, j - 1, k)] + t[at(i, j, k - 1)] -
                           t[at(i - 1, j - 1, k)] - t[at(i - 1, j, k - 1)] - t[at(i, j - 1, k - 1)] +
                           t[at(i - 1, j - 1, k - 1)];
        }
      }
  auto box = [&](const std::vector<double>& t, std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t w = window;
    return t[at(i + w, j + w, k + w)] - t[at(i, j + w, k + w)] - t[at(i + w, j, k + w)] - t[at(i + w, j + w, k)] +
           t[at(i, j, k + w)] + t[at(i, j + w, k)] + t[at(i + w, j, k)] - t[at(i, j, k)];
  };

  const double n = static_cast<double>(window * window * window);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k + window <= d.nz; ++k)
    for (std::size_t j = 0; j + window <= d.ny; ++j)
      for (std::size_t i = 0; i + window <= d.nx; ++i) {
        const double mx = box(tab[0], i, j, k) / n, my = box(tab[1], i, j, k) / n;
        // Clamp tiny negative variances from cancellation in the tables.
        const double vx = std::max(0.0, box(tab[2], i, j, k) / n - mx * mx);
        const double vy = std::max(0.0, box(tab[3], i, j, k) / n - my * my);
        const double cxy = box(tab[4], i, j, k) / n - mx * my;
        total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        ++count;
      }
  return total / static_cast<double>(count);
}

}  // namespace ddcml::evalx
