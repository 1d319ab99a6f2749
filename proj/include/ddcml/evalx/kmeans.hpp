#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "ddcml/cae.hpp"
#include "ddcml/error.hpp"

namespace ddcml::evalx {

using Point = std::vector<double>;

inline double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<Point> centroids;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIter = 300;

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments stop
/// changing or after 300 iterations; an emptied cluster is re-seeded with the
/// point farthest from its current centroid. Distance ties go to the lowest
/// cluster index.
inline KMeansResult kmeans(const std::vector<Point>& points, int K, std::uint64_t seed) {
  require(K >= 1, Errc::invalid_argument, "K must be positive");
  require(points.size() >= static_cast<std::size_t>(K), Errc::too_few_samples,
          "kmeans needs at least K=" + std::to_string(K) + " points, got " + std::to_string(points.size()));
  const std::size_t n = points.size(), dim = points[0].size();
  for (const auto& p : points) {
    require(p.size() == dim, Errc::shape_mismatch, "kmeans points differ in dimension");
    for (double v : p) require(std::isfinite(v), Errc::non_finite, "kmeans point is not finite");
  }

  std::mt19937_64 rng(seed);
  KMeansResult r;
  r.centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (r.centroids.size() < static_cast<std::size_t>(K)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centroids) best = std::min(best, squared_distance(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    r.centroids.push_back(points[pick]);
  }

  r.assignments.assign(n, -1);
  for (int iter = 0; iter < kKMeansMaxIter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points[i], r.centroids[0]);
      for (int c = 1; c < K; ++c) {
        const double d = squared_distance(points[i], r.centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (r.assignments[i] != best) {
        r.assignments[i] = best;
        changed = true;
      }
    }
    r.iterations = iter + 1;
    if (!changed && iter > 0) break;

    std::vector<Point> sums(static_cast<std::size_t>(K), Point(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(K); ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = squared_distance(points[i], r.centroids[static_cast<std::size_t>(r.assignments[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        r.centroids[c] = points[far];
        r.assignments[far] = static_cast<int>(c);
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return r;
}

inline std::vector<Point> to_points(const std::vector<Embedding>& embeddings) {
  std::vector<Point> pts;
  pts.reserve(embeddings.size());
  for (const auto& e : embeddings) pts.push_back(e.values);
  return pts;
}

}  // namespace ddcml::evalx
