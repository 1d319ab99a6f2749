#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ddcml/error.hpp"
#include "ddcml/evalx/kmeans.hpp"

namespace ddcml::evalx {

/// Symmetric matrix of distances between class-mean embeddings, divided by the
/// distance of the normalization pair.
struct CentroidMatrix {
  std::size_t classes = 0;
  std::vector<double> values;  // row-major classes x classes
  std::pair<std::size_t, std::size_t> normalization{0, 4};

  double operator()(std::size_t i, std::size_t j) const { return values[i * classes + j]; }
};

inline Point centroid(const std::vector<Point>& points) {
  require(!points.empty(), Errc::empty_input, "centroid of an empty class");
  Point c(points[0].size(), 0.0);
  for (const auto& p : points) {
    require(p.size() == c.size(), Errc::shape_mismatch, "embeddings differ in length");
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += p[j];
  }
  for (auto& v : c) v /= static_cast<double>(points.size());
  return c;
}

inline CentroidMatrix centroid_matrix(const std::vector<std::vector<Point>>& by_class,
                                      std::pair<std::size_t, std::size_t> normalize_pair = {0, 4}) {
  const std::size_t c = by_class.size();
  require(normalize_pair.first < c && normalize_pair.second < c && normalize_pair.first != normalize_pair.second,
          Errc::invalid_argument, "normalization pair outside the class range");
  std::vector<Point> cent;
  for (std::size_t i = 0; i < c; ++i) {
    require(!by_class[i].empty(), Errc::empty_input, "class " + std::to_string(i) + " has no embeddings");
    cent.push_back(centroid(by_class[i]));
  }
  const double unit = std::sqrt(squared_distance(cent[normalize_pair.first], cent[normalize_pair.second]));
  require(unit > 0.0, Errc::degenerate, "normalization pair shares one centroid");

  CentroidMatrix m{c, std::vector<double>(c * c, 0.0), normalize_pair};
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) {
      const double dij = std::sqrt(squared_distance(cent[i], cent[j])) / unit;
      m.values[i * c + j] = m.values[j * c + i] = dij;
    }
  // Exactly one, independent of rounding in the division above.
  m.values[normalize_pair.first * c + normalize_pair.second] = 1.0;
  m.values[normalize_pair.second * c + normalize_pair.first] = 1.0;
  return m;
}

/// Element-wise mean of matrices over folds.
inline CentroidMatrix mean_matrix(const std::vector<CentroidMatrix>& ms) {
  require(!ms.empty(), Errc::empty_input, "no matrices to average");
  CentroidMatrix out = ms[0];
  for (std::size_t k = 1; k < ms.size(); ++k)
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += ms[k].values[i];
  for (auto& v : out.values) v /= static_cast<double>(ms.size());
  return out;
}

}  // namespace ddcml::evalx
