#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "ddcml/error.hpp"
#include "ddcml/evalx/kmeans.hpp"

namespace ddcml::evalx {

/// Projects centered points onto their top two principal axes. Each axis is
/// oriented so its largest-magnitude loading is positive. Identical points
/// all map to (0, 0).
inline std::vector<std::pair<double, double>> project_2d(const std::vector<Point>& points) {
  require(points.size() >= 2, Errc::too_few_samples, "projection needs at least two points");
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto dim = static_cast<Eigen::Index>(points[0].size());
  Eigen::MatrixXd X(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<Eigen::Index>(points[static_cast<std::size_t>(i)].size()) == dim, Errc::shape_mismatch,
            "points differ in dimension");
    for (Eigen::Index j = 0; j < dim; ++j) X(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  X.rowwise() -= X.colwise().mean();

  std::vector<std::pair<double, double>> out(points.size(), {0.0, 0.0});
  if (X.cwiseAbs().maxCoeff() == 0.0) return out;

  const Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the last two columns.
  Eigen::MatrixXd axes(dim, 2);
  for (int a = 0; a < 2; ++a) {
    if (dim - 1 - a < 0) {
      axes.col(a).setZero();
      continue;
    }
    Eigen::VectorXd v = eig.eigenvectors().col(dim - 1 - a);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(a) = v;
  }
  const Eigen::MatrixXd proj = X * axes;
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = {proj(i, 0), proj(i, 1)};
  return out;
}

}  // namespace ddcml::evalx
