#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "ddcml/nd/tensor.hpp"

namespace ddcml::nd {

/// Linear input indices of the selected voxel for every pooled output element.
using PoolIndices = std::vector<std::size_t>;

template <class T>
struct PoolResult {
  Tensor<T> output;
  std::shared_ptr<const PoolIndices> argmax;
};

/// 2x2x2 max-pooling with stride 2 over [C, D0, D1, D2]. Ties go to the
/// lowest linear index; backward routes each gradient to its argmax only.
template <class T>
PoolResult<T> maxpool3d(const Tensor<T>& input) {
  require(input.rank() == 4, Errc::shape_mismatch, "maxpool3d: input must be [C, D0, D1, D2]");
  const std::size_t C = input.dim(0), D0 = input.dim(1), D1 = input.dim(2), D2 = input.dim(3);
  require(D0 % 2 == 0 && D1 % 2 == 0 && D2 % 2 == 0, Errc::shape_mismatch,
          "maxpool3d: spatial dims must be even, got " + to_string(input.shape()));
  const std::size_t P0 = D0 / 2, P1 = D1 / 2, P2 = D2 / 2;
  auto idx = std::make_shared<PoolIndices>(C * P0 * P1 * P2);
  std::vector<T> out(idx->size());
  const auto x = input.data();
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < P0; ++i)
      for (std::size_t j = 0; j < P1; ++j)
        for (std::size_t k = 0; k < P2; ++k, ++o) {
          std::size_t best = ((c * D0 + 2 * i) * D1 + 2 * j) * D2 + 2 * k;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t d = 0; d < 2; ++d) {
                const std::size_t li = ((c * D0 + 2 * i + a) * D1 + 2 * j + b) * D2 + 2 * k + d;
                if (x[li] > x[best]) best = li;
              }
          (*idx)[o] = best;
          out[o] = x[best];
        }
  std::shared_ptr<const PoolIndices> argmax = idx;
  auto t = detail::make_result<T>(Shape{C, P0, P1, P2}, std::move(out), {input}, [argmax](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[(*argmax)[i]] += n.grad[i];
  }, "maxpool3d");
  return {std::move(t), std::move(argmax)};
}

/// Scatters each input element to its recorded index in a zero tensor of
/// `output_shape`.
template <class T>
Tensor<T> maxunpool3d(const Tensor<T>& input, std::shared_ptr<const PoolIndices> indices, const Shape& output_shape) {
  require(indices && indices->size() == input.size(), Errc::shape_mismatch,
          "maxunpool3d: need one index per input element");
  const std::size_t n_out = numel(output_shape);
  for (std::size_t i : *indices)
    require(i < n_out, Errc::index_out_of_range,
            "maxunpool3d: index " + std::to_string(i) + " outside output of " + std::to_string(n_out) + " elements");
  std::vector<T> out(n_out, T(0));
  const auto x = input.data();
  for (std::size_t i = 0; i < x.size(); ++i) out[(*indices)[i]] = x[i];
  return detail::make_result<T>(output_shape, std::move(out), {input}, [indices](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[(*indices)[i]];
  }, "maxunpool3d");
}

/// Indices of each 2x2x2 window's first voxel: the layout maxpool3d records
/// for a constant input. Used to unpool when no encoder indices exist.
inline std::shared_ptr<const PoolIndices> window_origin_indices(std::size_t C, std::size_t P0, std::size_t P1,
                                                                std::size_t P2) {
  auto idx = std::make_shared<PoolIndices>(C * P0 * P1 * P2);
  const std::size_t D0 = 2 * P0, D1 = 2 * P1, D2 = 2 * P2;
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < P0; ++i)
      for (std::size_t j = 0; j < P1; ++j)
        for (std::size_t k = 0; k < P2; ++k) (*idx)[o++] = ((c * D0 + 2 * i) * D1 + 2 * j) * D2 + 2 * k;
  return idx;
}

}  // namespace ddcml::nd
