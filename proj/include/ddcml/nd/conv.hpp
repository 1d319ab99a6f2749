#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <memory>
#include <vector>

#include "ddcml/nd/tensor.hpp"

// Stride-1, zero "same"-padded 3D convolution (cross-correlation) and its
// transpose. Tensors are [C, D0, D1, D2] with D2 contiguous; weights are
// [A, B, k, k, k] where the convolution maps B input channels to A outputs.
namespace ddcml::nd {

namespace kernels {

// Kernels run on zero-padded copies of the feature maps so that every tap is a
// constant offset in the flattened buffer. Each channel is padded by k/2 on
// all sides; positions that fall on the padding are computed and discarded.
struct Geometry {
  std::array<std::size_t, 3> dims{};  // spatial extents
  std::size_t k = 1;

  std::size_t pad() const { return k / 2; }
  std::size_t voxels() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t taps() const { return k * k * k; }
  std::array<std::size_t, 3> padded() const { return {dims[0] + 2 * pad(), dims[1] + 2 * pad(), dims[2] + 2 * pad()}; }
  std::size_t padded_voxels() const {
    const auto p = padded();
    return p[0] * p[1] * p[2];
  }
  // Flat range [first, last) of padded positions covering the interior.
  std::size_t first() const {
    const auto p = padded();
    return (pad() * p[1] + pad()) * p[2] + pad();
  }
  std::size_t last() const {
    const auto p = padded();
    return ((dims[0] - 1 + pad()) * p[1] + dims[1] - 1 + pad()) * p[2] + dims[2] - 1 + pad() + 1;
  }
  // Flat offset of tap (t0, t1, t2) relative to the output position.
  std::ptrdiff_t offset(std::size_t t0, std::size_t t1, std::size_t t2) const {
    const auto p = padded();
    const auto h = static_cast<std::ptrdiff_t>(pad());
    return ((static_cast<std::ptrdiff_t>(t0) - h) * static_cast<std::ptrdiff_t>(p[1]) +
            (static_cast<std::ptrdiff_t>(t1) - h)) *
               static_cast<std::ptrdiff_t>(p[2]) +
           (static_cast<std::ptrdiff_t>(t2) - h);
  }
};

/// [C, D0, D1, D2] -> [C, padded...] with zero borders.
template <class T>
std::vector<T> pad_channels(const Geometry& g, std::size_t C, const T* src) {
  const auto p = g.padded();
  const std::size_t h = g.pad(), PV = g.padded_voxels(), V = g.voxels();
  std::vector<T> out(C * PV, T(0));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t x0 = 0; x0 < g.dims[0]; ++x0)
      for (std::size_t x1 = 0; x1 < g.dims[1]; ++x1) {
        const T* s = src + c * V + (x0 * g.dims[1] + x1) * g.dims[2];
        T* d = out.data() + c * PV + ((x0 + h) * p[1] + x1 + h) * p[2] + h;
        std::copy_n(s, g.dims[2], d);
      }
  return out;
}

/// Inverse of pad_channels; `accumulate` adds into dst instead of copying.
template <class T>
void unpad_channels(const Geometry& g, std::size_t C, const T* src, T* dst, bool accumulate) {
  const auto p = g.padded();
  const std::size_t h = g.pad(), PV = g.padded_voxels(), V = g.voxels();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t x0 = 0; x0 < g.dims[0]; ++x0)
      for (std::size_t x1 = 0; x1 < g.dims[1]; ++x1) {
        const T* s = src + c * PV + ((x0 + h) * p[1] + x1 + h) * p[2] + h;
        T* d = dst + c * V + (x0 * g.dims[1] + x1) * g.dims[2];
        if (accumulate)
          for (std::size_t j = 0; j < g.dims[2]; ++j) d[j] += s[j];
        else
          std::copy_n(s, g.dims[2], d);
      }
}

inline std::vector<std::ptrdiff_t> tap_offsets(const Geometry& g, bool negate) {
  std::vector<std::ptrdiff_t> off;
  off.reserve(g.taps());
  for (std::size_t t0 = 0; t0 < g.k; ++t0)
    for (std::size_t t1 = 0; t1 < g.k; ++t1)
      for (std::size_t t2 = 0; t2 < g.k; ++t2) off.push_back(negate ? -g.offset(t0, t1, t2) : g.offset(t0, t1, t2));
  return off;
}

// dst[i] += sum_t w[t] * src[i + off[t]] for i in [lo, hi), terms added in t
// order. The 27-tap case is unrolled so the sweep vectorizes over i.
template <class T>
void fused_taps(std::size_t lo, std::size_t hi, const T* __restrict w, const std::ptrdiff_t* off, std::size_t taps,
                const T* __restrict src, T* __restrict dst) {
  if (taps == 27) {
    const T* s[27];
    for (std::size_t t = 0; t < 27; ++t) s[t] = src + off[t];
    for (std::size_t i = lo; i < hi; ++i) {
      T acc = dst[i];
      acc += w[0] * s[0][i]; acc += w[1] * s[1][i]; acc += w[2] * s[2][i];
      acc += w[3] * s[3][i]; acc += w[4] * s[4][i]; acc += w[5] * s[5][i];
      acc += w[6] * s[6][i]; acc += w[7] * s[7][i]; acc += w[8] * s[8][i];
      acc += w[9] * s[9][i]; acc += w[10] * s[10][i]; acc += w[11] * s[11][i];
      acc += w[12] * s[12][i]; acc += w[13] * s[13][i]; acc += w[14] * s[14][i];
      acc += w[15] * s[15][i]; acc += w[16] * s[16][i]; acc += w[17] * s[17][i];
      acc += w[18] * s[18][i]; acc += w[19] * s[19][i]; acc += w[20] * s[20][i];
      acc += w[21] * s[21][i]; acc += w[22] * s[22][i]; acc += w[23] * s[23][i];
      acc += w[24] * s[24][i]; acc += w[25] * s[25][i]; acc += w[26] * s[26][i];
      dst[i] = acc;
    }
    return;
  }
  for (std::size_t t = 0; t < taps; ++t) {
    const T wv = w[t];
    const T* st = src + off[t];
    for (std::size_t i = lo; i < hi; ++i) dst[i] += wv * st[i];
  }
}

/// out[a][x] += sum_{b,t} w[a][b][t] * in[b][x + o(t)] on padded buffers;
/// per output voxel the terms are added in (b, t0, t1, t2) order.
template <class T>
void gather(const Geometry& g, std::size_t A, std::size_t B, const T* w, const T* in, T* out) {
  const std::size_t PV = g.padded_voxels(), KT = g.taps(), lo = g.first(), hi = g.last();
  const auto off = tap_offsets(g, false);
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      fused_taps(lo, hi, w + (a * B + b) * KT, off.data(), KT, in + b * PV, out + a * PV);
}

/// in_grad[b][x + o(t)] += w[a][b][t] * grad[a][x] (transpose of gather),
/// evaluated as a gather with negated offsets. `grad` must be zero on the
/// padding; only interior positions of `in_grad` are meaningful.
template <class T>
void scatter(const Geometry& g, std::size_t A, std::size_t B, const T* w, const T* grad, T* in_grad) {
  const std::size_t PV = g.padded_voxels(), KT = g.taps(), lo = g.first(), hi = g.last();
  const auto off = tap_offsets(g, true);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t a = 0; a < A; ++a)
      fused_taps(lo, hi, w + (a * B + b) * KT, off.data(), KT, grad + a * PV, in_grad + b * PV);
}

/// w_grad[a][b][t] += sum_x grad[a][x] * in[b][x + o(t)]. `grad` must be zero
/// on the padding.
template <class T>
void weight_grad(const Geometry& g, std::size_t A, std::size_t B, const T* grad, const T* in, T* w_grad) {
  const std::size_t PV = g.padded_voxels(), KT = g.taps(), lo = g.first(), hi = g.last();
  const auto off = tap_offsets(g, false);
  constexpr std::size_t L = 8;      // lanes of independent partial sums
  constexpr std::size_t G = 9;      // taps per sweep
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t0 = 0; t0 < KT; t0 += G) {
        const std::size_t nt = std::min(G, KT - t0);
        const T* __restrict ga = grad + a * PV;
        const T* s[G];
        for (std::size_t t = 0; t < nt; ++t) s[t] = in + b * PV + off[t0 + t];
        T part[G][L] = {};
        std::size_t i = lo;
        if (nt == G) {
          for (; i + L <= hi; i += L)
            for (std::size_t t = 0; t < G; ++t)
              for (std::size_t j = 0; j < L; ++j) part[t][j] += ga[i + j] * s[t][i + j];
        }
        for (std::size_t t = 0; t < nt; ++t) {
          T acc = T(0);
          for (std::size_t j = 0; j < L; ++j) acc += part[t][j];
          for (std::size_t r = i; r < hi; ++r) acc += ga[r] * s[t][r];
          w_grad[(a * B + b) * KT + t0 + t] += acc;
        }
      }
}

}  // namespace kernels

namespace detail {

template <class T>
kernels::Geometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                                std::size_t in_channels, std::size_t out_channels, const char* op) {
  require(input.rank() == 4, Errc::shape_mismatch, std::string(op) + ": input must be [C, D0, D1, D2]");
  require(weights.rank() == 5, Errc::shape_mismatch, std::string(op) + ": weights must be rank 5");
  const std::size_t k = weights.dim(2);
  require(weights.dim(3) == k && weights.dim(4) == k, Errc::shape_mismatch, std::string(op) + ": kernel must be cubic");
  require(k % 2 == 1, Errc::shape_mismatch, std::string(op) + ": kernel size must be odd");
  require(input.dim(0) == in_channels, Errc::shape_mismatch,
          std::string(op) + ": input has " + std::to_string(input.dim(0)) + " channels, weights expect " +
              std::to_string(in_channels));
  require(bias.rank() == 1 && bias.dim(0) == out_channels, Errc::shape_mismatch,
          std::string(op) + ": bias must have one entry per output channel");
  return kernels::Geometry{{input.dim(1), input.dim(2), input.dim(3)}, k};
}

}  // namespace detail

/// Cross-correlation. input [Ci, ...], weights [Co, Ci, k, k, k], bias [Co].
template <class T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(weights.rank() == 5, Errc::shape_mismatch, "conv3d: weights must be rank 5");
  const std::size_t Co = weights.dim(0), Ci = weights.dim(1);
  const auto g = detail::conv_geometry(input, weights, bias, Ci, Co, "conv3d");
  const std::size_t V = g.voxels(), PV = g.padded_voxels();
  const auto in_p = kernels::pad_channels(g, Ci, input.data().data());
  std::vector<T> out_p(Co * PV);
  for (std::size_t c = 0; c < Co; ++c) std::fill_n(out_p.begin() + c * PV, PV, bias.data()[c]);
  kernels::gather(g, Co, Ci, weights.data().data(), in_p.data(), out_p.data());
  std::vector<T> out(Co * V);
  kernels::unpad_channels(g, Co, out_p.data(), out.data(), false);
  return detail::make_result<T>(Shape{Co, g.dims[0], g.dims[1], g.dims[2]}, std::move(out), {input, weights, bias},
                                [g, Co, Ci, V](detail::Node<T>& n) {
    auto& in = *n.parents[0];
    auto& w = *n.parents[1];
    auto& b = *n.parents[2];
    const auto grad_p = kernels::pad_channels(g, Co, n.grad.data());
    if (in.requires_grad) {
      std::vector<T> gin_p(Ci * g.padded_voxels(), T(0));
      kernels::scatter(g, Co, Ci, w.data.data(), grad_p.data(), gin_p.data());
      kernels::unpad_channels(g, Ci, gin_p.data(), in.grad.data(), true);
    }
    if (w.requires_grad) {
      const auto in_p = kernels::pad_channels(g, Ci, in.data.data());
      kernels::weight_grad(g, Co, Ci, grad_p.data(), in_p.data(), w.grad.data());
    }
    if (b.requires_grad)
      for (std::size_t c = 0; c < Co; ++c) {
        T s = T(0);
        for (std::size_t i = 0; i < V; ++i) s += n.grad[c * V + i];
        b.grad[c] += s;
      }
  }, "conv3d");
}

/// Transposed convolution: the input-gradient map of conv3d used as a forward
/// map. input [A, ...], weights [A, B, k, k, k], bias [B] -> output [B, ...].
template <class T>
Tensor<T> deconv3d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(weights.rank() == 5, Errc::shape_mismatch, "deconv3d: weights must be rank 5");
  const std::size_t A = weights.dim(0), B = weights.dim(1);
  const auto g = detail::conv_geometry(input, weights, bias, A, B, "deconv3d");
  const std::size_t V = g.voxels(), PV = g.padded_voxels();
  const auto in_p = kernels::pad_channels(g, A, input.data().data());
  std::vector<T> out_p(B * PV, T(0));
  kernels::scatter(g, A, B, weights.data().data(), in_p.data(), out_p.data());
  std::vector<T> out(B * V);
  for (std::size_t c = 0; c < B; ++c) std::fill_n(out.begin() + c * V, V, bias.data()[c]);
  kernels::unpad_channels(g, B, out_p.data(), out.data(), true);
  return detail::make_result<T>(Shape{B, g.dims[0], g.dims[1], g.dims[2]}, std::move(out), {input, weights, bias},
                                [g, A, B, V, PV](detail::Node<T>& n) {
    auto& in = *n.parents[0];
    auto& w = *n.parents[1];
    auto& b = *n.parents[2];
    const auto grad_p = kernels::pad_channels(g, B, n.grad.data());
    if (in.requires_grad) {
      std::vector<T> gin_p(A * PV, T(0));
      kernels::gather(g, A, B, w.data.data(), grad_p.data(), gin_p.data());
      kernels::unpad_channels(g, A, gin_p.data(), in.grad.data(), true);
    }
    if (w.requires_grad) {
      const auto in_p = kernels::pad_channels(g, A, in.data.data());
      kernels::weight_grad(g, A, B, in_p.data(), grad_p.data(), w.grad.data());
    }
    if (b.requires_grad)
      for (std::size_t c = 0; c < B; ++c) {
        T s = T(0);
        for (std::size_t i = 0; i < V; ++i) s += n.grad[c * V + i];
        b.grad[c] += s;
      }
  }, "deconv3d");
}

}  // namespace ddcml::nd
