#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ddcml/nd/tensor.hpp"

namespace ddcml::nd {

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch, "add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  }, "add");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.data()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [factor](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += factor * n.grad[i];
  }, "scale");
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (p.data[i] > T(0)) p.grad[i] += n.grad[i];
  }, "relu");
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(numel(shape) == a.size(), Errc::shape_mismatch,
          "reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {a}, [](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  }, "reshape");
}

template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  return reshape(a, Shape{a.size()});
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return detail::make_result<T>(Shape{}, {s}, {a}, [](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (auto& v : g) v += n.grad[0];
  }, "sum");
}

/// Weighted sum of elements, sum_i w_i a_i (handy for projecting a tensor onto
/// a fixed direction in gradient checks).
template <class T>
Tensor<T> dot_const(const Tensor<T>& a, std::span<const T> weights) {
  require(weights.size() == a.size(), Errc::shape_mismatch, "dot_const: length mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += weights[i] * a.data()[i];
  std::vector<T> w(weights.begin(), weights.end());
  return detail::make_result<T>(Shape{}, {s}, {a}, [w = std::move(w)](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i] * n.grad[0];
  }, "dot_const");
}

/// Mean of squared differences, (1/D) sum_d (a_d - b_d)^2.
template <class T>
Tensor<T> mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.size() == b.size(), Errc::shape_mismatch,
          "mean_squared_error: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  require(a.size() > 0, Errc::empty_input, "mean_squared_error of empty tensors");
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  const T inv = T(1) / static_cast<T>(a.size());
  return detail::make_result<T>(Shape{}, {s * inv}, {a, b}, [inv](detail::Node<T>& n) {
    const auto& pa = *n.parents[0];
    const auto& pb = *n.parents[1];
    const T c = T(2) * inv * n.grad[0];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < pa.data.size(); ++i) n.parents[0]->grad[i] += c * (pa.data[i] - pb.data[i]);
    if (pb.requires_grad)
      for (std::size_t i = 0; i < pb.data.size(); ++i) n.parents[1]->grad[i] -= c * (pa.data[i] - pb.data[i]);
  }, "mean_squared_error");
}

/// ||a - b||^2 as a scalar.
template <class T>
Tensor<T> squared_distance(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.size() == b.size(), Errc::shape_mismatch,
          "squared_distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return detail::make_result<T>(Shape{}, {s}, {a, b}, [](detail::Node<T>& n) {
    const auto& pa = *n.parents[0];
    const auto& pb = *n.parents[1];
    const T c = T(2) * n.grad[0];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < pa.data.size(); ++i) n.parents[0]->grad[i] += c * (pa.data[i] - pb.data[i]);
    if (pb.requires_grad)
      for (std::size_t i = 0; i < pb.data.size(); ++i) n.parents[1]->grad[i] -= c * (pa.data[i] - pb.data[i]);
  }, "squared_distance");
}

/// Concatenates scalars into a vector of shape [n].
template <class T>
Tensor<T> stack_scalars(const std::vector<Tensor<T>>& items) {
  std::vector<T> out;
  out.reserve(items.size());
  for (const auto& t : items) out.push_back(t.item());
  return detail::make_result<T>(Shape{items.size()}, std::move(out), items, [](detail::Node<T>& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i)
      if (n.parents[i]->requires_grad) n.parents[i]->grad[0] += n.grad[i];
  }, "stack_scalars");
}

/// Softmax of a vector with the maximum subtracted before exponentiation.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require(logits.rank() == 1 && logits.size() > 0, Errc::shape_mismatch, "softmax expects a nonempty vector");
  const auto x = logits.data();
  const T m = *std::max_element(x.begin(), x.end());
  std::vector<T> p(x.size());
  T total = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] = std::exp(x[i] - m));
  for (auto& v : p) v /= total;
  return detail::make_result<T>(logits.shape(), std::move(p), {logits}, [](detail::Node<T>& n) {
    // dL/dx_i = p_i (g_i - sum_j g_j p_j)
    T gp = T(0);
    for (std::size_t j = 0; j < n.data.size(); ++j) gp += n.grad[j] * n.data[j];
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < n.data.size(); ++i) g[i] += n.data[i] * (n.grad[i] - gp);
  }, "softmax");
}

/// -log(max(p[index], floor)). The gradient is zero where the floor is active.
template <class T>
Tensor<T> neg_log_at(const Tensor<T>& probs, std::size_t index, T floor) {
  require(index < probs.size(), Errc::index_out_of_range, "neg_log_at: index out of range");
  const T p = probs.data()[index];
  const bool clamped = p < floor;
  const T v = -std::log(clamped ? floor : p);
  return detail::make_result<T>(Shape{}, {v}, {probs}, [index, clamped](detail::Node<T>& n) {
    if (clamped) return;
    auto& parent = *n.parents[0];
    parent.grad[index] -= n.grad[0] / parent.data[index];
  }, "neg_log_at");
}

/// -log softmax(logits)[index] as log-sum-exp minus the selected logit. Stable
/// for any logit spread, so no floor is needed and the gradient
/// (softmax - onehot) never vanishes.
template <class T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, std::size_t index) {
  require(logits.rank() == 1 && logits.size() > 0, Errc::shape_mismatch, "cross_entropy_logits expects a nonempty vector");
  require(index < logits.size(), Errc::index_out_of_range, "cross_entropy_logits: index out of range");
  const auto x = logits.data();
  const T m = *std::max_element(x.begin(), x.end());
  std::vector<T> p(x.size());
  T total = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] = std::exp(x[i] - m));
  for (auto& v : p) v /= total;
  const T v = (m - x[index]) + std::log(total);
  return detail::make_result<T>(Shape{}, {v}, {logits}, [index, p = std::move(p)](detail::Node<T>& n) {
    auto& g = n.parents[0]->grad;
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += n.grad[0] * (p[i] - (i == index ? T(1) : T(0)));
  }, "cross_entropy_logits");
}

}  // namespace ddcml::nd
