#pragma once

#include <span>
#include <vector>

#include "ddcml/cae.hpp"
#include "ddcml/error.hpp"
#include "ddcml/nd/ops.hpp"

namespace ddcml {

struct LossConfig {
  double alpha = 1.0;      // weight of the discriminative term
  int class_count = 2;     // classes seen by the discriminative term
};

inline void validate(const LossConfig& cfg) {
  require(cfg.alpha >= 0.0 && std::isfinite(cfg.alpha), Errc::invalid_argument, "alpha must be nonnegative");
  require(cfg.class_count >= 2, Errc::invalid_argument, "class_count must be at least 2");
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Reconstruction criterion: mean of squared voxel errors.
template <class T>
nd::Tensor<T> recon_loss(const nd::Tensor<T>& x, const nd::Tensor<T>& x_hat) {
  require(x.shape() == x_hat.shape(), Errc::shape_mismatch,
          "recon_loss: " + nd::to_string(x.shape()) + " vs " + nd::to_string(x_hat.shape()));
  return nd::mean_squared_error(x, x_hat);
}

/// Logits of the embedded similarity: -|z - z_i|^2 per exemplar.
template <class T>
nd::Tensor<T> similarity_logits(const nd::Tensor<T>& z, const std::vector<nd::Tensor<T>>& exemplars) {
  require(!exemplars.empty(), Errc::empty_input, "embedded_similarity needs at least one exemplar");
  std::vector<nd::Tensor<T>> logits;
  logits.reserve(exemplars.size());
  for (const auto& e : exemplars) {
    require(e.size() == z.size(), Errc::shape_mismatch,
            "embedded_similarity: exemplar length " + std::to_string(e.size()) + " vs " + std::to_string(z.size()));
    logits.push_back(nd::scale(nd::squared_distance(z, e), T(-1)));
  }
  return nd::stack_scalars(logits);
}

/// P_i = exp(-|z - z_i|^2) / sum_j exp(-|z - z_j|^2).
template <class T>
nd::Tensor<T> embedded_similarity(const nd::Tensor<T>& z, const std::vector<nd::Tensor<T>>& exemplars) {
  return nd::softmax(similarity_logits(z, exemplars));
}

/// Cross-entropy against the one-hot label: -log max(P_label, 1e-12).
template <class T>
nd::Tensor<T> discriminative_loss(const nd::Tensor<T>& probs, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < probs.size(), Errc::invalid_argument,
          "label " + std::to_string(label) + " outside 0.." + std::to_string(probs.size() - 1));
  return nd::neg_log_at(probs, static_cast<std::size_t>(label), static_cast<T>(kProbabilityFloor));
}

template <class T>
struct LossTerms {
  nd::Tensor<T> total;
  double recon = 0.0;
  double disc = 0.0;
};

/// recon + alpha * disc on one graph. With alpha == 0 the discriminative term
/// is skipped and `exemplars` may be empty.
///
/// The discriminative term is evaluated straight from the logits rather than
/// through discriminative_loss(P): same value wherever P_label >= 1e-12, but
/// without the floor, so an anchor that lands deep in the wrong class keeps a
/// gradient pulling it back instead of sitting at -log(1e-12) forever.
template <class T>
LossTerms<T> total_loss(const nd::Tensor<T>& x, const nd::Tensor<T>& x_hat, const nd::Tensor<T>& z,
                        const std::vector<nd::Tensor<T>>& exemplars, int label, const LossConfig& cfg) {
  validate(cfg);
  auto recon = recon_loss(x, x_hat);
  LossTerms<T> out{recon, static_cast<double>(recon.item()), 0.0};
  if (cfg.alpha == 0.0) return out;
  require(exemplars.size() == static_cast<std::size_t>(cfg.class_count), Errc::invalid_argument,
          "need one exemplar per class");
  require(label >= 0 && label < cfg.class_count, Errc::invalid_argument,
          "label " + std::to_string(label) + " outside 0.." + std::to_string(cfg.class_count - 1));
  auto disc = nd::cross_entropy_logits(similarity_logits(z, exemplars), static_cast<std::size_t>(label));
  out.disc = static_cast<double>(disc.item());
  out.total = nd::add(recon, nd::scale(disc, static_cast<T>(cfg.alpha)));
  return out;
}

/// Class membership probabilities of a finished embedding.
struct ProbVector {
  std::vector<double> values;
};

inline ProbVector embedded_similarity(const Embedding& z, std::span<const Embedding> exemplars) {
  std::vector<nd::Tensor<double>> ex;
  for (const auto& e : exemplars) ex.emplace_back(nd::Shape{e.size()}, e.values);
  const auto p = embedded_similarity(nd::Tensor<double>(nd::Shape{z.size()}, z.values), ex);
  return {std::vector<double>(p.data().begin(), p.data().end())};
}

}  // namespace ddcml
