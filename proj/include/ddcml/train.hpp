#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ddcml/cae.hpp"
#include "ddcml/error.hpp"
#include "ddcml/loss.hpp"
#include "ddcml/manifest.hpp"

namespace ddcml {

// ---------------------------------------------------------------------------
// Group k-fold

struct Fold {
  std::vector<std::size_t> train;  // indices into the case list
  std::vector<std::size_t> val;
};

struct FoldSplit {
  std::vector<Fold> folds;
};

/// Subject-grouped, class-stratified k-fold split. Subjects of each class
/// (a subject's class is that of its first case) are sorted, shuffled with
/// `seed`, and dealt round-robin to folds; the dealing position carries over
/// between classes so fold sizes stay balanced.
inline FoldSplit group_kfold(const std::vector<CaseRecord>& cases, int k, std::uint64_t seed) {
  require(k >= 2, Errc::invalid_argument, "k must be at least 2");
  std::map<std::string, int> subject_class;
  for (const auto& c : cases) subject_class.emplace(c.subject_id, c.class_label);

  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [subject, label] : subject_class) by_class[label].push_back(subject);

  std::mt19937_64 rng(seed);
  std::map<std::string, std::size_t> fold_of;
  std::size_t deal = 0;
  for (auto& [label, subjects] : by_class) {
    require(subjects.size() >= static_cast<std::size_t>(k), Errc::too_few_samples,
            "class " + std::to_string(label) + " has " + std::to_string(subjects.size()) +
                " subjects, fewer than k=" + std::to_string(k));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    for (const auto& s : subjects) fold_of[s] = deal++ % static_cast<std::size_t>(k);
  }

  FoldSplit split;
  split.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::size_t f = fold_of.at(cases[i].subject_id);
    for (std::size_t j = 0; j < split.folds.size(); ++j) (j == f ? split.folds[j].val : split.folds[j].train).push_back(i);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Batch sampling

/// Indices into a training set: one anchor and one exemplar per class, with
/// exemplar i drawn from class i.
struct BatchSample {
  std::size_t anchor = 0;
  std::vector<std::size_t> exemplars;
};

/// Draws an anchor uniformly from `labels` and, for every class, an exemplar
/// uniformly from that class excluding the anchor.
inline BatchSample sample_batch(const std::vector<int>& labels, int class_count, std::mt19937_64& rng) {
  require(!labels.empty(), Errc::empty_input, "empty training set");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < class_count, Errc::unknown_label, "training label out of range");
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < class_count; ++c)
    require(!members[static_cast<std::size_t>(c)].empty(), Errc::too_few_samples,
            "class " + std::to_string(c) + " has no training cases");

  BatchSample b;
  b.anchor = std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng);
  const int anchor_class = labels[b.anchor];
  for (int c = 0; c < class_count; ++c) {
    const auto& pool = members[static_cast<std::size_t>(c)];
    if (c != anchor_class) {
      b.exemplars.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
      continue;
    }
    require(pool.size() >= 2, Errc::too_few_samples,
            "class " + std::to_string(c) + " needs a second case to serve as the anchor's exemplar");
    // Uniform over the class minus the anchor.
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 2)(rng);
    const auto anchor_pos = static_cast<std::size_t>(std::find(pool.begin(), pool.end(), b.anchor) - pool.begin());
    if (pick >= anchor_pos) ++pick;
    b.exemplars.push_back(pool[pick]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  Adam(nd::ParamStore<T>& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
    for (const auto& [_, t] : params_) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step() { step(cfg_.learning_rate); }

  void step(double learning_rate) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& [_, p] : params_) {
      auto& m = m_[k];
      auto& v = v_[k];
      ++k;
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      auto w = p.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  nd::ParamStore<T>& params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int epochs = 30;
  int steps_per_epoch = 200;
  int anchors_per_step = 1;
  AdamConfig adam;
  // Constant-rate metric-learning runs can diverge late, after the
  // discriminative term saturates.
  LrSchedule schedule = LrSchedule::cosine;
  std::uint64_t rng_seed = 7;
  LossConfig loss;
};

inline void validate(const TrainConfig& c) {
  require(c.epochs >= 0, Errc::invalid_argument, "epochs must be nonnegative");
  require(c.steps_per_epoch >= 1, Errc::invalid_argument, "steps_per_epoch must be positive");
  require(c.anchors_per_step >= 1, Errc::invalid_argument, "anchors_per_step must be positive");
  require(c.adam.learning_rate > 0.0, Errc::invalid_argument, "learning_rate must be positive");
  validate(c.loss);
}

/// Learning rate of step `step` out of `total`: constant, or a half cosine
/// from the base rate down towards zero.
inline double scheduled_learning_rate(const TrainConfig& c, std::size_t step, std::size_t total) {
  if (c.schedule == LrSchedule::constant || total == 0) return c.adam.learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return c.adam.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// A preprocessed training case: network input plus its class slot.
template <class T>
struct TrainItem {
  nd::Tensor<T> input;
  int label = 0;
};

struct StepLoss {
  std::size_t step = 0;
  double recon = 0.0;
  double disc = 0.0;
  double total = 0.0;
};

using LossTrace = std::vector<StepLoss>;

/// Optimizes `model` in place. Each step draws anchors_per_step batches,
/// averages their total losses, backpropagates and takes one Adam step.
template <class T>
LossTrace fit(Model<T>& model, const std::vector<TrainItem<T>>& trainset, const TrainConfig& cfg,
              const std::function<void(const StepLoss&)>& on_step = {}) {
  validate(cfg);
  std::vector<int> labels;
  for (const auto& item : trainset) labels.push_back(item.label);
  require(!trainset.empty(), Errc::empty_input, "empty training set");

  std::mt19937_64 rng(cfg.rng_seed);
  Adam<T> adam(model.params(), cfg.adam);
  LossTrace trace;
  const std::size_t total_steps = static_cast<std::size_t>(cfg.epochs) * static_cast<std::size_t>(cfg.steps_per_epoch);
  trace.reserve(total_steps);
  const bool metric = cfg.loss.alpha > 0.0;
  const T inv_anchors = T(1) / static_cast<T>(cfg.anchors_per_step);

  for (std::size_t step = 0; step < total_steps; ++step) {
    model.params().zero_grad();
    StepLoss rec{step, 0.0, 0.0, 0.0};
    nd::Tensor<T> objective;
    for (int a = 0; a < cfg.anchors_per_step; ++a) {
      const auto batch = sample_batch(labels, cfg.loss.class_count, rng);
      const auto& anchor = trainset[batch.anchor];
      auto out = model.forward(anchor.input);
      std::vector<nd::Tensor<T>> exemplars;
      if (metric)
        for (auto idx : batch.exemplars) exemplars.push_back(model.encode(trainset[idx].input));
      auto terms = total_loss(anchor.input, out.reconstruction, out.embedding, exemplars, anchor.label, cfg.loss);
      auto scaled = cfg.anchors_per_step == 1 ? terms.total : nd::scale(terms.total, inv_anchors);
      objective = objective.defined() ? nd::add(objective, scaled) : scaled;
      rec.recon += terms.recon / cfg.anchors_per_step;
      rec.disc += terms.disc / cfg.anchors_per_step;
    }
    rec.total = static_cast<double>(objective.item());
    if (!std::isfinite(rec.total))
      throw Error(Errc::non_finite, "non-finite loss at step " + std::to_string(step) +
                                        " (recon=" + std::to_string(rec.recon) + ", disc=" + std::to_string(rec.disc) +
                                        ")");
    nd::backward(objective);
    adam.step(scheduled_learning_rate(cfg, step, total_steps));
    trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return trace;
}

inline void write_loss_trace(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write loss trace: " + path.string());
  os.precision(17);
  os << "step,recon_loss,disc_loss,total_loss\n";
  for (const auto& s : trace) os << s.step << ',' << s.recon << ',' << s.disc << ',' << s.total << '\n';
  if (!os) throw Error(Errc::io, "write failed: " + path.string());
}

/// Mean of the first and last `window` entries of the total loss.
inline std::pair<double, double> smoothed_endpoints(const LossTrace& trace, std::size_t window) {
  require(trace.size() >= window && window > 0, Errc::too_few_samples, "trace shorter than smoothing window");
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    head += trace[i].total;
    tail += trace[trace.size() - 1 - i].total;
  }
  return {head / static_cast<double>(window), tail / static_cast<double>(window)};
}

}  // namespace ddcml
