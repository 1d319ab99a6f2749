#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ddcml/cae.hpp"
#include "ddcml/evalx/centroids.hpp"
#include "ddcml/evalx/metrics.hpp"
#include "ddcml/evalx/projection.hpp"
#include "ddcml/inorm.hpp"
#include "ddcml/manifest.hpp"
#include "ddcml/phantom.hpp"
#include "ddcml/retrieve.hpp"
#include "ddcml/train.hpp"
#include "ddcml/volume.hpp"

// Experiment-level plumbing shared by the command-line tool and the
// acceptance suite: preprocessing, per-fold training and the evaluation
// battery, plus the report writers.
namespace ddcml::pipeline {

struct PreprocessConfig {
  bool normalize = true;
  NormalizationConfig norm;
  std::size_t factor = 0;  // 0 disables crop/downsample
  Dims3 target{};
};

inline Volume preprocess(const Volume& v, const PreprocessConfig& cfg) {
  Volume out = cfg.factor > 0 ? crop_downsample(v, cfg.factor, cfg.target) : v;
  if (cfg.normalize) out = normalize_intensity(out, cfg.norm).volume;
  return out;
}

/// Cases with their (already preprocessed) volumes, index-aligned.
struct Dataset {
  std::vector<CaseRecord> records;
  std::vector<Volume> volumes;

  std::size_t size() const { return records.size(); }
};

inline Dataset load_dataset(const std::vector<CaseRecord>& records) {
  Dataset d;
  d.records = records;
  for (const auto& r : records) d.volumes.push_back(read_volume(r.volume_path));
  return d;
}

inline std::string case_id(const CaseRecord& r) {
  return r.subject_id + ":" + r.volume_path.filename().string();
}

struct ExperimentConfig {
  NetworkSpec spec = desk_spec();
  TrainConfig train;
  int folds = 5;
  std::uint64_t split_seed = 1;
  std::uint64_t init_seed = 11;
  int class_count = kSeverityLevels;
  std::pair<int, int> training_classes{0, kSeverityLevels - 1};
  int eval_seeds = evalx::kDefaultSeeds;
  std::size_t retrieval_k = 5;
  int jobs = 1;
};

/// splitmix64 finalizer; decorrelates per-fold seeds drawn from one base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Slot of a label among the training classes, or -1.
inline int training_slot(const ExperimentConfig& cfg, int label) {
  if (label == cfg.training_classes.first) return 0;
  if (label == cfg.training_classes.second) return 1;
  return -1;
}

template <class T>
struct FoldModel {
  Model<T> model;
  LossTrace trace;
};

/// Trains a fresh model on the fold's training cases of the two training
/// classes. Initialization and sampling seeds depend on the fold index only.
template <class T>
FoldModel<T> train_fold(const Dataset& data, const Fold& fold, std::size_t fold_index, const ExperimentConfig& cfg,
                        const std::function<void(const StepLoss&)>& on_step = {}) {
  auto model = Model<T>::build(cfg.spec, mix_seed(cfg.init_seed, fold_index));
  std::vector<TrainItem<T>> items;
  for (auto i : fold.train) {
    const int slot = training_slot(cfg, data.records[i].class_label);
    if (slot >= 0) items.push_back({model.to_input(data.volumes[i]), slot});
  }
  TrainConfig tc = cfg.train;
  tc.rng_seed = mix_seed(cfg.train.rng_seed, fold_index);
  tc.loss.class_count = 2;
  auto trace = fit(model, items, tc, on_step);
  return {std::move(model), std::move(trace)};
}

struct CaseResult {
  std::string case_id;
  int label = 0;
  Embedding embedding;
  double mse = 0.0;  // mean squared voxel error on the [0,1] scale
  double ssim = 0.0;
};

struct FoldEval {
  std::size_t fold = 0;
  double rmse_percent = 0.0;
  double ssim = 0.0;
  evalx::SeededAccuracy accuracy;
  evalx::CentroidMatrix centroids;
  double retrieval_accuracy = 0.0;  // top-k majority vote, ties excluded
  bool self_retrieval = true;
  std::vector<CaseResult> cases;
  std::vector<std::pair<double, double>> projection;
};

/// Runs the evaluation battery for one fold on its validation cases:
/// reconstruction metrics over all of them, K-means accuracy over the two
/// training classes, the centroid matrix over every class, a 2-D projection,
/// and k-NN retrieval of the training-class validation cases against an index
/// of the fold's training cases.
template <class T>
FoldEval evaluate_fold(const Model<T>& model, const Dataset& data, const Fold& fold, std::size_t fold_index,
                       const ExperimentConfig& cfg,
                       const std::function<void(const CaseRecord&, const Volume&)>& on_reconstruction = {}) {
  FoldEval ev;
  ev.fold = fold_index;
  std::vector<evalx::Point> binary_points, all_points;
  std::vector<int> binary_labels;
  std::vector<std::vector<evalx::Point>> by_class(static_cast<std::size_t>(cfg.class_count));
  double mse_sum = 0.0, ssim_sum = 0.0;

  for (auto i : fold.val) {
    const auto& rec = data.records[i];
    const auto& vol = data.volumes[i];
    const auto x = model.to_input(vol);
    const auto out = model.forward(x);
    const Volume recon = model.to_volume(out.reconstruction);
    if (on_reconstruction) on_reconstruction(rec, recon);

    CaseResult cr;
    cr.case_id = case_id(rec);
    cr.label = rec.class_label;
    cr.embedding.values.assign(out.embedding.data().begin(), out.embedding.data().end());
    const double r = evalx::rmse_percent(vol, recon) / 100.0;
    cr.mse = r * r;
    cr.ssim = evalx::ssim(vol, recon);
    mse_sum += cr.mse;
    ssim_sum += cr.ssim;

    all_points.push_back(cr.embedding.values);
    by_class.at(static_cast<std::size_t>(rec.class_label)).push_back(cr.embedding.values);
    if (const int slot = training_slot(cfg, rec.class_label); slot >= 0) {
      binary_points.push_back(cr.embedding.values);
      binary_labels.push_back(slot);
    }
    ev.cases.push_back(std::move(cr));
  }
  require(!ev.cases.empty(), Errc::empty_input, "fold has no validation cases");
  const double n = static_cast<double>(ev.cases.size());
  ev.rmse_percent = 100.0 * std::sqrt(mse_sum / n);
  ev.ssim = ssim_sum / n;
  ev.accuracy = evalx::evaluate_with_seeds(binary_points, binary_labels, cfg.eval_seeds);
  ev.centroids = evalx::centroid_matrix(by_class, {static_cast<std::size_t>(cfg.training_classes.first),
                                                   static_cast<std::size_t>(cfg.training_classes.second)});
  ev.projection = evalx::project_2d(all_points);

  EmbeddingIndex index(cfg.spec.embedding_dim());
  for (auto i : fold.train) {
    const auto& rec = data.records[i];
    if (training_slot(cfg, rec.class_label) >= 0)
      index.add({case_id(rec), rec.class_label, model.encode(data.volumes[i])});
  }
  for (const auto& e : index.entries()) {
    const auto hits = query(index, e.embedding, 1);
    if (hits.empty() || hits[0].case_id != e.case_id || hits[0].distance != 0.0) ev.self_retrieval = false;
  }
  std::size_t right = 0, voted = 0;
  for (const auto& c : ev.cases) {
    if (training_slot(cfg, c.label) < 0) continue;
    const int vote = majority_label(query(index, c.embedding, cfg.retrieval_k));
    if (vote < 0) continue;
    ++voted;
    if (vote == c.label) ++right;
  }
  ev.retrieval_accuracy = voted == 0 ? 0.0 : 100.0 * static_cast<double>(right) / static_cast<double>(voted);
  return ev;
}

struct EvalReport {
  std::vector<FoldEval> folds;
  double rmse_percent = 0.0;
  double ssim = 0.0;
  evalx::SeededAccuracy accuracy;  // pooled over folds and seeds
  evalx::CentroidMatrix centroids;  // element-wise mean over folds
  double retrieval_accuracy = 0.0;
  bool self_retrieval = true;
};

inline EvalReport aggregate(std::vector<FoldEval> folds) {
  require(!folds.empty(), Errc::empty_input, "no folds to aggregate");
  EvalReport r;
  double mse = 0.0, ssim = 0.0, retrieval = 0.0;
  std::size_t cases = 0;
  std::vector<double> acc;
  std::vector<evalx::CentroidMatrix> mats;
  for (const auto& f : folds) {
    for (const auto& c : f.cases) {
      mse += c.mse;
      ssim += c.ssim;
      ++cases;
    }
    acc.insert(acc.end(), f.accuracy.per_seed.begin(), f.accuracy.per_seed.end());
    mats.push_back(f.centroids);
    retrieval += f.retrieval_accuracy;
    r.self_retrieval = r.self_retrieval && f.self_retrieval;
  }
  r.rmse_percent = 100.0 * std::sqrt(mse / static_cast<double>(cases));
  r.ssim = ssim / static_cast<double>(cases);
  r.accuracy = evalx::summarize(std::move(acc));
  r.centroids = evalx::mean_matrix(mats);
  r.retrieval_accuracy = retrieval / static_cast<double>(folds.size());
  r.folds = std::move(folds);
  return r;
}

/// Calls fn(fold_index) for every fold, spreading folds over `jobs` threads.
/// Results must not depend on scheduling: each fold owns its seeds.
inline void for_each_fold(std::size_t folds, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(folds, static_cast<std::size_t>(std::max(jobs, 1))));
  if (workers == 1) {
    for (std::size_t f = 0; f < folds; ++f) fn(f);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t f = w; f < folds; f += workers) fn(f);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Trains and evaluates every fold in memory.
template <class T>
EvalReport run_experiment(const Dataset& data, const ExperimentConfig& cfg, std::vector<LossTrace>* traces = nullptr) {
  const auto split = group_kfold(data.records, cfg.folds, cfg.split_seed);
  std::vector<FoldEval> evals(split.folds.size());
  std::vector<LossTrace> local(split.folds.size());
  for_each_fold(split.folds.size(), cfg.jobs, [&](std::size_t f) {
    auto fm = train_fold<T>(data, split.folds[f], f, cfg);
    evals[f] = evaluate_fold(fm.model, data, split.folds[f], f, cfg);
    local[f] = std::move(fm.trace);
  });
  if (traces) *traces = std::move(local);
  return aggregate(std::move(evals));
}

// ---------------------------------------------------------------------------
// Report files

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + p.string());
  os.precision(10);
  return os;
}

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& r) {
  auto os = open_out(path);
  os << "fold,rmse_percent,ssim,accuracy_mean,accuracy_std,retrieval_accuracy\n";
  for (const auto& f : r.folds)
    os << f.fold << ',' << f.rmse_percent << ',' << f.ssim << ',' << f.accuracy.mean << ',' << f.accuracy.std << ','
       << f.retrieval_accuracy << '\n';
  os << "all," << r.rmse_percent << ',' << r.ssim << ',' << r.accuracy.mean << ',' << r.accuracy.std << ','
     << r.retrieval_accuracy << '\n';
}

inline void write_seed_csv(const std::filesystem::path& path, const EvalReport& r) {
  auto os = open_out(path);
  os << "fold,seed,accuracy\n";
  for (const auto& f : r.folds)
    for (std::size_t s = 0; s < f.accuracy.per_seed.size(); ++s) os << f.fold << ',' << s << ',' << f.accuracy.per_seed[s] << '\n';
}

inline void write_case_csv(const std::filesystem::path& path, const EvalReport& r) {
  auto os = open_out(path);
  os.precision(17);
  os << "fold,case_id,label,mse,ssim\n";
  for (const auto& f : r.folds)
    for (const auto& c : f.cases) os << f.fold << ',' << c.case_id << ',' << c.label << ',' << c.mse << ',' << c.ssim << '\n';
}

inline void write_centroids_csv(const std::filesystem::path& path, const EvalReport& r) {
  auto os = open_out(path);
  const std::size_t c = r.centroids.classes;
  os << "fold,class";
  for (std::size_t j = 0; j < c; ++j) os << ",c" << j;
  os << '\n';
  auto rows = [&](const std::string& tag, const evalx::CentroidMatrix& m) {
    for (std::size_t i = 0; i < c; ++i) {
      os << tag << ',' << i;
      for (std::size_t j = 0; j < c; ++j) os << ',' << m(i, j);
      os << '\n';
    }
  };
  for (const auto& f : r.folds) rows(std::to_string(f.fold), f.centroids);
  rows("mean", r.centroids);
}

inline void write_projection_csv(const std::filesystem::path& path, const FoldEval& f) {
  auto os = open_out(path);
  os << "case_id,label,u,v\n";
  for (std::size_t i = 0; i < f.cases.size(); ++i)
    os << f.cases[i].case_id << ',' << f.cases[i].label << ',' << f.projection[i].first << ','
       << f.projection[i].second << '\n';
}

/// Plain-text table: one row per model with RMSE(%), SSIM and clustering
/// accuracy as mean(±std).
inline std::string summary_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %10s %8s %28s\n", "", "RMSE(%)", "SSIM", "clustering accuracy(%)");
  out += line;
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof line, "%-24s %10.2f %8.3f %28s\n", name.c_str(), r.rmse_percent, r.ssim,
                  evalx::format_mean_std(r.accuracy.mean, r.accuracy.std).c_str());
    out += line;
  }
  return out;
}

}  // namespace ddcml::pipeline
