#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <set>

#include "ddcml/pipeline.hpp"
#include "support.hpp"

using namespace ddcml;
using namespace ddcml::pipeline;

namespace {

Dataset small_corpus(int per_class) {
  CorpusOptions opts;
  opts.dims = {16, 16, 16};
  opts.count_per_class = per_class;
  opts.seed = 5;
  Dataset d;
  int n = 0;
  for (const auto& s : corpus_specs(opts)) {
    const std::string subject = "sub" + std::to_string(n++);
    d.records.push_back({subject, s.severity, subject + ".vol"});
    d.volumes.push_back(normalize_intensity(gen_phantom(s)).volume);
  }
  return d;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.spec.input_dims = {16, 16, 16};
  cfg.spec.block_channels = {2, 3, 4, 4};
  cfg.folds = 3;
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = 20;
  cfg.eval_seeds = 4;
  cfg.retrieval_k = 3;
  return cfg;
}

const Dataset& corpus() {
  static const Dataset d = small_corpus(6);
  return d;
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

}  // namespace

TEST(Pipeline, MixSeedSeparatesFolds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t f = 0; f < 10; ++f) seen.insert(mix_seed(11, f));
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(mix_seed(11, 3), mix_seed(11, 3));
}

TEST(Pipeline, TrainingSlots) {
  const ExperimentConfig cfg;
  EXPECT_EQ(training_slot(cfg, 0), 0);
  EXPECT_EQ(training_slot(cfg, 4), 1);
  for (int l = 1; l < 4; ++l) EXPECT_EQ(training_slot(cfg, l), -1);
}

TEST(Pipeline, CaseIdJoinsSubjectAndFile) {
  EXPECT_EQ(case_id({"s01", 2, "/data/x/s01_a.vol"}), "s01:s01_a.vol");
}

TEST(Pipeline, PreprocessChainsCropAndNormalization) {
  PreprocessConfig cfg;
  cfg.factor = 2;
  cfg.target = {16, 16, 16};
  PhantomSpec s;
  s.dims = {40, 36, 34};
  s.nuisance_gain = 0.6;
  const auto out = preprocess(gen_phantom(s), cfg);
  EXPECT_EQ(out.dims(), (Dims3{16, 16, 16}));
  EXPECT_LE(std::abs(brain_mean(out) - 128.0), 0.5);
  cfg.normalize = false;
  cfg.factor = 0;
  const auto raw = ddcml::testing::random_volume({4, 4, 4}, 1);
  EXPECT_EQ(preprocess(raw, cfg), raw);
}

TEST(Pipeline, FoldEvaluationIsConsistent) {
  const auto& data = corpus();
  const auto cfg = small_config();
  const auto split = group_kfold(data.records, cfg.folds, cfg.split_seed);
  const auto& fold = split.folds[1];

  std::size_t steps = 0;
  auto fm = train_fold<float>(data, fold, 1, cfg, [&](const StepLoss&) { ++steps; });
  EXPECT_EQ(steps, 20u);
  EXPECT_EQ(fm.trace.size(), 20u);

  std::vector<Volume> recons;
  const auto ev = evaluate_fold(fm.model, data, fold, 1, cfg,
                                [&](const CaseRecord&, const Volume& v) { recons.push_back(v); });
  ASSERT_EQ(ev.cases.size(), fold.val.size());
  ASSERT_EQ(recons.size(), fold.val.size());

  // RMSE% recomputed from the reconstructions handed to the callback.
  double mse = 0.0;
  for (std::size_t i = 0; i < recons.size(); ++i) {
    const double r = evalx::rmse_percent(data.volumes[fold.val[i]], recons[i]) / 100.0;
    mse += r * r;
    EXPECT_NEAR(evalx::ssim(data.volumes[fold.val[i]], recons[i]), ev.cases[i].ssim, 1e-12);
  }
  EXPECT_NEAR(ev.rmse_percent, 100.0 * std::sqrt(mse / static_cast<double>(recons.size())), 1e-9);

  std::size_t extreme = 0;
  for (auto i : fold.val) extreme += training_slot(cfg, data.records[i].class_label) >= 0;
  EXPECT_GT(extreme, 0u);
  EXPECT_EQ(ev.accuracy.per_seed.size(), 4u);
  EXPECT_EQ(ev.centroids.classes, 5u);
  EXPECT_EQ(ev.centroids(0, 4), 1.0);
  EXPECT_EQ(ev.projection.size(), ev.cases.size());
  EXPECT_TRUE(ev.self_retrieval);
  EXPECT_GE(ev.retrieval_accuracy, 0.0);
  EXPECT_LE(ev.retrieval_accuracy, 100.0);
  for (const auto& c : ev.cases) EXPECT_EQ(c.embedding, fm.model.encode(data.volumes[fold.val[&c - ev.cases.data()]]));
}

TEST(Pipeline, ExperimentIsIndependentOfThreadCount) {
  const auto& data = corpus();
  auto cfg = small_config();
  cfg.train.steps_per_epoch = 5;
  std::vector<LossTrace> traces;
  const auto serial = run_experiment<float>(data, cfg, &traces);
  cfg.jobs = 3;
  const auto parallel = run_experiment<float>(data, cfg);
  ASSERT_EQ(traces.size(), 3u);
  EXPECT_EQ(serial.rmse_percent, parallel.rmse_percent);
  EXPECT_EQ(serial.accuracy.per_seed, parallel.accuracy.per_seed);
  EXPECT_EQ(serial.centroids.values, parallel.centroids.values);

  // Pooling: every (fold, seed) accuracy, every case's error.
  EXPECT_EQ(serial.accuracy.per_seed.size(), 12u);
  double mse = 0.0;
  std::size_t n = 0;
  for (const auto& f : serial.folds)
    for (const auto& c : f.cases) {
      mse += c.mse;
      ++n;
    }
  EXPECT_EQ(n, data.size());
  EXPECT_NEAR(serial.rmse_percent, 100.0 * std::sqrt(mse / static_cast<double>(n)), 1e-12);
}

TEST(Pipeline, ForEachFoldRethrows) {
  std::atomic<int> calls{0};
  EXPECT_THROW(for_each_fold(4, 2,
                             [&](std::size_t f) {
                               ++calls;
                               if (f == 2) throw Error(Errc::degenerate, "boom");
                             }),
               Error);
  EXPECT_GE(calls.load(), 3);
  std::vector<int> hit(5, 0);
  for_each_fold(5, 8, [&](std::size_t f) { ++hit[f]; });
  for (int h : hit) EXPECT_EQ(h, 1);
}

TEST(Pipeline, ReportWriters) {
  const auto& data = corpus();
  auto cfg = small_config();
  cfg.train.steps_per_epoch = 2;
  const auto r = run_experiment<float>(data, cfg);
  ddcml::testing::TempDir dir;
  write_report_csv(dir / "report.csv", r);
  write_seed_csv(dir / "seeds.csv", r);
  write_case_csv(dir / "cases.csv", r);
  write_centroids_csv(dir / "centroids.csv", r);
  write_projection_csv(dir / "projection.csv", r.folds[0]);
  EXPECT_EQ(first_line(dir / "report.csv"), "fold,rmse_percent,ssim,accuracy_mean,accuracy_std,retrieval_accuracy");
  EXPECT_EQ(first_line(dir / "seeds.csv"), "fold,seed,accuracy");
  EXPECT_EQ(first_line(dir / "cases.csv"), "fold,case_id,label,mse,ssim");
  EXPECT_EQ(first_line(dir / "centroids.csv"), "fold,class,c0,c1,c2,c3,c4");
  EXPECT_EQ(first_line(dir / "projection.csv"), "case_id,label,u,v");

  std::ifstream is(dir / "report.csv");
  std::string line, last;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 5u);
  EXPECT_EQ(last.rfind("all,", 0), 0u);

  const auto table = summary_table({{"plain", r}, {"ddcml", r}});
  EXPECT_NE(table.find("RMSE(%)"), std::string::npos);
  EXPECT_NE(table.find(evalx::format_mean_std(r.accuracy.mean, r.accuracy.std)), std::string::npos);
}
