// ddcml: phantom generation, preprocessing, training, evaluation and
// retrieval from the command line.
//
// Options can also come from a `key = value` config file given with
// --config before the subcommand; keys for a subcommand go under a
// `[subcommand]` section. Flags on the command line win.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddcml/checkpoint.hpp"
#include "ddcml/phantom.hpp"
#include "ddcml/pipeline.hpp"
#include "ddcml/retrieve.hpp"

namespace fs = std::filesystem;
using namespace ddcml;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 2;
constexpr int kExitUsage = 64;
constexpr int kExitNumeric = 70;

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::non_finite:
      return kExitNumeric;
    case Errc::invalid_argument:
      return kExitUsage;
    default:
      return kExitData;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("ddcml");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("DDCML_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

Dims3 to_dims(const std::vector<std::size_t>& v) { return {v.at(0), v.at(1), v.at(2)}; }

struct SpecOptions {
  std::string preset = "desk";
  std::vector<std::size_t> input_dims;
  std::vector<std::size_t> channels;

  void add(CLI::App* app) {
    app->add_option("--spec", preset, "network preset")->check(CLI::IsMember({"desk", "full"}));
    app->add_option("--input-dims", input_dims, "override input size: nx ny nz")->expected(3);
    app->add_option("--channels", channels, "override per-block channels (4 values)")->expected(4);
  }

  NetworkSpec resolve() const {
    NetworkSpec s = preset == "full" ? full_spec() : desk_spec();
    if (!input_dims.empty()) s.input_dims = to_dims(input_dims);
    if (!channels.empty()) std::copy(channels.begin(), channels.end(), s.block_channels.begin());
    validate(s);
    return s;
  }
};

struct SplitOptions {
  int folds = 5;
  std::uint64_t split_seed = 1;
  std::string precision = "float";

  void add(CLI::App* app) {
    app->add_option("--folds", folds, "number of cross-validation folds")->check(CLI::Range(2, 100));
    app->add_option("--split-seed", split_seed, "seed of the subject-to-fold assignment");
    app->add_option("--precision", precision, "network arithmetic")->check(CLI::IsMember({"float", "double"}));
  }
};

fs::path checkpoint_path(const fs::path& dir, std::size_t fold) { return dir / ("fold" + std::to_string(fold) + ".ddck"); }

// ---------------------------------------------------------------------------

struct PhantomArgs {
  fs::path out;
  CorpusOptions corpus;
  std::vector<std::size_t> dims{32, 32, 32};
};

int cmd_phantom_gen(const PhantomArgs& a) {
  CorpusOptions opts = a.corpus;
  opts.dims = to_dims(a.dims);
  const auto specs = corpus_specs(opts);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw Error(Errc::io, "cannot create " + a.out.string() + ": " + ec.message());

  std::vector<CaseRecord> records;
  std::vector<std::size_t> per_class(kSeverityLevels, 0);
  for (const auto& s : specs) {
    char name[64];
    std::snprintf(name, sizeof name, "sev%d_sub%03zu", s.severity, per_class[s.severity]++);
    const fs::path file = a.out / (std::string(name) + ".vol");
    write_volume(gen_phantom(s), file);
    records.push_back({name, s.severity, file});
  }
  write_manifest(a.out / "manifest.csv", records);
  spdlog::info("wrote {} phantoms and {}", records.size(), (a.out / "manifest.csv").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  fs::path manifest;
  fs::path out;
  NormalizationConfig norm;
  std::size_t factor = 0;
  std::vector<std::size_t> target;
};

pipeline::PreprocessConfig preprocess_config(const NormalizationConfig& norm, std::size_t factor,
                                             const std::vector<std::size_t>& target) {
  pipeline::PreprocessConfig cfg;
  cfg.norm = norm;
  validate(cfg.norm);
  cfg.factor = factor;
  if (factor > 0) {
    if (target.size() != 3) throw Error(Errc::invalid_argument, "--factor needs --target nx ny nz");
    cfg.target = to_dims(target);
  }
  return cfg;
}

int cmd_preprocess(const PreprocessArgs& a) {
  const auto cfg = preprocess_config(a.norm, a.factor, a.target);
  const auto records = load_manifest(a.manifest);
  const fs::path out_dir = a.out.empty() ? a.manifest.parent_path() : a.out;
  fs::create_directories(out_dir);

  std::vector<CaseRecord> written;
  std::size_t failed = 0;
  for (const auto& r : records) {
    try {
      const auto vol = pipeline::preprocess(read_volume(r.volume_path), cfg);
      const fs::path dst = out_dir / (r.volume_path.stem().string() + ".norm.vol");
      write_volume(vol, dst);
      written.push_back({r.subject_id, r.class_label, dst});
    } catch (const Error& e) {
      ++failed;
      spdlog::error("{} ({}): {}", r.volume_path.string(), to_string(e.code()), e.what());
    }
  }
  const fs::path manifest_out = out_dir / "manifest.norm.csv";
  write_manifest(manifest_out, written);
  spdlog::info("preprocessed {} of {} cases into {}", written.size(), records.size(), manifest_out.string());
  return failed == 0 ? kExitOk : kExitData;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  SpecOptions spec;
  SplitOptions split;
  TrainConfig train;
  std::uint64_t init_seed = 11;
  int jobs = 1;
};

pipeline::ExperimentConfig experiment(const SpecOptions& spec, const SplitOptions& split) {
  pipeline::ExperimentConfig cfg;
  cfg.spec = spec.resolve();
  cfg.folds = split.folds;
  cfg.split_seed = split.split_seed;
  return cfg;
}

template <class T>
void train_all(const TrainArgs& a, const pipeline::Dataset& data, const pipeline::ExperimentConfig& cfg) {
  const auto split = group_kfold(data.records, cfg.folds, cfg.split_seed);
  pipeline::for_each_fold(split.folds.size(), cfg.jobs, [&](std::size_t f) {
    const std::size_t total = static_cast<std::size_t>(cfg.train.epochs) * cfg.train.steps_per_epoch;
    auto fm = pipeline::train_fold<T>(data, split.folds[f], f, cfg, [&](const StepLoss& s) {
      if ((s.step + 1) % cfg.train.steps_per_epoch == 0)
        spdlog::info("fold {} step {}/{} recon {:.5f} disc {:.5f}", f, s.step + 1, total, s.recon, s.disc);
    });
    save_checkpoint(fm.model, checkpoint_path(a.out, f));
    write_loss_trace(a.out / ("loss_fold" + std::to_string(f) + ".csv"), fm.trace);
    spdlog::info("fold {} done", f);
  });
}

int cmd_train(const TrainArgs& a) {
  auto cfg = experiment(a.spec, a.split);
  cfg.train = a.train;
  validate(cfg.train);
  cfg.init_seed = a.init_seed;
  cfg.jobs = a.jobs;
  const auto data = pipeline::load_dataset(load_manifest(a.manifest));
  fs::create_directories(a.out);
  spdlog::info("training {} folds, alpha {}, {} parameters", cfg.folds, cfg.train.loss.alpha, parameter_count(cfg.spec));
  if (a.split.precision == "double")
    train_all<double>(a, data, cfg);
  else
    train_all<float>(a, data, cfg);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  fs::path manifest;
  fs::path checkpoints;
  fs::path out;
  SplitOptions split;
  int seeds = evalx::kDefaultSeeds;
  std::size_t k = 5;
  std::string name = "model";
  bool save_reconstructions = false;
};

template <class T>
pipeline::EvalReport evaluate_all(const EvaluateArgs& a, const pipeline::Dataset& data,
                                  pipeline::ExperimentConfig cfg) {
  const auto split = group_kfold(data.records, cfg.folds, cfg.split_seed);
  std::vector<pipeline::FoldEval> evals;
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    auto model = load_checkpoint<T>(checkpoint_path(a.checkpoints, f));
    if (f == 0) cfg.spec = model.spec();
    if (!(model.spec() == cfg.spec))
      throw Error(Errc::spec_mismatch, "fold checkpoints were written for different network specs");
    const fs::path recon_dir = a.out / "reconstructions";
    if (a.save_reconstructions) fs::create_directories(recon_dir);
    evals.push_back(pipeline::evaluate_fold(model, data, split.folds[f], f, cfg,
                                            [&](const CaseRecord& r, const Volume& v) {
                                              if (a.save_reconstructions)
                                                write_volume(v, recon_dir / (r.volume_path.stem().string() + ".recon.vol"));
                                            }));
    spdlog::info("fold {}: accuracy {} rmse {:.2f}% ssim {:.3f}", f,
                 evalx::format_mean_std(evals.back().accuracy.mean, evals.back().accuracy.std),
                 evals.back().rmse_percent, evals.back().ssim);
  }
  return pipeline::aggregate(std::move(evals));
}

int cmd_evaluate(const EvaluateArgs& a) {
  pipeline::ExperimentConfig cfg;
  cfg.folds = a.split.folds;
  cfg.split_seed = a.split.split_seed;
  cfg.eval_seeds = a.seeds;
  cfg.retrieval_k = a.k;
  const auto data = pipeline::load_dataset(load_manifest(a.manifest));
  fs::create_directories(a.out);
  const auto report = a.split.precision == "double" ? evaluate_all<double>(a, data, cfg) : evaluate_all<float>(a, data, cfg);

  pipeline::write_report_csv(a.out / "report.csv", report);
  pipeline::write_seed_csv(a.out / "seeds.csv", report);
  pipeline::write_case_csv(a.out / "cases.csv", report);
  pipeline::write_centroids_csv(a.out / "centroids.csv", report);
  for (const auto& f : report.folds)
    pipeline::write_projection_csv(a.out / ("projection_fold" + std::to_string(f.fold) + ".csv"), f);
  const auto table = pipeline::summary_table({{a.name, report}});
  pipeline::open_out(a.out / "summary.txt") << table;
  std::cout << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct IndexArgs {
  fs::path manifest;
  fs::path checkpoint;
  fs::path out;
  std::string precision = "float";
};

template <class T>
int build_and_save_index(const IndexArgs& a) {
  const auto model = load_checkpoint<T>(a.checkpoint);
  std::vector<IndexCase> cases;
  for (const auto& r : load_manifest(a.manifest))
    cases.push_back({pipeline::case_id(r), r.class_label, read_volume(r.volume_path)});
  const auto index = build_index(cases, model);
  save_index(index, a.out);
  spdlog::info("indexed {} cases of dimension {} into {}", index.size(), index.dim(), a.out.string());
  return kExitOk;
}

struct RetrieveArgs {
  fs::path index;
  fs::path checkpoint;
  fs::path query_volume;
  std::size_t k = 5;
  NormalizationConfig norm;
  std::size_t factor = 0;
  std::vector<std::size_t> target;
  std::string precision = "float";
};

template <class T>
int retrieve(const RetrieveArgs& a) {
  const auto index = load_index(a.index);
  const auto model = load_checkpoint<T>(a.checkpoint);
  const auto cfg = preprocess_config(a.norm, a.factor, a.target);
  const auto z = model.encode(pipeline::preprocess(read_volume(a.query_volume), cfg));
  const auto hits = query(index, z, a.k);
  std::printf("rank,case_id,label,distance\n");
  for (std::size_t i = 0; i < hits.size(); ++i)
    std::printf("%zu,%s,%d,%.17g\n", i + 1, hits[i].case_id.c_str(), hits[i].class_label, hits[i].distance);
  return kExitOk;
}

void add_norm_options(CLI::App* app, NormalizationConfig& norm, std::size_t& factor, std::vector<std::size_t>& target) {
  app->add_option("--mu", norm.mu, "target brain mean intensity");
  app->add_option("--epsilon", norm.epsilon, "tolerance on the brain mean");
  app->add_option("--max-iter", norm.max_iter, "iteration cap");
  app->add_option("--factor", factor, "block-mean downsampling factor (0: none)");
  app->add_option("--target", target, "center-crop size after downsampling: nx ny nz")->expected(3);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Severity-aware volumetric image embedding, clustering and retrieval"};
  app.set_config("--config", "", "key = value file; [subcommand] sections");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* gen = app.add_subcommand("phantom-gen", "write a synthetic phantom corpus and its manifest");
  gen->add_option("--out", pa.out, "output directory")->required();
  gen->add_option("--count-per-class", pa.corpus.count_per_class, "subjects per severity level")->check(CLI::PositiveNumber);
  gen->add_option("--seed", pa.corpus.seed, "corpus seed");
  gen->add_option("--dims", pa.dims, "volume size: nx ny nz")->expected(3);
  gen->add_option("--gain-min", pa.corpus.gain_min, "lowest intensity gain");
  gen->add_option("--gain-max", pa.corpus.gain_max, "highest intensity gain");
  gen->add_option("--texture-min", pa.corpus.texture_amplitude_min, "lowest cortical texture amplitude");
  gen->add_option("--texture-max", pa.corpus.texture_amplitude_max, "highest cortical texture amplitude");
  gen->add_option("--bias-min", pa.corpus.bias_min, "weakest intensity bias field");
  gen->add_option("--bias-max", pa.corpus.bias_max, "strongest intensity bias field");

  PreprocessArgs pp;
  auto* pre = app.add_subcommand("preprocess", "intensity-normalize (and optionally downsample) every case");
  pre->add_option("--manifest", pp.manifest, "input manifest")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pp.out, "output directory (default: next to the manifest)");
  add_norm_options(pre, pp.norm, pp.factor, pp.target);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit one model per cross-validation fold");
  train->add_option("--manifest", ta.manifest, "manifest of preprocessed cases")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "checkpoint directory")->required();
  ta.spec.add(train);
  ta.split.add(train);
  train->add_option("--alpha", ta.train.loss.alpha, "weight of the metric-learning term (0: plain autoencoder)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--epochs", ta.train.epochs, "epochs");
  train->add_option("--steps-per-epoch", ta.train.steps_per_epoch, "optimizer steps per epoch");
  train->add_option("--anchors-per-step", ta.train.anchors_per_step, "anchors averaged per step");
  train->add_option("--lr", ta.train.adam.learning_rate, "Adam learning rate");
  train->add_option("--lr-schedule", ta.train.schedule, "learning-rate schedule")
      ->transform(CLI::CheckedTransformer(std::map<std::string, LrSchedule>{{"constant", LrSchedule::constant},
                                                                           {"cosine", LrSchedule::cosine}}))
      ->option_text("{constant,cosine}");
  train->add_option("--seed", ta.train.rng_seed, "sampling seed");
  train->add_option("--init-seed", ta.init_seed, "weight initialization seed");
  train->add_option("--jobs", ta.jobs, "folds trained in parallel")->check(CLI::PositiveNumber);

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "score fold checkpoints on their held-out cases");
  eval->add_option("--manifest", ea.manifest, "manifest of preprocessed cases")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoints", ea.checkpoints, "directory written by train")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", ea.out, "report directory")->required();
  ea.split.add(eval);
  eval->add_option("--seeds", ea.seeds, "K-means seeds per fold")->check(CLI::PositiveNumber);
  eval->add_option("--k", ea.k, "neighbours in the retrieval vote")->check(CLI::PositiveNumber);
  eval->add_option("--name", ea.name, "row label in summary.txt");
  eval->add_flag("--save-reconstructions", ea.save_reconstructions, "write reconstructed volumes");

  IndexArgs ia;
  auto* idx = app.add_subcommand("index", "embed a manifest into a retrieval index");
  idx->add_option("--manifest", ia.manifest, "manifest of preprocessed cases")->required()->check(CLI::ExistingFile);
  idx->add_option("--checkpoint", ia.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  idx->add_option("--out", ia.out, "index file")->required();
  idx->add_option("--precision", ia.precision, "network arithmetic")->check(CLI::IsMember({"float", "double"}));

  RetrieveArgs ra;
  auto* ret = app.add_subcommand("retrieve", "rank indexed cases by embedding distance to a query volume");
  ret->add_option("--index", ra.index, "index file")->required()->check(CLI::ExistingFile);
  ret->add_option("--checkpoint", ra.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  ret->add_option("--query", ra.query_volume, "query volume (raw; preprocessed here)")->required()->check(CLI::ExistingFile);
  ret->add_option("--k", ra.k, "neighbours to report")->check(CLI::PositiveNumber);
  ret->add_option("--precision", ra.precision, "network arithmetic")->check(CLI::IsMember({"float", "double"}));
  add_norm_options(ret, ra.norm, ra.factor, ra.target);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_phantom_gen(pa);
    if (*pre) return cmd_preprocess(pp);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_evaluate(ea);
    if (*idx) return ia.precision == "double" ? build_and_save_index<double>(ia) : build_and_save_index<float>(ia);
    if (*ret) return ra.precision == "double" ? retrieve<double>(ra) : retrieve<float>(ra);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}
