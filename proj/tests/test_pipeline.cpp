#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hmmcnn/error.hpp"
#include "hmmcnn/pipeline.hpp"
#include "hmmcnn/synth.hpp"
#include "oracles.hpp"

using namespace hmmcnn;
using namespace hmmcnn::pipeline;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HMMCNN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small 3-family corpus shared by the tests below.
const synth::GeneratedCorpus& small_corpus() {
  static const synth::GeneratedCorpus corpus = [] {
    synth::SynthSpec spec;
    spec.k_families = 3;
    spec.vocab_size = 12;
    spec.states_per_source = 3;
    spec.samples_per_family = 60;
    spec.sample_length = 80;
    spec.separation = 0.8;
    spec.seed = 3;
    return synth::generate(spec, oracle::scratch_dir("pipeline_corpus"));
  }();
  return corpus;
}

PipelineConfig small_config(const std::string& work) {
  PipelineConfig c;
  c.manifest = small_corpus().manifest;
  c.data_root = small_corpus().data_root;
  c.work_dir = oracle::scratch_dir(work);
  c.n = 3;
  c.l = 20;
  c.image_side = 12;
  c.base = {{4, 3, 1, 2}};
  c.epochs = 3;
  c.batch_size = 16;
  c.rf.n_trees = 15;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("config defaults and JSON parsing") {
  PipelineConfig defaults;
  CHECK(defaults.n == 20);
  CHECK(defaults.l == 112);
  CHECK(defaults.optimizer == nn::OptimizerKind::nadam);
  CHECK(defaults.learning_rate == 1e-3);
  CHECK(defaults.loss == nn::LossKind::categorical_crossentropy);

  auto c = config_from_json(nlohmann::json::parse(R"({
    "manifest": "m.csv", "n": 4, "l": 9, "classifier": "svm", "featurizer": "raw",
    "optimizer": "adam", "loss": "poisson", "learning_rate": 0.01, "seed": 7,
    "base": [{"filters": 2}], "hmm": {"jitter": 0.1}, "rf": {"n_trees": 3},
    "grid": {"n": [2, 3], "loss": ["poisson"], "base": [[{"filters": 4}]]}})"));
  CHECK(c.n == 4);
  CHECK(c.classifier == ClassifierKind::svm);
  CHECK(c.featurizer == FeaturizerKind::raw);
  CHECK(c.base.size() == 1);
  CHECK(c.base[0].kernel == 3);
  CHECK(c.hmm.jitter == 0.1);
  CHECK(c.rf.n_trees == 3);
  REQUIRE(c.grid.has_value());
  CHECK(c.grid->size() == 2);

  CHECK(kind_of([] { config_from_json(nlohmann::json::parse(R"({"nn": 3})")); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { config_from_json(nlohmann::json::parse(R"({"n": "x"})")); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { config_from_json(nlohmann::json::parse(R"({"classifier": "knn"})")); }) ==
        ErrorKind::InvalidConfig);
  PipelineConfig zero;
  zero.n = 0;
  CHECK(kind_of([&] { zero.validate(); }) == ErrorKind::InvalidConfig);
  auto no_grid = nlohmann::json::parse(R"({"grid": {"l": []}})");
  CHECK(kind_of([&] { config_from_json(no_grid).validate(); }) == ErrorKind::EmptyGrid);
  // Paths never reach the report config.
  CHECK_FALSE(hyperparameters_json(c).contains("manifest"));
}

TEST_CASE("stage commands write the documented layout and rerun identically") {
  auto c = small_config("pipeline_stages");
  run_train_hmms(c);
  for (const char* f : {"split.json", "vocab.json", "drop_report.json", "hmm/index.json", "hmm/fam00.json",
                        "hmm/fam02.json"}) {
    CHECK(fs::exists(c.work_dir / f));
  }
  const auto model_bytes = slurp(c.work_dir / "hmm" / "fam01.json");
  run_train_hmms(c);
  CHECK(slurp(c.work_dir / "hmm" / "fam01.json") == model_bytes);

  run_features(c);
  auto rows = features::read_feature_file(c.work_dir / "features" / "train.hmf");
  REQUIRE_FALSE(rows.empty());
  CHECK(rows.front().size() == 3 * 20);
  CHECK(rows.size() == 144);
  CHECK(fs::exists(c.work_dir / "features" / "scaler.json"));

  run_train(c);
  CHECK(fs::exists(c.work_dir / "classifier" / "cnn.weights"));
  const auto weights = slurp(c.work_dir / "classifier" / "cnn.weights");
  run_train(c);
  CHECK(slurp(c.work_dir / "classifier" / "cnn.weights") == weights);

  auto table = run_evaluate(c);
  CHECK(table.find("confusion (counts)") != std::string::npos);
  auto report = nlohmann::json::parse(slurp(c.work_dir / "report.json"));
  CHECK(report.at("confusion").contains("normalized"));
  CHECK(report.at("seed") == 11);
  auto timing = nlohmann::json::parse(slurp(c.work_dir / "timing.json"));
  CHECK(timing.at("stages").size() == 5);

  c.n = 4;
  CHECK(kind_of([&] { run_features(c); }) == ErrorKind::ModelMismatch);
}

TEST_CASE("raw featurizer and baseline classifiers") {
  auto c = small_config("pipeline_raw");
  c.featurizer = FeaturizerKind::raw;
  c.classifier = ClassifierKind::rf;
  run_features(c);  // creates the split on demand
  CHECK(features::read_feature_file(c.work_dir / "features" / "test.hmf").front().size() == 20);
  run_train(c);
  run_evaluate(c);
  c.classifier = ClassifierKind::svm;
  run_train(c);
  run_evaluate(c);
  auto report = nlohmann::json::parse(slurp(c.work_dir / "report.json"));
  CHECK(report.at("config").at("classifier") == "svm");
  CHECK(report.at("accuracy").get<double>() > 1.0 / 3.0);
}

TEST_CASE("grid search reuses HMMs per N") {
  auto c = small_config("pipeline_grid");
  c.classifier = ClassifierKind::rf;
  evalreport::GridSpec grid;
  grid.n = {2, 3};
  grid.l = {10, 20};
  HmmCache cache;
  auto result = grid_in_memory(c, grid, cache);
  CHECK(result.rows.size() == 4);
  CHECK(cache.trainings() == 2);
  for (const auto& row : result.rows) CHECK(result.rows[result.best].outcome.accuracy >= row.outcome.accuracy);

  evalreport::GridSpec single;
  single.n = {2};
  single.l = {10};
  HmmCache fresh;
  CHECK(grid_in_memory(c, single, fresh).rows.size() == 1);
}

TEST_CASE("CLI exit codes") {
  auto c = small_config("pipeline_cli");
  const auto work = c.work_dir.string();
  const auto flags = " --manifest " + c.manifest.string() + " --work-dir " + work + " --n 3 --l 20";
  CHECK(run_cli("train-hmms" + flags) == 0);
  CHECK(run_cli("features" + flags) == 0);
  CHECK(run_cli("train --classifier rf" + flags) == 0);
  CHECK(run_cli("evaluate" + flags) == 0);
  CHECK(fs::exists(c.work_dir / "report.txt"));

  CHECK(run_cli("train-hmms --n 0" + std::string(" --manifest ") + c.manifest.string()) == 2);
  CHECK(run_cli("train-hmms --optimizer adagrad --manifest " + c.manifest.string()) == 2);
  CHECK(run_cli("train-hmms --bogus") == 2);
  CHECK(run_cli("synth --separation 0 --out " + work + "/s") == 2);

  // A manifest that exists but references a missing file is a data error.
  const auto bad = c.work_dir / "bad.csv";
  std::ofstream(bad) << "sample_id,family,path\nx,a,missing.txt\n";
  CHECK(run_cli("train-hmms --manifest " + bad.string() + " --data-root " + work + " --work-dir " + work) == 3);
  std::ofstream(bad) << "id,family\n";
  CHECK(run_cli("train-hmms --manifest " + bad.string() + " --data-root " + work + " --work-dir " + work) == 3);
  CHECK(run_cli("synth --k 2 --samples 3 --length 5 --out " + work + "/s") == 0);
  CHECK(fs::exists(c.work_dir / "s" / "manifest.csv"));
}
