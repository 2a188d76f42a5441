#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmmcnn/baselines.hpp"
#include "hmmcnn/corpus.hpp"
#include "hmmcnn/evalreport.hpp"
#include "hmmcnn/features.hpp"
#include "hmmcnn/hmm.hpp"
#include "hmmcnn/nn/cnn.hpp"
#include "json.hpp"

namespace hmmcnn::pipeline {

namespace fs = std::filesystem;

enum class ClassifierKind { cnn, rf, svm };
enum class FeaturizerKind { hmm, raw };

std::string_view to_string(ClassifierKind kind) noexcept;
std::string_view to_string(FeaturizerKind kind) noexcept;
ClassifierKind parse_classifier(std::string_view name);
FeaturizerKind parse_featurizer(std::string_view name);

struct HmmOptions {
  hmm::BaumWelchOptions baum_welch;
  double jitter = 0.02;
};

struct PipelineConfig {
  fs::path manifest;
  fs::path data_root;
  fs::path work_dir = "work";

  std::size_t n = 20;
  std::size_t l = 112;
  ClassifierKind classifier = ClassifierKind::cnn;
  FeaturizerKind featurizer = FeaturizerKind::hmm;

  std::vector<nn::ConvBlockSpec> base = nn::CnnSpec::default_base();
  nn::OptimizerKind optimizer = nn::OptimizerKind::nadam;
  double learning_rate = 1e-3;
  nn::LossKind loss = nn::LossKind::categorical_crossentropy;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::size_t image_side = 224;

  std::uint64_t seed = 0;
  std::size_t min_family_size = 50;
  double train_fraction = 0.8;

  HmmOptions hmm;
  baselines::ForestOptions rf;  // rf.seed is replaced by the pipeline seed
  double svm_lambda = 1e-4;
  std::size_t svm_epochs = 50;

  std::optional<evalreport::GridSpec> grid;

  void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const fs::path& path);
// Hyperparameters only; paths are left out so reports do not depend on
// where a run was staged.
nlohmann::json hyperparameters_json(const PipelineConfig& config);

struct PreparedCorpus {
  corpus::SplitResult split;  // encoded, short samples removed
  corpus::Vocabulary vocab;
  corpus::DropReport drops;

  const std::vector<std::string>& families() const { return split.train.families; }
};

// load -> filter/split -> vocabulary (train only) -> encode -> drop_short(l).
PreparedCorpus prepare_corpus(const PipelineConfig& config);

using FamilyModels = std::map<std::string, hmm::HmmModel>;

FamilyModels train_hmms(const PipelineConfig& config, const corpus::Corpus& train);

struct FeatureSplit {
  std::vector<features::FeatureVector> train;
  std::vector<features::FeatureVector> test;
  features::Scaler scaler;
  std::vector<std::string> skipped;
};

// Extract (hidden-state or raw), fit the scaler on train, scale both splits.
FeatureSplit build_features(const PipelineConfig& config, const PreparedCorpus& prepared,
                            const FamilyModels* models);

std::vector<std::size_t> label_indices(const std::vector<features::FeatureVector>& vectors,
                                       const std::vector<std::string>& families);
Matrix feature_matrix(const std::vector<features::FeatureVector>& vectors);
nn::Tensor<float> image_batch(const std::vector<features::FeatureVector>& vectors, std::size_t side);

struct TrainedClassifier {
  ClassifierKind kind = ClassifierKind::cnn;
  std::optional<nn::CnnModel> cnn;
  std::optional<baselines::RandomForestModel> rf;
  std::optional<baselines::LinearSvmModel> svm;
  nn::FitHistory history;
};

nn::CnnSpec cnn_spec(const PipelineConfig& config, std::size_t num_classes);

TrainedClassifier train_classifier(const PipelineConfig& config, const std::vector<features::FeatureVector>& train,
                                   const std::vector<std::string>& families);
std::vector<std::size_t> predict(const PipelineConfig& config, const TrainedClassifier& classifier,
                                 const std::vector<features::FeatureVector>& vectors);

struct Evaluation {
  evalreport::ConfusionMatrix confusion;
  evalreport::Metrics metrics;
};

Evaluation evaluate(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                    std::size_t k);

// Stage commands. Each reads its inputs from and writes its outputs to
// config.work_dir; see README for the layout.
void run_train_hmms(const PipelineConfig& config);
void run_features(const PipelineConfig& config);
void run_train(const PipelineConfig& config);
// Returns the text table that was also written to report.txt.
std::string run_evaluate(const PipelineConfig& config);
// Returns the ranked table that was also written to grid.txt.
std::string run_grid(const PipelineConfig& config);

// Trains family HMMs at most once per (N, seed) across grid cells.
class HmmCache {
 public:
  const FamilyModels& get(const PipelineConfig& config, const corpus::Corpus& train, std::size_t n);
  std::size_t trainings() const noexcept { return trainings_; }
  double seconds() const noexcept { return seconds_; }

 private:
  std::map<std::pair<std::size_t, std::uint64_t>, FamilyModels> models_;
  std::size_t trainings_ = 0;
  double seconds_ = 0.0;
};

evalreport::GridResult grid_in_memory(const PipelineConfig& config, const evalreport::GridSpec& grid,
                                      HmmCache& cache);

}  // namespace hmmcnn::pipeline
