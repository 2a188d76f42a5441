#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hmmcnn/corpus.hpp"
#include "hmmcnn/hmm.hpp"
#include "json.hpp"

namespace hmmcnn::features {

struct FeatureVector {
  std::vector<double> values;
  std::string sample_id;
  std::string label;
};

struct Scaler {
  std::vector<double> mu;
  std::vector<double> sigma;  // population std; zero entries divide by 1

  std::size_t dims() const noexcept { return mu.size(); }
};

struct ImageMatrix {
  std::size_t side = 224;
  std::size_t payload_side = 0;
  std::size_t offset = 0;  // top/left margin
  std::vector<double> pixels;  // side * side, row-major

  double operator()(std::size_t r, std::size_t c) const { return pixels[r * side + c]; }
};

// Posterior-decodes the first l tokens under every model (map order is the
// canonical family order) and concatenates the state sequences.
FeatureVector extract_hidden_features(const corpus::OpcodeSample& sample,
                                      const std::map<std::string, hmm::HmmModel>& models,
                                      std::size_t l);

FeatureVector raw_features(const corpus::OpcodeSample& sample, std::size_t l);

Scaler fit_scaler(const std::vector<FeatureVector>& train_vectors);
FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& v);

ImageMatrix embed_image(const FeatureVector& v, std::size_t side = 224);
// Reads back the first `len` payload cells row-major.
std::vector<double> extract_payload(const ImageMatrix& image, std::size_t len);

struct ExtractionResult {
  std::vector<FeatureVector> vectors;
  std::vector<std::string> skipped;  // samples shorter than l
};

// Batch extraction. The parallel variant distributes samples over threads;
// the serial variant is the reference it must match exactly.
ExtractionResult extract_all_hidden(const corpus::Corpus& corpus,
                                    const std::map<std::string, hmm::HmmModel>& models,
                                    std::size_t l);
ExtractionResult extract_all_hidden_serial(const corpus::Corpus& corpus,
                                           const std::map<std::string, hmm::HmmModel>& models,
                                           std::size_t l);
ExtractionResult extract_all_raw(const corpus::Corpus& corpus, std::size_t l);

// HMF1 feature file: 16-byte little-endian header then float32 rows.
void write_feature_file(const std::filesystem::path& path, const std::vector<FeatureVector>& vectors);
// Labels and ids are not part of HMF1; callers attach them from the index.
std::vector<std::vector<float>> read_feature_file(const std::filesystem::path& path);

// CSV sidecar `sample_id,family` in the same row order as the feature file.
void write_feature_index(const std::filesystem::path& path, const std::vector<FeatureVector>& vectors);
std::vector<std::pair<std::string, std::string>> read_feature_index(const std::filesystem::path& path);

std::vector<FeatureVector> load_feature_set(const std::filesystem::path& features,
                                            const std::filesystem::path& index);

nlohmann::json to_json(const Scaler& scaler);
Scaler scaler_from_json(const nlohmann::json& j);

// P2 PGM, [min, max] mapped affinely onto [0, 255].
void write_pgm(const std::filesystem::path& path, const ImageMatrix& image);

}  // namespace hmmcnn::features
