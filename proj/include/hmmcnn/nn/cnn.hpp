#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hmmcnn/matrix.hpp"
#include "hmmcnn/nn/loss.hpp"
#include "hmmcnn/nn/optimizer.hpp"
#include "hmmcnn/nn/tensor.hpp"
#include "json.hpp"

namespace hmmcnn::nn {

struct ConvBlockSpec {
  std::size_t filters = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pool = 2;

  bool operator==(const ConvBlockSpec&) const = default;
};

// Configurable convolutional base (conv -> ReLU -> max-pool per block)
// followed by the fixed head GAP -> dense(hidden_width, ReLU) -> dense(softmax).
struct CnnSpec {
  std::size_t input_side = 224;
  std::vector<ConvBlockSpec> conv_blocks = default_base();
  std::size_t hidden_width = 1024;
  std::size_t num_classes = 7;

  static std::vector<ConvBlockSpec> default_base();

  // Throws ShapeMismatch when a block would shrink the map below 1x1.
  void validate() const;
  // Side length of the conv output and of the pooled output, per block.
  std::vector<std::pair<std::size_t, std::size_t>> block_sides() const;
  std::size_t gap_width() const;
  std::vector<std::vector<std::size_t>> weight_shapes() const;
  std::vector<std::string> weight_names() const;

  bool operator==(const CnnSpec&) const = default;
};

nlohmann::json to_json(const CnnSpec& spec);
CnnSpec cnn_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<ConvBlockSpec>& base);
std::vector<ConvBlockSpec> conv_base_from_json(const nlohmann::json& j);

template <typename Real>
struct BasicCnn {
  CnnSpec spec;
  // conv{i}.w [F, C, K, K], conv{i}.b [F] for each block, then dense1.w,
  // dense1.b, dense2.w, dense2.b.
  std::vector<Tensor<Real>> weights;
  std::uint64_t seed = 0;
  // Bumped by every parameter update; forward caches remember it.
  std::uint64_t version = 0;
};

using CnnModel = BasicCnn<float>;
using CnnModel64 = BasicCnn<double>;

template <typename Real>
BasicCnn<Real> init_cnn(const CnnSpec& spec, std::uint64_t seed);

template <typename Real>
struct ForwardCache {
  std::uint64_t model_version = 0;
  std::size_t batch = 0;
  Tensor<Real> input;
  std::vector<Tensor<Real>> conv_out;  // post-ReLU
  std::vector<Tensor<Real>> pool_out;
  std::vector<std::vector<std::uint32_t>> argmax;
  Tensor<Real> gap;
  Tensor<Real> hidden;  // post-ReLU
  Matrix probabilities;
};

// batch: [B, 1, side, side]. Probabilities are computed in double.
template <typename Real>
ForwardCache<Real> forward(const BasicCnn<Real>& model, const Tensor<Real>& batch);

// Gradients of the loss w.r.t. every weight tensor, given d(loss)/d(probabilities).
template <typename Real>
std::vector<Tensor<Real>> backward(const BasicCnn<Real>& model, const ForwardCache<Real>& cache,
                                   const Matrix& dprob);

template <typename Real>
void backward_and_step(BasicCnn<Real>& model, const ForwardCache<Real>& cache, const Matrix& dprob,
                       const OptimizerConfig& opt, OptimizerState& state);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::vector<std::string> layers;
  std::vector<double> layer_errors;
  std::vector<std::size_t> checked;
};

// Central differences against the analytic gradient on up to
// `samples_per_layer` randomly chosen weights of every tensor.
GradientCheckReport gradient_check(CnnModel64 model, const Tensor<double>& batch, const Matrix& targets,
                                   LossKind kind, double h = 1e-5, std::size_t samples_per_layer = 200,
                                   std::uint64_t seed = 0);

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-7);

struct FitHistory {
  std::vector<double> loss;
  std::vector<double> accuracy;
};

// Called after each epoch with the epoch index and the history so far.
using EpochCallback = std::function<void(std::size_t, const FitHistory&)>;

template <typename Real>
FitHistory fit(BasicCnn<Real>& model, const Tensor<Real>& images, const std::vector<std::size_t>& labels,
               const OptimizerConfig& opt, LossKind kind, std::size_t epochs, std::size_t batch_size,
               std::uint64_t seed, const EpochCallback& on_epoch = {});

template <typename Real>
Matrix predict_proba(const BasicCnn<Real>& model, const Tensor<Real>& images, std::size_t batch_size = 32);

// Argmax class per image, ties toward the lowest index.
template <typename Real>
std::vector<std::size_t> predict(const BasicCnn<Real>& model, const Tensor<Real>& images,
                                 std::size_t batch_size = 32);

std::vector<std::size_t> argmax_rows(const Matrix& scores);

// JSON spec file plus a little-endian float32 blob in weight order.
void save_cnn(const CnnModel& model, const std::filesystem::path& spec_path,
              const std::filesystem::path& weights_path);
CnnModel load_cnn(const std::filesystem::path& spec_path, const std::filesystem::path& weights_path);

}  // namespace hmmcnn::nn
