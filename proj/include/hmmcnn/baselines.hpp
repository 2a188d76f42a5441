#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hmmcnn/matrix.hpp"
#include "json.hpp"

namespace hmmcnn::baselines {

// Internal nodes have feature >= 0; leaves carry class counts.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<std::uint32_t> counts;

  bool leaf() const noexcept { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t predict(std::span<const double> x) const;
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t mtry = 0;       // 0 = ceil(sqrt(dim))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_trees = 0;
  std::size_t max_depth = 0;
  std::size_t mtry = 0;
  std::size_t dims = 0;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
};

double gini(std::span<const std::uint32_t> counts);

// Rows of `x` are samples. num_classes = 0 means max(label) + 1.
RandomForestModel rf_fit(const Matrix& x, std::span<const std::size_t> labels, const ForestOptions& options = {},
                         std::size_t num_classes = 0);
std::vector<std::size_t> rf_predict(const RandomForestModel& model, const Matrix& x);

struct LinearSvmModel {
  std::size_t num_classes = 0;
  std::size_t dims = 0;
  Matrix weights;  // num_classes x dims
  std::vector<double> biases;
  double lambda = 1e-4;
  std::uint64_t seed = 0;
};

// One-vs-rest Pegasos: step 1 / (lambda * t), bias carried as a weight on a
// constant feature.
LinearSvmModel svm_fit(const Matrix& x, std::span<const std::size_t> labels, std::size_t num_classes,
                       double lambda = 1e-4, std::size_t epochs = 50, std::uint64_t seed = 0);
Matrix svm_decision(const LinearSvmModel& model, const Matrix& x);
std::vector<std::size_t> svm_predict(const LinearSvmModel& model, const Matrix& x);

// lambda/2 (|w|^2 + b^2) + mean hinge for the one-vs-rest problem of `cls`.
double svm_objective(const LinearSvmModel& model, const Matrix& x, std::span<const std::size_t> labels,
                     std::size_t cls);

nlohmann::json to_json(const RandomForestModel& model);
RandomForestModel forest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LinearSvmModel& model);
LinearSvmModel svm_from_json(const nlohmann::json& j);

}  // namespace hmmcnn::baselines
