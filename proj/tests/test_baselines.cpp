#include <cmath>

#include "doctest.h"
#include "hmmcnn/baselines.hpp"
#include "hmmcnn/error.hpp"
#include "hmmcnn/random.hpp"

using namespace hmmcnn;
using namespace hmmcnn::baselines;

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

Matrix rows(std::vector<std::vector<double>> data) {
  Matrix m(data.size(), data.front().size());
  for (std::size_t r = 0; r < data.size(); ++r) std::copy(data[r].begin(), data[r].end(), m.row(r).begin());
  return m;
}

DecisionTree leaf(std::size_t cls, std::size_t classes) {
  DecisionTree t;
  TreeNode node;
  node.counts.assign(classes, 0);
  node.counts[cls] = 3;
  t.nodes.push_back(node);
  return t;
}

// Two Gaussian-ish blobs separated along the diagonal.
std::pair<Matrix, std::vector<std::size_t>> blobs(std::size_t per_class, Rng& rng) {
  Matrix x(2 * per_class, 2);
  std::vector<std::size_t> y;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const std::size_t cls = i % 2;
    const double centre = cls ? 2.0 : -2.0;
    x(i, 0) = centre + rng.uniform(-1.0, 1.0);
    x(i, 1) = centre + rng.uniform(-1.0, 1.0);
    y.push_back(cls);
  }
  return {x, y};
}

}  // namespace

TEST_CASE("gini impurity") {
  CHECK(gini(std::vector<std::uint32_t>{5, 0}) == 0.0);
  CHECK(gini(std::vector<std::uint32_t>{2, 2}) == doctest::Approx(0.5));
  CHECK(gini(std::vector<std::uint32_t>{1, 1, 1}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("a single unbounded tree memorizes consistent data") {
  Rng rng(1);
  Matrix x(60, 4);
  std::vector<std::size_t> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t d = 0; d < 4; ++d) x(i, d) = rng.uniform();
    y[i] = rng.below(3);
  }
  ForestOptions opt;
  opt.n_trees = 1;
  opt.bootstrap = false;
  opt.mtry = 4;
  auto forest = rf_fit(x, y, opt);
  CHECK(rf_predict(forest, x) == y);
  for (const auto& node : forest.trees[0].nodes) {
    if (!node.leaf()) CHECK(node.feature < 4);
  }
}

TEST_CASE("XOR is learnt with depth 2 and mtry 2") {
  auto x = rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  std::vector<std::size_t> y{0, 1, 1, 0};
  ForestOptions opt;
  opt.n_trees = 1;
  opt.max_depth = 2;
  opt.mtry = 2;
  opt.bootstrap = false;
  CHECK(rf_predict(rf_fit(x, y, opt), x) == y);
}

TEST_CASE("forest voting and ties") {
  RandomForestModel model;
  model.num_classes = 6;
  model.dims = 1;
  model.trees = {leaf(5, 6), leaf(2, 6)};
  model.n_trees = 2;
  CHECK(rf_predict(model, rows({{0.0}})) == std::vector<std::size_t>{2});
  model.trees = {leaf(4, 6)};
  CHECK(rf_predict(model, rows({{0.0}, {9.0}})) == std::vector<std::size_t>{4, 4});
  CHECK(kind_of([&] { rf_predict(model, rows({{0.0, 1.0}})); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("forests are deterministic and serialize") {
  Rng rng(2);
  auto [x, y] = blobs(30, rng);
  ForestOptions opt;
  opt.n_trees = 7;
  opt.seed = 4;
  auto a = rf_fit(x, y, opt), b = rf_fit(x, y, opt);
  CHECK(to_json(a) == to_json(b));
  auto back = forest_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(rf_predict(back, x) == rf_predict(a, x));
  CHECK(kind_of([&] { rf_fit(x, std::vector<std::size_t>{0}, opt); }) == ErrorKind::RaggedInput);
  CHECK(kind_of([&] { rf_fit(Matrix(0, 0), std::vector<std::size_t>{}, opt); }) == ErrorKind::EmptyInput);
}

TEST_CASE("linear SVM separates blobs and lowers its objective") {
  Rng rng(3);
  auto [x, y] = blobs(50, rng);
  auto untrained = svm_fit(x, y, 2, 1e-2, 0, 1);
  auto model = svm_fit(x, y, 2, 1e-2, 30, 1);
  CHECK(svm_predict(model, x) == y);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    CHECK(svm_objective(model, x, y, cls) < svm_objective(untrained, x, y, cls));
  }
  auto again = svm_fit(x, y, 2, 1e-2, 30, 1);
  CHECK(again.weights == model.weights);
  CHECK(again.biases == model.biases);
  auto back = svm_from_json(nlohmann::json::parse(to_json(model).dump()));
  CHECK(svm_predict(back, x) == y);
  CHECK(svm_fit(x, y, 7, 1e-2, 1, 1).weights.rows() == 7);
  CHECK(kind_of([&] { svm_fit(x, y, 1, 1e-2, 1, 1); }) == ErrorKind::LabelOutOfRange);
}

TEST_CASE("SVM decisions: handcrafted weights, single class, rescaling") {
  LinearSvmModel m;
  m.num_classes = 5;
  m.dims = 2;
  m.weights = Matrix(5, 2);
  m.biases.assign(5, 0.0);
  m.weights(4, 0) = 1.0;
  m.biases[1] = 0.5;
  auto x = rows({{3.0, 0.0}, {0.0, 1.0}});
  CHECK(svm_predict(m, x) == std::vector<std::size_t>{4, 1});
  auto scaled = m;
  for (auto& w : scaled.weights.data()) w *= 3.0;
  for (auto& b : scaled.biases) b *= 3.0;
  CHECK(svm_predict(scaled, x) == svm_predict(m, x));

  LinearSvmModel single;
  single.num_classes = 1;
  single.dims = 2;
  single.weights = Matrix(1, 2, 0.3);
  single.biases = {-9.0};
  CHECK(svm_predict(single, x) == std::vector<std::size_t>{0, 0});
  CHECK(kind_of([&] { svm_predict(m, rows({{1.0}})); }) == ErrorKind::DimensionMismatch);
}
