#include "hmmcnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmmcnn/error.hpp"
#include "hmmcnn/random.hpp"

namespace hmmcnn::baselines {

namespace {

std::size_t argmax_counts(std::span<const std::uint32_t> counts) {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

void check_inputs(const Matrix& x, std::span<const std::size_t> labels) {
  if (x.rows() == 0 || x.cols() == 0) throw Error(ErrorKind::EmptyInput, "no training rows");
  if (labels.size() != x.rows()) throw Error(ErrorKind::RaggedInput, "labels and rows differ in count");
}

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const std::size_t> y, std::size_t classes, std::size_t mtry,
              std::size_t max_depth, Rng& rng)
      : x_(x), y_(y), classes_(classes), mtry_(mtry), max_depth_(max_depth), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    DecisionTree tree;
    struct Pending {
      std::uint32_t node;
      std::size_t lo, hi, depth;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, rows_.size(), 0}};
    while (!stack.empty()) {
      const auto job = stack.back();
      stack.pop_back();
      auto counts = count(job.lo, job.hi);
      const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
      const bool depth_cap = max_depth_ != 0 && job.depth >= max_depth_;
      Split split;
      if (!pure && !depth_cap && job.hi - job.lo >= 2) split = best_split(job.lo, job.hi, counts);
      if (!split.found) {
        tree.nodes[job.node].counts = std::move(counts);
        continue;
      }
      const auto mid = partition(job.lo, job.hi, split);
      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[job.node];
      node.feature = static_cast<std::int32_t>(split.feature);
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, job.hi, job.depth + 1});
      stack.push_back({left, job.lo, mid, job.depth + 1});
    }
    return tree;
  }

 private:
  std::vector<std::uint32_t> count(std::size_t lo, std::size_t hi) const {
    std::vector<std::uint32_t> counts(classes_, 0);
    for (std::size_t i = lo; i < hi; ++i) ++counts[y_[rows_[i]]];
    return counts;
  }

  Split best_split(std::size_t lo, std::size_t hi, const std::vector<std::uint32_t>& parent) {
    const std::size_t dims = x_.cols();
    std::vector<std::size_t> features(dims);
    std::iota(features.begin(), features.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(features));

    const double n = static_cast<double>(hi - lo);
    Split best;
    std::vector<std::pair<double, std::size_t>> column(hi - lo);
    std::vector<std::uint32_t> left(classes_);
    std::vector<std::uint32_t> right(classes_);
    std::size_t examined = 0;
    // Keep drawing features past mtry until one admits a split.
    for (std::size_t f : features) {
      if (examined >= mtry_ && best.found) break;
      ++examined;
      for (std::size_t i = lo; i < hi; ++i) column[i - lo] = {x_(rows_[i], f), rows_[i]};
      std::sort(column.begin(), column.end());
      std::fill(left.begin(), left.end(), 0);
      right = parent;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto cls = y_[column[i].second];
        ++left[cls];
        --right[cls];
        if (!(column[i].first < column[i + 1].first)) continue;
        const double nl = static_cast<double>(i + 1);
        const double impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
        if (!best.found || impurity < best.impurity) {
          double thr = 0.5 * (column[i].first + column[i + 1].first);
          if (!(thr < column[i + 1].first)) thr = column[i].first;
          best = {true, f, thr, impurity};
        }
      }
    }
    return best;
  }

  std::size_t partition(std::size_t lo, std::size_t hi, const Split& split) {
    auto it = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(lo),
                                    rows_.begin() + static_cast<std::ptrdiff_t>(hi),
                                    [&](std::size_t r) { return x_(r, split.feature) <= split.threshold; });
    return static_cast<std::size_t>(it - rows_.begin());
  }

  const Matrix& x_;
  std::span<const std::size_t> y_;
  std::size_t classes_;
  std::size_t mtry_;
  std::size_t max_depth_;
  Rng& rng_;
  std::vector<std::size_t> rows_;
};

}  // namespace

double gini(std::span<const std::uint32_t> counts) {
  double total = 0.0;
  for (auto c : counts) total += c;
  if (total == 0.0) return 0.0;
  double sq = 0.0;
  for (auto c : counts) sq += (c / total) * (c / total);
  return 1.0 - sq;
}

std::size_t DecisionTree::predict(std::span<const double> x) const {
  std::size_t node = 0;
  while (!nodes[node].leaf()) {
    const auto& n = nodes[node];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return argmax_counts(nodes[node].counts);
}

RandomForestModel rf_fit(const Matrix& x, std::span<const std::size_t> labels, const ForestOptions& options,
                         std::size_t num_classes) {
  check_inputs(x, labels);
  if (options.n_trees == 0) throw Error(ErrorKind::InvalidConfig, "n_trees must be positive");
  RandomForestModel model;
  model.n_trees = options.n_trees;
  model.max_depth = options.max_depth;
  model.dims = x.cols();
  model.mtry = options.mtry != 0
                   ? std::min(options.mtry, x.cols())
                   : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  model.seed = options.seed;
  model.num_classes = num_classes != 0 ? num_classes : *std::max_element(labels.begin(), labels.end()) + 1;
  for (auto l : labels) {
    if (l >= model.num_classes) throw Error(ErrorKind::LabelOutOfRange, std::to_string(l));
  }

  model.trees.resize(options.n_trees);
  const std::size_t n = x.rows();
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(options.n_trees); ++t) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> rows(n);
    if (options.bootstrap) {
      for (auto& r : rows) r = rng.below(n);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    TreeBuilder builder(x, labels, model.num_classes, model.mtry, model.max_depth, rng);
    model.trees[static_cast<std::size_t>(t)] = builder.build(std::move(rows));
  }
  return model;
}

std::vector<std::size_t> rf_predict(const RandomForestModel& model, const Matrix& x) {
  if (x.cols() != model.dims) throw Error(ErrorKind::DimensionMismatch, "forest expects " + std::to_string(model.dims));
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<std::uint32_t> votes(model.num_classes, 0);
    for (const auto& tree : model.trees) ++votes[tree.predict(x.row(r))];
    out[r] = argmax_counts(votes);
  }
  return out;
}

LinearSvmModel svm_fit(const Matrix& x, std::span<const std::size_t> labels, std::size_t num_classes,
                       double lambda, std::size_t epochs, std::uint64_t seed) {
  check_inputs(x, labels);
  if (num_classes == 0) throw Error(ErrorKind::InvalidConfig, "num_classes must be positive");
  if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidConfig, "lambda must be positive");
  for (auto l : labels) {
    if (l >= num_classes) throw Error(ErrorKind::LabelOutOfRange, std::to_string(l));
  }
  LinearSvmModel model;
  model.num_classes = num_classes;
  model.dims = x.cols();
  model.weights = Matrix(num_classes, x.cols());
  model.biases.assign(num_classes, 0.0);
  model.lambda = lambda;
  model.seed = seed;

  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double radius = 1.0 / std::sqrt(lambda);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(num_classes); ++ci) {
    const auto cls = static_cast<std::size_t>(ci);
    Rng rng(derive_seed(seed, cls));
    auto w = model.weights.row(cls);
    double b = 0.0;
    std::vector<std::size_t> order(n);
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double y = labels[i] == cls ? 1.0 : -1.0;
        auto xi = x.row(i);
        double score = b;
        for (std::size_t k = 0; k < d; ++k) score += w[k] * xi[k];
        const double shrink = 1.0 - eta * lambda;
        for (auto& v : w) v *= shrink;
        b *= shrink;
        if (y * score < 1.0) {
          for (std::size_t k = 0; k < d; ++k) w[k] += eta * y * xi[k];
          b += eta * y;
        }
        double norm = b * b;
        for (double v : w) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > radius) {
          const double s = radius / norm;
          for (auto& v : w) v *= s;
          b *= s;
        }
      }
    }
    model.biases[cls] = b;
  }
  return model;
}

Matrix svm_decision(const LinearSvmModel& model, const Matrix& x) {
  if (x.cols() != model.dims) throw Error(ErrorKind::DimensionMismatch, "svm expects " + std::to_string(model.dims));
  Matrix out(x.rows(), model.num_classes);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    for (std::size_t c = 0; c < model.num_classes; ++c) {
      auto w = model.weights.row(c);
      double s = model.biases[c];
      for (std::size_t k = 0; k < model.dims; ++k) s += w[k] * xr[k];
      out(r, c) = s;
    }
  }
  return out;
}

std::vector<std::size_t> svm_predict(const LinearSvmModel& model, const Matrix& x) {
  const auto scores = svm_decision(model, x);
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = scores.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double svm_objective(const LinearSvmModel& model, const Matrix& x, std::span<const std::size_t> labels,
                     std::size_t cls) {
  auto w = model.weights.row(cls);
  const double b = model.biases[cls];
  double norm = b * b;
  for (double v : w) norm += v * v;
  double hinge = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double s = b;
    for (std::size_t k = 0; k < model.dims; ++k) s += w[k] * xr[k];
    const double y = labels[r] == cls ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * s);
  }
  return 0.5 * model.lambda * norm + hinge / static_cast<double>(x.rows());
}

nlohmann::json to_json(const RandomForestModel& model) {
  auto trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    auto nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
      if (n.leaf()) {
        nodes.push_back({{"counts", n.counts}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back(nodes);
  }
  return {{"kind", "random_forest"}, {"n_trees", model.n_trees}, {"max_depth", model.max_depth},
          {"mtry", model.mtry},      {"dims", model.dims},       {"num_classes", model.num_classes},
          {"seed", model.seed},      {"trees", trees}};
}

RandomForestModel forest_from_json(const nlohmann::json& j) {
  RandomForestModel model;
  model.n_trees = j.at("n_trees").get<std::size_t>();
  model.max_depth = j.at("max_depth").get<std::size_t>();
  model.mtry = j.at("mtry").get<std::size_t>();
  model.dims = j.at("dims").get<std::size_t>();
  model.num_classes = j.at("num_classes").get<std::size_t>();
  model.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree tree;
    for (const auto& nj : tj) {
      TreeNode node;
      if (nj.contains("counts")) {
        node.counts = nj.at("counts").get<std::vector<std::uint32_t>>();
      } else {
        node.feature = nj.at("feature").get<std::int32_t>();
        node.threshold = nj.at("threshold").get<double>();
        node.left = nj.at("left").get<std::uint32_t>();
        node.right = nj.at("right").get<std::uint32_t>();
      }
      tree.nodes.push_back(std::move(node));
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

nlohmann::json to_json(const LinearSvmModel& model) {
  auto weights = nlohmann::json::array();
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    auto row = model.weights.row(c);
    weights.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"kind", "linear_svm"}, {"num_classes", model.num_classes}, {"dims", model.dims},
          {"lambda", model.lambda}, {"seed", model.seed},               {"weights", weights},
          {"biases", model.biases}};
}

LinearSvmModel svm_from_json(const nlohmann::json& j) {
  LinearSvmModel model;
  model.num_classes = j.at("num_classes").get<std::size_t>();
  model.dims = j.at("dims").get<std::size_t>();
  model.lambda = j.at("lambda").get<double>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.biases = j.at("biases").get<std::vector<double>>();
  model.weights = Matrix(model.num_classes, model.dims);
  const auto& w = j.at("weights");
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    auto row = w.at(c).get<std::vector<double>>();
    if (row.size() != model.dims) throw Error(ErrorKind::DimensionMismatch, "svm weight row");
    std::copy(row.begin(), row.end(), model.weights.row(c).begin());
  }
  return model;
}

}  // namespace hmmcnn::baselines
