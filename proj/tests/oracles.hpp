#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Everything here is written from the definitions, without the scaling or
// blocking tricks used by the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmmcnn/evalreport.hpp"
#include "hmmcnn/hmm.hpp"
#include "hmmcnn/random.hpp"

namespace oracle {

using hmmcnn::Matrix;
using hmmcnn::corpus::Symbol;

// Random row-stochastic model with entries bounded away from zero.
inline hmmcnn::hmm::HmmModel random_model(std::size_t n, std::size_t m, hmmcnn::Rng& rng) {
  hmmcnn::hmm::HmmModel model;
  model.n = n;
  model.m = m;
  model.a = Matrix(n, n);
  model.b = Matrix(n, m);
  model.pi.assign(n, 0.0);
  auto fill = [&](std::span<double> row) {
    double total = 0.0;
    for (auto& v : row) total += (v = 0.05 + rng.uniform());
    for (auto& v : row) v /= total;
  };
  for (std::size_t i = 0; i < n; ++i) fill(model.a.row(i));
  for (std::size_t i = 0; i < n; ++i) fill(model.b.row(i));
  fill(model.pi);
  return model;
}

inline std::vector<Symbol> random_obs(std::size_t t, std::size_t m, hmmcnn::Rng& rng) {
  std::vector<Symbol> obs(t);
  for (auto& o : obs) o = static_cast<Symbol>(rng.below(m));
  return obs;
}

// Calls f(path, probability) for every state path of length T.
template <typename F>
void for_each_path(const hmmcnn::hmm::HmmModel& model, const std::vector<Symbol>& obs, F&& f) {
  const std::size_t T = obs.size();
  std::vector<std::size_t> path(T, 0);
  while (true) {
    double p = model.pi[path[0]] * model.b(path[0], obs[0]);
    for (std::size_t t = 1; t < T; ++t) p *= model.a(path[t - 1], path[t]) * model.b(path[t], obs[t]);
    f(path, p);
    std::size_t t = 0;
    while (t < T && ++path[t] == model.n) path[t++] = 0;
    if (t == T) break;
  }
}

inline double path_sum_likelihood(const hmmcnn::hmm::HmmModel& model, const std::vector<Symbol>& obs) {
  double total = 0.0;
  for_each_path(model, obs, [&](const auto&, double p) { total += p; });
  return total;
}

// P(state_t = i | O) by enumeration.
inline Matrix path_marginals(const hmmcnn::hmm::HmmModel& model, const std::vector<Symbol>& obs) {
  Matrix g(obs.size(), model.n);
  double total = 0.0;
  for_each_path(model, obs, [&](const auto& path, double p) {
    total += p;
    for (std::size_t t = 0; t < obs.size(); ++t) g(t, path[t]) += p;
  });
  for (auto& v : g.data()) v /= total;
  return g;
}

inline std::vector<std::uint32_t> marginal_argmax(const Matrix& g) {
  std::vector<std::uint32_t> out(g.rows());
  for (std::size_t t = 0; t < g.rows(); ++t) {
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < g.cols(); ++i) {
      if (g(t, i) > g(t, best)) best = i;
    }
    out[t] = best;
  }
  return out;
}

// Direct definition c_k = sum_i x_i y_{k-i} over all valid i.
inline std::vector<double> naive_convolution(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> c(x.size() + y.size() - 1, 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (k >= i && k - i < y.size()) c[k] += x[i] * y[k - i];
    }
  }
  return c;
}

// Accuracy straight from the label vectors.
inline double direct_accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == pred[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// Weighted F1 from per-class counting passes over the label vectors.
inline double direct_weighted_f1(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
                                 std::size_t k) {
  double weighted = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = pred[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      support += t;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    weighted += support * f1;
  }
  return weighted / static_cast<double>(truth.size());
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hmmcnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
