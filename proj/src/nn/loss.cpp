#include "hmmcnn/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "hmmcnn/error.hpp"

namespace hmmcnn::nn {

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::categorical_crossentropy: return "categorical_crossentropy";
    case LossKind::kullback_leibler_divergence: return "kullback_leibler_divergence";
    case LossKind::poisson: return "poisson";
  }
  return "unknown";
}

LossKind parse_loss(std::string_view name) {
  for (auto kind : {LossKind::categorical_crossentropy, LossKind::kullback_leibler_divergence, LossKind::poisson}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown loss " + std::string(name));
}

LossResult compute_loss(LossKind kind, const Matrix& predicted, const Matrix& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols() || predicted.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "prediction and target shapes differ");
  }
  const std::size_t batch = predicted.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  LossResult out;
  out.gradient = Matrix(batch, predicted.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < predicted.cols(); ++c) {
      const double raw = predicted(r, c);
      const double p = std::max(raw, kProbabilityClamp);
      const double t = target(r, c);
      // Below the clamp the loss is flat in p.
      const double dlogp = raw > kProbabilityClamp ? 1.0 / p : 0.0;
      switch (kind) {
        case LossKind::categorical_crossentropy:
          total -= t * std::log(p);
          out.gradient(r, c) = -t * dlogp * inv_batch;
          break;
        case LossKind::kullback_leibler_divergence:
          if (t > 0.0) total += t * (std::log(t) - std::log(p));
          out.gradient(r, c) = -t * dlogp * inv_batch;
          break;
        case LossKind::poisson:
          total += p - t * std::log(p);
          out.gradient(r, c) = ((raw > kProbabilityClamp ? 1.0 : 0.0) - t * dlogp) * inv_batch;
          break;
      }
    }
  }
  out.loss = total * inv_batch;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out(r, c) = std::exp(in[c] - peak);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < in.size(); ++c) out(r, c) /= sum;
  }
  return out;
}

Matrix softmax_backward(const Matrix& probabilities, const Matrix& dprob) {
  Matrix out(probabilities.rows(), probabilities.cols());
  for (std::size_t r = 0; r < probabilities.rows(); ++r) {
    double inner = 0.0;
    for (std::size_t c = 0; c < probabilities.cols(); ++c) inner += dprob(r, c) * probabilities(r, c);
    for (std::size_t c = 0; c < probabilities.cols(); ++c) {
      out(r, c) = probabilities(r, c) * (dprob(r, c) - inner);
    }
  }
  return out;
}

Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Matrix out(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw Error(ErrorKind::LabelOutOfRange, std::to_string(labels[i]));
    out(i, labels[i]) = 1.0;
  }
  return out;
}

std::vector<double> convolve1d(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw Error(ErrorKind::EmptyInput, "convolve1d needs non-empty inputs");
  std::vector<double> c(x.size() + y.size() - 1, 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) {
    // i ranges over indices where both x_i and y_{k-i} exist.
    const std::size_t lo = k >= y.size() - 1 ? k - (y.size() - 1) : 0;
    const std::size_t hi = std::min(k, x.size() - 1);
    double s = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) s += x[i] * y[k - i];
    c[k] = s;
  }
  return c;
}

}  // namespace hmmcnn::nn
