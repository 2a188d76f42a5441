#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hmmcnn/matrix.hpp"

namespace hmmcnn::nn {

enum class LossKind { categorical_crossentropy, kullback_leibler_divergence, poisson };

std::string_view to_string(LossKind kind) noexcept;
LossKind parse_loss(std::string_view name);

inline constexpr double kProbabilityClamp = 1e-12;

struct LossResult {
  double loss = 0.0;
  // d(loss)/d(probabilities), already divided by the batch size.
  Matrix gradient;
};

// Batch-mean loss over rows of `predicted` (probabilities) against `target`.
LossResult compute_loss(LossKind kind, const Matrix& predicted, const Matrix& target);

Matrix softmax_rows(const Matrix& logits);

// Pulls d(loss)/d(probabilities) back through softmax to the logits.
Matrix softmax_backward(const Matrix& probabilities, const Matrix& dprob);

Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

// c_k = sum_i x_i y_{k-i}, length |x| + |y| - 1.
std::vector<double> convolve1d(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace hmmcnn::nn
