#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace hmmcnn::nn {

enum class OptimizerKind { sgd_momentum, adam, nadam, rmsprop };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::nadam;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.9;
  double epsilon = 1e-8;

  void validate() const;
};

// Moment buffers for one parameter tensor.
struct OptimizerSlot {
  std::vector<double> first;
  std::vector<double> second;
};

struct OptimizerState {
  std::size_t step = 0;  // completed updates
  std::vector<OptimizerSlot> slots;
};

// Applies one update to `weights` given `grad`. `t` is the 1-based step.
template <typename Real>
void apply_update(const OptimizerConfig& config, OptimizerSlot& slot, std::span<Real> weights,
                  std::span<const Real> grad, std::size_t t);

}  // namespace hmmcnn::nn
