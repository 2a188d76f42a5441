#include "hmmcnn/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "hmmcnn/error.hpp"

namespace hmmcnn::nn {

std::string_view to_string(OptimizerKind kind) noexcept {
  switch (kind) {
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::nadam: return "nadam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "unknown";
}

OptimizerKind parse_optimizer(std::string_view name) {
  for (auto kind : {OptimizerKind::sgd_momentum, OptimizerKind::adam, OptimizerKind::nadam, OptimizerKind::rmsprop}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown optimizer " + std::string(name));
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
}

template <typename Real>
void apply_update(const OptimizerConfig& config, OptimizerSlot& slot, std::span<Real> weights,
                  std::span<const Real> grad, std::size_t t) {
  const std::size_t n = weights.size();
  if (slot.first.size() != n) slot.first.assign(n, 0.0);
  if (slot.second.size() != n) slot.second.assign(n, 0.0);
  const double lr = config.learning_rate;
  const double td = static_cast<double>(t);

  switch (config.kind) {
    case OptimizerKind::sgd_momentum:
      for (std::size_t i = 0; i < n; ++i) {
        slot.first[i] = config.momentum * slot.first[i] - lr * grad[i];
        weights[i] = static_cast<Real>(weights[i] + slot.first[i]);
      }
      break;
    case OptimizerKind::adam: {
      const double c1 = 1.0 - std::pow(config.beta1, td);
      const double c2 = 1.0 - std::pow(config.beta2, td);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        slot.first[i] = config.beta1 * slot.first[i] + (1.0 - config.beta1) * g;
        slot.second[i] = config.beta2 * slot.second[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = slot.first[i] / c1;
        const double v_hat = slot.second[i] / c2;
        weights[i] = static_cast<Real>(weights[i] - lr * m_hat / (std::sqrt(v_hat) + config.epsilon));
      }
      break;
    }
    case OptimizerKind::nadam: {
      // Nesterov look-ahead: blend the next step's bias-corrected momentum
      // with the current bias-corrected gradient.
      const double c1_next = 1.0 - std::pow(config.beta1, td + 1.0);
      const double c1 = 1.0 - std::pow(config.beta1, td);
      const double c2 = 1.0 - std::pow(config.beta2, td);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        slot.first[i] = config.beta1 * slot.first[i] + (1.0 - config.beta1) * g;
        slot.second[i] = config.beta2 * slot.second[i] + (1.0 - config.beta2) * g * g;
        const double m_bar = config.beta1 * slot.first[i] / c1_next + (1.0 - config.beta1) * g / c1;
        const double v_hat = slot.second[i] / c2;
        weights[i] = static_cast<Real>(weights[i] - lr * m_bar / (std::sqrt(v_hat) + config.epsilon));
      }
      break;
    }
    case OptimizerKind::rmsprop:
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        slot.second[i] = config.rho * slot.second[i] + (1.0 - config.rho) * g * g;
        weights[i] = static_cast<Real>(weights[i] - lr * g / (std::sqrt(slot.second[i]) + config.epsilon));
      }
      break;
  }
}

template void apply_update<float>(const OptimizerConfig&, OptimizerSlot&, std::span<float>,
                                  std::span<const float>, std::size_t);
template void apply_update<double>(const OptimizerConfig&, OptimizerSlot&, std::span<double>,
                                   std::span<const double>, std::size_t);

}  // namespace hmmcnn::nn
