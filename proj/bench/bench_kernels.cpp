// Times the OpenMP kernels against their serial references on the default
// 224x224 base and reports one CNN training step.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "hmmcnn/nn/cnn.hpp"
#include "hmmcnn/nn/kernels.hpp"
#include "hmmcnn/random.hpp"

using namespace hmmcnn;
using namespace hmmcnn::nn;

namespace {

double seconds(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  Rng rng(7);
  const std::size_t B = 8;
  struct Layer {
    const char* name;
    kernels::ConvGeometry g;
  };
  const Layer layers[] = {{"conv0 1->8 @224", {B, 1, 224, 224, 8, 3, 1}},
                          {"conv1 8->16 @111", {B, 8, 111, 111, 16, 3, 1}},
                          {"conv2 16->32 @54", {B, 16, 54, 54, 32, 3, 1}}};
  std::printf("%-20s %12s %12s %12s %12s\n", "layer", "fwd omp", "fwd serial", "bwd omp", "bwd serial");
  for (const auto& layer : layers) {
    const auto& g = layer.g;
    auto in = random_vec(g.batch * g.in_channels * g.in_h * g.in_w, rng);
    auto w = random_vec(g.filters * g.in_channels * g.kernel * g.kernel, rng);
    auto bias = random_vec(g.filters, rng);
    std::vector<float> out(g.batch * g.filters * g.out_h() * g.out_w());
    auto dout = random_vec(out.size(), rng);
    std::vector<float> dw(w.size()), db(bias.size()), din(in.size());
    const double f_omp = seconds([&] { kernels::conv2d_forward(g, in.data(), w.data(), bias.data(), out.data(), true); }, 3);
    const double f_ser = seconds([&] { kernels::serial::conv2d_forward(g, in.data(), w.data(), bias.data(), out.data(), true); }, 1);
    const double b_omp = seconds([&] { kernels::conv2d_backward(g, in.data(), w.data(), dout.data(), dw.data(), db.data(), din.data()); }, 3);
    const double b_ser = seconds([&] { kernels::serial::conv2d_backward(g, in.data(), w.data(), dout.data(), dw.data(), db.data(), din.data()); }, 1);
    std::printf("%-20s %10.2fms %10.2fms %10.2fms %10.2fms\n", layer.name, f_omp * 1e3, f_ser * 1e3, b_omp * 1e3,
                b_ser * 1e3);
  }

  CnnSpec spec;
  auto model = init_cnn<float>(spec, 1);
  Tensor<float> batch({32, 1, 224, 224});
  for (auto& v : batch.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<std::size_t> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % spec.num_classes;
  OptimizerConfig opt;
  OptimizerState state;
  const double step = seconds(
      [&] {
        auto cache = forward(model, batch);
        auto loss = compute_loss(LossKind::categorical_crossentropy, cache.probabilities,
                                 one_hot(labels, spec.num_classes));
        backward_and_step(model, cache, loss.gradient, opt, state);
      },
      2);
  std::printf("train step, batch 32 @224: %.1f ms (%.2f ms/sample)\n", step * 1e3, step * 1e3 / 32);
  return 0;
}
