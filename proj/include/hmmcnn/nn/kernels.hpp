#pragma once

// Compute kernels for the CNN. Every kernel has an OpenMP version that
// parallelizes over the batch and a plain serial reference that spells out
// the definition index by index. Tests hold the two against each other and
// bench_kernels times them.
//
// Layouts: activations [B, C, H, W]; conv weights [F, C, K, K]; dense
// weights [Out, In]. Reductions across the batch are done per sample and
// summed in sample order, so results do not depend on the thread count.

#include <cstddef>
#include <cstdint>

#include "hmmcnn/nn/tensor.hpp"

namespace hmmcnn::nn::kernels {

struct ConvGeometry {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t filters, kernel, stride;

  std::size_t out_h() const { return (in_h - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w - kernel) / stride + 1; }
};

// out = relu?(conv(in, w) + bias), valid padding.
template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* w, const Real* bias,
                    Real* out, bool relu);

// dw and db are overwritten; din (may be null) is overwritten.
template <typename Real>
void conv2d_backward(const ConvGeometry& g, const Real* in, const Real* w, const Real* dout,
                     Real* dw, Real* db, Real* din);

// Non-overlapping max pooling over the floor(H/p) x floor(W/p) grid. argmax
// holds the flat in-plane index of the winner (first maximum on ties).
template <typename Real>
void maxpool_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t pool,
                     const Real* in, Real* out, std::uint32_t* argmax);

// din is overwritten.
template <typename Real>
void maxpool_backward(std::size_t planes, std::size_t h, std::size_t w, std::size_t pool,
                      const Real* dout, const std::uint32_t* argmax, Real* din);

// y[b, o] = relu?(bias[o] + sum_i W[o, i] x[b, i])
template <typename Real>
void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                   const Real* bias, Real* y, bool relu);

// dw, db overwritten; dx (may be null) overwritten.
template <typename Real>
void dense_backward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                    const Real* dy, Real* dw, Real* db, Real* dx);

namespace serial {

template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* w, const Real* bias,
                    Real* out, bool relu);

template <typename Real>
void conv2d_backward(const ConvGeometry& g, const Real* in, const Real* w, const Real* dout,
                     Real* dw, Real* db, Real* din);

template <typename Real>
void maxpool_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t pool,
                     const Real* in, Real* out, std::uint32_t* argmax);

template <typename Real>
void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                   const Real* bias, Real* y, bool relu);

template <typename Real>
void dense_backward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                    const Real* dy, Real* dw, Real* db, Real* dx);

}  // namespace serial

}  // namespace hmmcnn::nn::kernels
