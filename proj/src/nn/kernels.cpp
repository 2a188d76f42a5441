#include "hmmcnn/nn/kernels.hpp"

#include <algorithm>
#include <vector>

namespace hmmcnn::nn::kernels {

namespace {

// Eight independent partial sums so the compiler can vectorize without
// reassociating a single accumulator.
template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
  Real acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  Real s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// flags[p * h + r] is 1 when row r of plane p has a nonzero entry. Rows
// without one contribute exact zeros and are skipped by the conv loops.
template <typename Real>
std::vector<char> nonzero_rows(const Real* data, std::size_t planes, std::size_t h, std::size_t w) {
  std::vector<char> flags(planes * h);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const std::size_t p = static_cast<std::size_t>(pi);
    for (std::size_t r = 0; r < h; ++r) {
      const Real* row = data + (p * h + r) * w;
      flags[p * h + r] = std::any_of(row, row + w, [](Real v) { return v != Real(0); }) ? 1 : 0;
    }
  }
  return flags;
}

}  // namespace

template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* w, const Real* bias,
                    Real* out, bool relu) {
  const std::size_t C = g.in_channels, H = g.in_h, W = g.in_w, K = g.kernel, S = g.stride;
  const std::size_t Ho = g.out_h(), Wo = g.out_w();
  const std::ptrdiff_t B = static_cast<std::ptrdiff_t>(g.batch);
  const std::ptrdiff_t F = static_cast<std::ptrdiff_t>(g.filters);
  const auto in_rows = nonzero_rows(in, g.batch * C, H, W);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t b = 0; b < B; ++b) {
    for (std::ptrdiff_t f = 0; f < F; ++f) {
      Real* plane = out + (static_cast<std::size_t>(b) * g.filters + static_cast<std::size_t>(f)) * Ho * Wo;
      const Real* wf = w + static_cast<std::size_t>(f) * C * K * K;
      for (std::size_t oy = 0; oy < Ho; ++oy) {
        Real* orow = plane + oy * Wo;
        std::fill(orow, orow + Wo, bias[f]);
        for (std::size_t c = 0; c < C; ++c) {
          const Real* ic = in + (static_cast<std::size_t>(b) * C + c) * H * W;
          const char* ic_rows = in_rows.data() + (static_cast<std::size_t>(b) * C + c) * H;
          for (std::size_t kh = 0; kh < K; ++kh) {
            if (!ic_rows[oy * S + kh]) continue;
            const Real* irow = ic + (oy * S + kh) * W;
            for (std::size_t kw = 0; kw < K; ++kw) {
              const Real wv = wf[(c * K + kh) * K + kw];
              const Real* src = irow + kw;
              if (S == 1) {
                for (std::size_t ox = 0; ox < Wo; ++ox) orow[ox] += wv * src[ox];
              } else {
                for (std::size_t ox = 0; ox < Wo; ++ox) orow[ox] += wv * src[ox * S];
              }
            }
          }
        }
        if (relu) {
          for (std::size_t ox = 0; ox < Wo; ++ox) orow[ox] = std::max(orow[ox], Real(0));
        }
      }
    }
  }
}

template <typename Real>
void conv2d_backward(const ConvGeometry& g, const Real* in, const Real* w, const Real* dout,
                     Real* dw, Real* db, Real* din) {
  const std::size_t C = g.in_channels, H = g.in_h, W = g.in_w, K = g.kernel, S = g.stride;
  const std::size_t F = g.filters, Ho = g.out_h(), Wo = g.out_w();
  const std::size_t wsize = F * C * K * K;
  const std::ptrdiff_t B = static_cast<std::ptrdiff_t>(g.batch);

  // Per-sample partial gradients, reduced below in sample order.
  std::vector<Real> dw_parts(g.batch * wsize);
  std::vector<Real> db_parts(g.batch * F);
  const auto in_rows = nonzero_rows(in, g.batch * C, H, W);
  const auto dout_rows = nonzero_rows(dout, g.batch * F, Ho, Wo);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t b = 0; b < B; ++b) {
    for (std::ptrdiff_t fi = 0; fi < static_cast<std::ptrdiff_t>(F); ++fi) {
      const std::size_t f = static_cast<std::size_t>(fi);
      const Real* dplane = dout + (static_cast<std::size_t>(b) * F + f) * Ho * Wo;
      Real* dwf = dw_parts.data() + static_cast<std::size_t>(b) * wsize + f * C * K * K;
      Real bsum = 0;
      for (std::size_t i = 0; i < Ho * Wo; ++i) bsum += dplane[i];
      db_parts[static_cast<std::size_t>(b) * F + f] = bsum;
      // One running row per kernel tap; collapsed to a scalar at the end.
      std::vector<Real> taps(K * K * Wo);
      for (std::size_t c = 0; c < C; ++c) {
        const Real* ic = in + (static_cast<std::size_t>(b) * C + c) * H * W;
        const char* ic_rows = in_rows.data() + (static_cast<std::size_t>(b) * C + c) * H;
        const char* d_rows = dout_rows.data() + (static_cast<std::size_t>(b) * F + f) * Ho;
        std::fill(taps.begin(), taps.end(), Real(0));
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          if (!d_rows[oy]) continue;
          const Real* drow = dplane + oy * Wo;
          for (std::size_t kh = 0; kh < K; ++kh) {
            if (!ic_rows[oy * S + kh]) continue;
            const Real* irow = ic + (oy * S + kh) * W;
            for (std::size_t kw = 0; kw < K; ++kw) {
              Real* acc = taps.data() + (kh * K + kw) * Wo;
              const Real* src = irow + kw;
              if (S == 1) {
                for (std::size_t ox = 0; ox < Wo; ++ox) acc[ox] += drow[ox] * src[ox];
              } else {
                for (std::size_t ox = 0; ox < Wo; ++ox) acc[ox] += drow[ox] * src[ox * S];
              }
            }
          }
        }
        for (std::size_t tap = 0; tap < K * K; ++tap) {
          const Real* acc = taps.data() + tap * Wo;
          Real s = 0;
          for (std::size_t ox = 0; ox < Wo; ++ox) s += acc[ox];
          dwf[c * K * K + tap] = s;
        }
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(wsize); ++i) {
    Real s = 0;
    for (std::size_t b = 0; b < g.batch; ++b) s += dw_parts[b * wsize + static_cast<std::size_t>(i)];
    dw[i] = s;
  }
  for (std::size_t f = 0; f < F; ++f) {
    Real s = 0;
    for (std::size_t b = 0; b < g.batch; ++b) s += db_parts[b * F + f];
    db[f] = s;
  }

  if (din == nullptr) return;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t b = 0; b < B; ++b) {
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
      const std::size_t c = static_cast<std::size_t>(ci);
      Real* dplane_in = din + (static_cast<std::size_t>(b) * C + c) * H * W;
      std::fill(dplane_in, dplane_in + H * W, Real(0));
      for (std::size_t f = 0; f < F; ++f) {
        const Real* dplane = dout + (static_cast<std::size_t>(b) * F + f) * Ho * Wo;
        const Real* wfc = w + (f * C + c) * K * K;
        const char* d_rows = dout_rows.data() + (static_cast<std::size_t>(b) * F + f) * Ho;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          if (!d_rows[oy]) continue;
          const Real* drow = dplane + oy * Wo;
          for (std::size_t kh = 0; kh < K; ++kh) {
            Real* dst_row = dplane_in + (oy * S + kh) * W;
            for (std::size_t kw = 0; kw < K; ++kw) {
              const Real wv = wfc[kh * K + kw];
              Real* dst = dst_row + kw;
              if (S == 1) {
                for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox] += wv * drow[ox];
              } else {
                for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox * S] += wv * drow[ox];
              }
            }
          }
        }
      }
    }
  }
}

template <typename Real>
void maxpool_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t pool,
                     const Real* in, Real* out, std::uint32_t* argmax) {
  const std::size_t ph = h / pool, pw = w / pool;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const std::size_t p = static_cast<std::size_t>(pi);
    const Real* src = in + p * h * w;
    for (std::size_t y = 0; y < ph; ++y) {
      for (std::size_t x = 0; x < pw; ++x) {
        std::size_t best = y * pool * w + x * pool;
        for (std::size_t dy = 0; dy < pool; ++dy) {
          for (std::size_t dx = 0; dx < pool; ++dx) {
            const std::size_t idx = (y * pool + dy) * w + x * pool + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        out[(p * ph + y) * pw + x] = src[best];
        argmax[(p * ph + y) * pw + x] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename Real>
void maxpool_backward(std::size_t planes, std::size_t h, std::size_t w, std::size_t pool,
                      const Real* dout, const std::uint32_t* argmax, Real* din) {
  const std::size_t cells = (h / pool) * (w / pool);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const std::size_t p = static_cast<std::size_t>(pi);
    Real* dst = din + p * h * w;
    std::fill(dst, dst + h * w, Real(0));
    for (std::size_t i = 0; i < cells; ++i) dst[argmax[p * cells + i]] += dout[p * cells + i];
  }
}

template <typename Real>
void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                   const Real* bias, Real* y, bool relu) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out); ++o) {
      Real v = bias[o] + dot(w + static_cast<std::size_t>(o) * in, x + static_cast<std::size_t>(b) * in, in);
      y[static_cast<std::size_t>(b) * out + static_cast<std::size_t>(o)] = relu ? std::max(v, Real(0)) : v;
    }
  }
}

template <typename Real>
void dense_backward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                    const Real* dy, Real* dw, Real* db, Real* dx) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oi = 0; oi < static_cast<std::ptrdiff_t>(out); ++oi) {
    const std::size_t o = static_cast<std::size_t>(oi);
    Real* row = dw + o * in;
    std::fill(row, row + in, Real(0));
    Real bsum = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const Real g = dy[b * out + o];
      bsum += g;
      if (g == Real(0)) continue;
      const Real* xb = x + b * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += g * xb[i];
    }
    db[o] = bsum;
  }
  if (dx == nullptr) return;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(batch); ++bi) {
    const std::size_t b = static_cast<std::size_t>(bi);
    Real* dxb = dx + b * in;
    std::fill(dxb, dxb + in, Real(0));
    for (std::size_t o = 0; o < out; ++o) {
      const Real g = dy[b * out + o];
      if (g == Real(0)) continue;
      const Real* wrow = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dxb[i] += g * wrow[i];
    }
  }
}

namespace serial {

template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* w, const Real* bias,
                    Real* out, bool relu) {
  const std::size_t C = g.in_channels, H = g.in_h, W = g.in_w, K = g.kernel, S = g.stride;
  const std::size_t F = g.filters, Ho = g.out_h(), Wo = g.out_w();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          Real v = bias[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < K; ++kh)
              for (std::size_t kw = 0; kw < K; ++kw)
                v += w[((f * C + c) * K + kh) * K + kw] *
                     in[((b * C + c) * H + oy * S + kh) * W + ox * S + kw];
          out[((b * F + f) * Ho + oy) * Wo + ox] = relu && v < Real(0) ? Real(0) : v;
        }
}

template <typename Real>
void conv2d_backward(const ConvGeometry& g, const Real* in, const Real* w, const Real* dout,
                     Real* dw, Real* db, Real* din) {
  const std::size_t C = g.in_channels, H = g.in_h, W = g.in_w, K = g.kernel, S = g.stride;
  const std::size_t F = g.filters, Ho = g.out_h(), Wo = g.out_w();
  std::fill(dw, dw + F * C * K * K, Real(0));
  std::fill(db, db + F, Real(0));
  if (din) std::fill(din, din + g.batch * C * H * W, Real(0));
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          const Real d = dout[((b * F + f) * Ho + oy) * Wo + ox];
          db[f] += d;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < K; ++kh)
              for (std::size_t kw = 0; kw < K; ++kw) {
                const std::size_t ii = ((b * C + c) * H + oy * S + kh) * W + ox * S + kw;
                const std::size_t wi = ((f * C + c) * K + kh) * K + kw;
                dw[wi] += d * in[ii];
                if (din) din[ii] += d * w[wi];
              }
        }
}

template <typename Real>
void maxpool_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t pool,
                     const Real* in, Real* out, std::uint32_t* argmax) {
  const std::size_t ph = h / pool, pw = w / pool;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t x = 0; x < pw; ++x) {
        std::size_t best = (y * pool) * w + x * pool;
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx) {
            const std::size_t idx = (y * pool + dy) * w + (x * pool + dx);
            if (in[p * h * w + idx] > in[p * h * w + best]) best = idx;
          }
        out[(p * ph + y) * pw + x] = in[p * h * w + best];
        argmax[(p * ph + y) * pw + x] = static_cast<std::uint32_t>(best);
      }
}

template <typename Real>
void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                   const Real* bias, Real* y, bool relu) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      Real v = bias[o];
      for (std::size_t i = 0; i < in; ++i) v += w[o * in + i] * x[b * in + i];
      y[b * out + o] = relu && v < Real(0) ? Real(0) : v;
    }
}

template <typename Real>
void dense_backward(std::size_t batch, std::size_t in, std::size_t out, const Real* x, const Real* w,
                    const Real* dy, Real* dw, Real* db, Real* dx) {
  std::fill(dw, dw + out * in, Real(0));
  std::fill(db, db + out, Real(0));
  if (dx) std::fill(dx, dx + batch * in, Real(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      db[o] += dy[b * out + o];
      for (std::size_t i = 0; i < in; ++i) {
        dw[o * in + i] += dy[b * out + o] * x[b * in + i];
        if (dx) dx[b * in + i] += dy[b * out + o] * w[o * in + i];
      }
    }
}

}  // namespace serial

#define HMMCNN_INSTANTIATE_KERNELS(NS, Real)                                                        \
  template void NS::conv2d_forward<Real>(const ConvGeometry&, const Real*, const Real*, const Real*, \
                                         Real*, bool);                                              \
  template void NS::conv2d_backward<Real>(const ConvGeometry&, const Real*, const Real*,            \
                                          const Real*, Real*, Real*, Real*);                        \
  template void NS::maxpool_forward<Real>(std::size_t, std::size_t, std::size_t, std::size_t,       \
                                          const Real*, Real*, std::uint32_t*);                      \
  template void NS::dense_forward<Real>(std::size_t, std::size_t, std::size_t, const Real*,         \
                                        const Real*, const Real*, Real*, bool);                     \
  template void NS::dense_backward<Real>(std::size_t, std::size_t, std::size_t, const Real*,        \
                                         const Real*, const Real*, Real*, Real*, Real*);

HMMCNN_INSTANTIATE_KERNELS(kernels, float)
HMMCNN_INSTANTIATE_KERNELS(kernels, double)
HMMCNN_INSTANTIATE_KERNELS(serial, float)
HMMCNN_INSTANTIATE_KERNELS(serial, double)
template void maxpool_backward<float>(std::size_t, std::size_t, std::size_t, std::size_t, const float*,
                                      const std::uint32_t*, float*);
template void maxpool_backward<double>(std::size_t, std::size_t, std::size_t, std::size_t, const double*,
                                       const std::uint32_t*, double*);

#undef HMMCNN_INSTANTIATE_KERNELS

}  // namespace hmmcnn::nn::kernels
