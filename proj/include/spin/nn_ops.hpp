#pragma once

// Feature-map primitives on N x C x H x W tensors. A rank-3 C x H x W input
// is treated as a batch of one and the result keeps rank 3.

#include <spin/ops.hpp>

namespace spin {

struct MapDims {
  int n, c, h, w;
  bool batched;
};

namespace detail {

template <typename T>
MapDims map_dims(const Tensor<T>& x, const char* op) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  throw ShapeError(std::string(op) + ": expected C x H x W or N x C x H x W, got " + to_string(x.shape()));
}

inline Shape map_shape(bool batched, int n, int c, int h, int w) {
  return batched ? Shape{n, c, h, w} : Shape{c, h, w};
}

// Unfolds a C x H x W image into a (C*k*k) x (Ho*Wo) column matrix.
template <typename T>
void im2col(const T* src, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(ch) * k * k + static_cast<std::size_t>(ki) * k + kj) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* line = src + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
          }
        }
      }
}

// Adjoint of im2col: scatters column entries back into an image (accumulating).
template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* dst) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(ch) * k * k + static_cast<std::size_t>(ki) * k + kj) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* line = dst + (static_cast<std::size_t>(ch) * h + iy) * w;
          const T* srow = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) line[ix] += srow[ox];
          }
        }
      }
}

}  // namespace detail

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
};

// Cross-correlation. Weight layout Cout x Cin x k x k; bias may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g = {}) {
  const MapDims d = detail::map_dims(x, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3))
    throw ShapeError("conv2d: weight must be Cout x Cin x k x k, got " + to_string(weight.shape()));
  const int cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
  if (k != 1 && k != 3 && k != 7)
    throw std::invalid_argument("conv2d: unsupported kernel size " + std::to_string(k) + " (expected 1, 3 or 7)");
  if (g.stride < 1 || g.padding < 0)
    throw std::invalid_argument("conv2d: invalid stride/padding " + std::to_string(g.stride) + "/" +
                                std::to_string(g.padding));
  if (cin != d.c)
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " + std::to_string(cin));
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(cout))
    throw ShapeError("conv2d: bias length " + std::to_string(bias.numel()) + " != " + std::to_string(cout));
  const int ho = (d.h + 2 * g.padding - k) / g.stride + 1;
  const int wo = (d.w + 2 * g.padding - k) / g.stride + 1;
  if (d.h + 2 * g.padding < k || d.w + 2 * g.padding < k || ho < 1 || wo < 1)
    throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " with stride " + std::to_string(g.stride) +
                                " does not fit input " + to_string(x.shape()));

  const bool pointwise = (k == 1 && g.stride == 1 && g.padding == 0);
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  const int kk = cin * k * k;
  std::vector<T> out(static_cast<std::size_t>(d.n) * cout * out_plane);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kk) * out_plane);
  using detail::Trans;
  for (int n = 0; n < d.n; ++n) {
    const T* src = x.ptr() + static_cast<std::size_t>(n) * cin * in_plane;
    T* dst = out.data() + static_cast<std::size_t>(n) * cout * out_plane;
    const T* rhs = src;
    if (!pointwise) {
      detail::im2col(src, cin, d.h, d.w, k, g.stride, g.padding, ho, wo, col.data());
      rhs = col.data();
    }
    detail::gemm<T>(Trans::kNo, Trans::kNo, cout, static_cast<int>(out_plane), kk, weight.ptr(), rhs, dst, false);
    if (bias.defined())
      for (int co = 0; co < cout; ++co) {
        T* p = dst + static_cast<std::size_t>(co) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) p[i] += bias[co];
      }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::from_op(
      detail::map_shape(d.batched, d.n, cout, ho, wo), std::move(out), std::move(inputs),
      [d, cout, cin, k, g, ho, wo, pointwise, in_plane, out_plane, kk](Node<T>& o) {
        auto& px = *o.parents[0];
        auto& pw = *o.parents[1];
        std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kk) * out_plane);
        std::vector<T> dcol(pointwise ? 0 : static_cast<std::size_t>(kk) * out_plane);
        for (int n = 0; n < d.n; ++n) {
          const T* src = px.data.data() + static_cast<std::size_t>(n) * cin * in_plane;
          const T* dout = o.grad.data() + static_cast<std::size_t>(n) * cout * out_plane;
          const T* rhs = src;
          if (!pointwise && pw.requires_grad) {
            detail::im2col(src, cin, d.h, d.w, k, g.stride, g.padding, ho, wo, col.data());
            rhs = col.data();
          }
          if (pw.requires_grad)
            detail::gemm<T>(Trans::kNo, Trans::kYes, cout, kk, static_cast<int>(out_plane), dout, rhs,
                            pw.grad.data(), true);
          if (px.requires_grad) {
            T* dx = px.grad.data() + static_cast<std::size_t>(n) * cin * in_plane;
            if (pointwise) {
              detail::gemm<T>(Trans::kYes, Trans::kNo, cin, static_cast<int>(out_plane), cout, pw.data.data(), dout,
                              dx, true);
            } else {
              detail::gemm<T>(Trans::kYes, Trans::kNo, kk, static_cast<int>(out_plane), cout, pw.data.data(), dout,
                              dcol.data(), false);
              detail::col2im(dcol.data(), cin, d.h, d.w, k, g.stride, g.padding, ho, wo, dx);
            }
          }
          if (o.parents.size() > 2 && o.parents[2]->requires_grad) {
            auto& pb = *o.parents[2];
            for (int co = 0; co < cout; ++co) {
              const T* p = dout + static_cast<std::size_t>(co) * out_plane;
              T s = T(0);
              for (std::size_t i = 0; i < out_plane; ++i) s += p[i];
              pb.grad[co] += s;
            }
          }
        }
      });
}

// Transposed convolution with stride 2 that doubles spatial extents.
// Weight layout Cin x Cout x k x k; k = 4 uses padding 1, k = 2 padding 0.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride = 2) {
  const MapDims d = detail::map_dims(x, "conv_transpose2d");
  if (stride != 2)
    throw std::invalid_argument("conv_transpose2d: unsupported stride " + std::to_string(stride) + " (only 2)");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3))
    throw ShapeError("conv_transpose2d: weight must be Cin x Cout x k x k, got " + to_string(weight.shape()));
  const int cin = weight.dim(0), cout = weight.dim(1), k = weight.dim(2);
  if (k != 2 && k != 4)
    throw std::invalid_argument("conv_transpose2d: unsupported kernel size " + std::to_string(k) + " (2 or 4)");
  if (cin != d.c)
    throw ShapeError("conv_transpose2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                     std::to_string(cin));
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(cout))
    throw ShapeError("conv_transpose2d: bias length mismatch");
  const int pad = (k - stride) / 2;
  const int ho = (d.h - 1) * stride - 2 * pad + k;
  const int wo = (d.w - 1) * stride - 2 * pad + k;
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  const int kk = cout * k * k;

  std::vector<T> out(static_cast<std::size_t>(d.n) * cout * out_plane, T(0));
  std::vector<T> col(static_cast<std::size_t>(kk) * in_plane);
  using detail::Trans;
  for (int n = 0; n < d.n; ++n) {
    const T* src = x.ptr() + static_cast<std::size_t>(n) * cin * in_plane;
    T* dst = out.data() + static_cast<std::size_t>(n) * cout * out_plane;
    detail::gemm<T>(Trans::kYes, Trans::kNo, kk, static_cast<int>(in_plane), cin, weight.ptr(), src, col.data(),
                    false);
    detail::col2im(col.data(), cout, ho, wo, k, stride, pad, d.h, d.w, dst);
    if (bias.defined())
      for (int co = 0; co < cout; ++co) {
        T* p = dst + static_cast<std::size_t>(co) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) p[i] += bias[co];
      }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::from_op(
      detail::map_shape(d.batched, d.n, cout, ho, wo), std::move(out), std::move(inputs),
      [d, cin, cout, k, stride, pad, ho, wo, in_plane, out_plane, kk](Node<T>& o) {
        auto& px = *o.parents[0];
        auto& pw = *o.parents[1];
        std::vector<T> col(static_cast<std::size_t>(kk) * in_plane);
        for (int n = 0; n < d.n; ++n) {
          const T* src = px.data.data() + static_cast<std::size_t>(n) * cin * in_plane;
          const T* dout = o.grad.data() + static_cast<std::size_t>(n) * cout * out_plane;
          detail::im2col(dout, cout, ho, wo, k, stride, pad, d.h, d.w, col.data());
          if (px.requires_grad)
            detail::gemm<T>(Trans::kNo, Trans::kNo, cin, static_cast<int>(in_plane), kk, pw.data.data(), col.data(),
                            px.grad.data() + static_cast<std::size_t>(n) * cin * in_plane, true);
          if (pw.requires_grad)
            detail::gemm<T>(Trans::kNo, Trans::kYes, cin, kk, static_cast<int>(in_plane), src, col.data(),
                            pw.grad.data(), true);
          if (o.parents.size() > 2 && o.parents[2]->requires_grad) {
            auto& pb = *o.parents[2];
            for (int co = 0; co < cout; ++co) {
              const T* p = dout + static_cast<std::size_t>(co) * out_plane;
              T s = T(0);
              for (std::size_t i = 0; i < out_plane; ++i) s += p[i];
              pb.grad[co] += s;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k = 2, int stride = 2) {
  const MapDims d = detail::map_dims(x, "maxpool2d");
  if (k != stride) throw std::invalid_argument("maxpool2d: only non-overlapping windows (k == stride) supported");
  if (d.h % stride != 0 || d.w % stride != 0)
    throw ShapeError("maxpool2d: extents " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                     " not divisible by stride " + std::to_string(stride));
  const int ho = d.h / stride, wo = d.w / stride;
  const std::size_t planes = static_cast<std::size_t>(d.n) * d.c;
  std::vector<T> out(planes * ho * wo);
  std::vector<std::uint32_t> arg(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * d.h * d.w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        std::size_t best = static_cast<std::size_t>(oy * stride) * d.w + ox * stride;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const std::size_t idx = static_cast<std::size_t>(oy * stride + i) * d.w + ox * stride + j;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = p * ho * wo + static_cast<std::size_t>(oy) * wo + ox;
        out[o] = src[best];
        arg[o] = static_cast<std::uint32_t>(best);
        detail::record_branch(best);
      }
  }
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w, out_plane = static_cast<std::size_t>(ho) * wo;
  return Tensor<T>::from_op(detail::map_shape(d.batched, d.n, d.c, ho, wo), std::move(out), {x},
                            [arg = std::move(arg), in_plane, out_plane](Node<T>& o) {
                              auto& px = *o.parents[0];
                              for (std::size_t i = 0; i < arg.size(); ++i)
                                px.grad[(i / out_plane) * in_plane + arg[i]] += o.grad[i];
                            });
}

// N x C x H x W -> N x C (C x H x W -> C).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const MapDims d = detail::map_dims(x, "global_avg_pool");
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t planes = static_cast<std::size_t>(d.n) * d.c;
  std::vector<T> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    T s = T(0);
    const T* src = x.ptr() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    out[p] = s / static_cast<T>(plane);
  }
  Shape s = d.batched ? Shape{d.n, d.c} : Shape{d.c};
  return Tensor<T>::from_op(std::move(s), std::move(out), {x}, [plane](Node<T>& o) {
    auto& px = *o.parents[0];
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t p = 0; p < o.grad.size(); ++p)
      for (std::size_t i = 0; i < plane; ++i) px.grad[p * plane + i] += o.grad[p] * inv;
  });
}

namespace detail {
struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

// Half-pixel (align_corners = false) source taps for a 1-D resize.
inline std::vector<LerpTap> lerp_taps(int in, int out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double w1 = (i1 == i0) ? 0.0 : src - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, w1};
  }
  return taps;
}
}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize_to(const Tensor<T>& x, int out_h, int out_w) {
  const MapDims d = detail::map_dims(x, "bilinear_resize");
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_resize: zero target extent " + std::to_string(out_h) + "x" +
                                std::to_string(out_w));
  const auto ty = detail::lerp_taps(d.h, out_h);
  const auto tx = detail::lerp_taps(d.w, out_w);
  const std::size_t planes = static_cast<std::size_t>(d.n) * d.c;
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  std::vector<T> out(planes * out_plane);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * in_plane;
    T* dst = out.data() + p * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
        const T top = wx0 * src[static_cast<std::size_t>(a.i0) * d.w + b.i0] + wx1 * src[static_cast<std::size_t>(a.i0) * d.w + b.i1];
        const T bot = wx0 * src[static_cast<std::size_t>(a.i1) * d.w + b.i0] + wx1 * src[static_cast<std::size_t>(a.i1) * d.w + b.i1];
        dst[static_cast<std::size_t>(oy) * out_w + ox] = wy0 * top + wy1 * bot;
      }
    }
  }
  return Tensor<T>::from_op(detail::map_shape(d.batched, d.n, d.c, out_h, out_w), std::move(out), {x},
                            [ty, tx, planes, in_plane, out_plane, w = d.w, out_h, out_w](Node<T>& o) {
                              auto& px = *o.parents[0];
                              for (std::size_t p = 0; p < planes; ++p) {
                                T* dsrc = px.grad.data() + p * in_plane;
                                const T* g = o.grad.data() + p * out_plane;
                                for (int oy = 0; oy < out_h; ++oy) {
                                  const auto& a = ty[static_cast<std::size_t>(oy)];
                                  const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
                                  for (int ox = 0; ox < out_w; ++ox) {
                                    const auto& b = tx[static_cast<std::size_t>(ox)];
                                    const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
                                    const T v = g[static_cast<std::size_t>(oy) * out_w + ox];
                                    dsrc[static_cast<std::size_t>(a.i0) * w + b.i0] += v * wy0 * wx0;
                                    dsrc[static_cast<std::size_t>(a.i0) * w + b.i1] += v * wy0 * wx1;
                                    dsrc[static_cast<std::size_t>(a.i1) * w + b.i0] += v * wy1 * wx0;
                                    dsrc[static_cast<std::size_t>(a.i1) * w + b.i1] += v * wy1 * wx1;
                                  }
                                }
                              }
                            });
}

// Resize by a scale factor; target extents are round(extent * scale).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double scale) {
  const MapDims d = detail::map_dims(x, "bilinear_resize");
  const int oh = static_cast<int>(std::lround(d.h * scale));
  const int ow = static_cast<int>(std::lround(d.w * scale));
  return bilinear_resize_to(x, oh, ow);
}

enum class NormMode { kTrain, kEval };

// Per-channel batch normalization over batch and space. In train mode the
// running statistics are updated in place (momentum 0.1, unbiased variance).
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                      Tensor<T>& running_var, NormMode mode, T momentum = T(0.1), T eps = T(1e-5)) {
  const MapDims d = detail::map_dims(x, "batchnorm2d");
  const std::size_t c = static_cast<std::size_t>(d.c);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
    throw ShapeError("batchnorm2d: statistics/affine length does not match " + std::to_string(d.c) + " channels");
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t count = plane * static_cast<std::size_t>(d.n);

  std::vector<T> mu(c), invstd(c);
  if (mode == NormMode::kTrain) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (int n = 0; n < d.n; ++n) {
        const T* p = x.ptr() + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0;
      for (int n = 0; n < d.n; ++n) {
        const T* p = x.ptr() + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : var;
      running_mean[ch] = static_cast<T>((1 - static_cast<double>(momentum)) * running_mean[ch] + momentum * m);
      running_var[ch] = static_cast<T>((1 - static_cast<double>(momentum)) * running_var[ch] + momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      invstd[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  std::vector<T> out(x.numel());
  for (int n = 0; n < d.n; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        out[off + i] = gamma[ch] * ((x[off + i] - mu[ch]) * invstd[ch]) + beta[ch];
    }

  const bool train = mode == NormMode::kTrain;
  return Tensor<T>::from_op(x.shape(), std::move(out), {x, gamma, beta},
                            [mu, invstd, d, c, plane, count, train](Node<T>& o) {
                              auto& px = *o.parents[0];
                              auto& pg = *o.parents[1];
                              auto& pb = *o.parents[2];
                              for (std::size_t ch = 0; ch < c; ++ch) {
                                T sum_g = T(0), sum_gx = T(0);
                                for (int n = 0; n < d.n; ++n) {
                                  const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) {
                                    const T xhat = (px.data[off + i] - mu[ch]) * invstd[ch];
                                    sum_g += o.grad[off + i];
                                    sum_gx += o.grad[off + i] * xhat;
                                  }
                                }
                                if (pg.requires_grad) pg.grad[ch] += sum_gx;
                                if (pb.requires_grad) pb.grad[ch] += sum_g;
                                if (!px.requires_grad) continue;
                                const T gm = pg.data[ch];
                                const T inv_count = T(1) / static_cast<T>(count);
                                for (int n = 0; n < d.n; ++n) {
                                  const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) {
                                    if (train) {
                                      const T xhat = (px.data[off + i] - mu[ch]) * invstd[ch];
                                      px.grad[off + i] += gm * invstd[ch] *
                                                          (o.grad[off + i] - inv_count * sum_g - xhat * inv_count * sum_gx);
                                    } else {
                                      px.grad[off + i] += gm * invstd[ch] * o.grad[off + i];
                                    }
                                  }
                                }
                              }
                            });
}

// Mean per-pixel cross-entropy of channel logits against integer labels.
// Optional pixel weights (length N*H*W) turn the mean into a weighted mean.
template <typename T>
Tensor<T> cross_entropy_channels(const Tensor<T>& logits, const std::vector<int>& labels,
                                 const std::vector<T>& pixel_weights = {}) {
  const MapDims d = detail::map_dims(logits, "cross_entropy_channels");
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t pixels = plane * static_cast<std::size_t>(d.n);
  if (labels.size() != pixels)
    throw ShapeError("cross_entropy_channels: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(pixels) + " pixels");
  if (!pixel_weights.empty() && pixel_weights.size() != pixels)
    throw ShapeError("cross_entropy_channels: pixel weight length mismatch");
  for (int l : labels)
    if (l < 0 || l >= d.c)
      throw std::out_of_range("cross_entropy_channels: class index " + std::to_string(l) + " outside [0, " +
                              std::to_string(d.c - 1) + "]");
  T total_w = T(0);
  for (std::size_t p = 0; p < pixels; ++p) total_w += pixel_weights.empty() ? T(1) : pixel_weights[p];

  std::vector<T> prob(logits.numel());
  T loss = T(0);
  for (int n = 0; n < d.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = static_cast<std::size_t>(n) * d.c * plane + i;
      T mx = logits[base];
      for (int ch = 1; ch < d.c; ++ch) mx = std::max(mx, logits[base + ch * plane]);
      T s = T(0);
      for (int ch = 0; ch < d.c; ++ch) s += (prob[base + ch * plane] = std::exp(logits[base + ch * plane] - mx));
      for (int ch = 0; ch < d.c; ++ch) prob[base + ch * plane] /= s;
      const std::size_t pix = static_cast<std::size_t>(n) * plane + i;
      const T w = pixel_weights.empty() ? T(1) : pixel_weights[pix];
      const int lab = labels[pix];
      loss += w * (std::log(s) + mx - logits[base + static_cast<std::size_t>(lab) * plane]);
    }
  const T norm = total_w > T(0) ? total_w : T(1);
  loss /= norm;
  return Tensor<T>::from_op({1}, {loss}, {logits},
                            [prob = std::move(prob), labels, pixel_weights, d, plane, norm](Node<T>& o) {
                              auto& pl = *o.parents[0];
                              const T g = o.grad[0] / norm;
                              for (int n = 0; n < d.n; ++n)
                                for (std::size_t i = 0; i < plane; ++i) {
                                  const std::size_t pix = static_cast<std::size_t>(n) * plane + i;
                                  const T w = pixel_weights.empty() ? T(1) : pixel_weights[pix];
                                  if (w == T(0)) continue;
                                  const std::size_t base = static_cast<std::size_t>(n) * d.c * plane + i;
                                  for (int ch = 0; ch < d.c; ++ch) {
                                    const std::size_t k = base + static_cast<std::size_t>(ch) * plane;
                                    pl.grad[k] += g * w * (prob[k] - (labels[pix] == ch ? T(1) : T(0)));
                                  }
                                }
                            });
}

// Differentiable intersection over union of probabilities against a binary
// target: sum(p*g) / (sum(p) + sum(g) - sum(p*g)). Empty union scores 1.
template <typename T>
Tensor<T> soft_iou(const Tensor<T>& pred, const std::vector<T>& gt) {
  if (gt.size() != pred.numel())
    throw ShapeError("soft_iou: prediction has " + std::to_string(pred.numel()) + " values, target " +
                     std::to_string(gt.size()));
  T inter = T(0), sp = T(0), sg = T(0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const T p = pred[i];
    if (!(p >= T(0) && p <= T(1)))
      throw std::domain_error("soft_iou: prediction value outside [0, 1] at index " + std::to_string(i));
    inter += p * gt[i];
    sp += p;
    sg += gt[i];
  }
  const T uni = sp + sg - inter;
  if (uni == T(0)) return Tensor<T>({1}, {T(1)});
  return Tensor<T>::from_op({1}, {inter / uni}, {pred}, [gt, inter, uni](Node<T>& o) {
    auto& pp = *o.parents[0];
    const T g = o.grad[0] / (uni * uni);
    for (std::size_t i = 0; i < gt.size(); ++i) pp.grad[i] += g * (gt[i] * uni - inter * (T(1) - gt[i]));
  });
}

}  // namespace spin
