#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonovote/tensor.hpp"

namespace sonovote {

// Raw layer kernels. Forward functions allocate their outputs; backward
// functions accumulate into caller-zeroed gradient tensors so one batch can
// sum contributions sample by sample.

namespace detail {

inline std::size_t conv_out_dim(std::size_t in, int kernel, int stride,
                                int pad) {
  const long long span =
      static_cast<long long>(in) + 2LL * pad - kernel;
  if (span < 0) throw std::invalid_argument("kernel larger than padded input");
  return static_cast<std::size_t>(span / stride + 1);
}

// Unpacks one sample's receptive fields into a [cin*kh*kw, oh*ow] matrix so
// convolution becomes a single matrix product. Out-of-bounds taps read 0.
template <class T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w,
            int kernel, int stride, int pad, std::size_t oh, std::size_t ow,
            T* col) {
  for (std::size_t c = 0; c < cin; ++c) {
    const T* plane = x + c * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = col + ((c * kernel + ky) * kernel + kx) * (oh * ow);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long long iy =
              static_cast<long long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long long>(h)) {
            std::fill(row + oy * ow, row + (oy + 1) * ow, T(0));
            continue;
          }
          const T* src = plane + iy * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long long ix =
                static_cast<long long>(ox) * stride + kx - pad;
            row[oy * ow + ox] =
                (ix < 0 || ix >= static_cast<long long>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, std::size_t cin, std::size_t h, std::size_t w,
            int kernel, int stride, int pad, std::size_t oh, std::size_t ow,
            T* x) {
  for (std::size_t c = 0; c < cin; ++c) {
    T* plane = x + c * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row = col + ((c * kernel + ky) * kernel + kx) * (oh * ow);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long long iy =
              static_cast<long long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          T* dst = plane + iy * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long long ix =
                static_cast<long long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
            dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& weight,
                       const Tensor<T>& bias, int stride, int pad) {
  if (x.shape().size() != 4) throw std::invalid_argument("conv input not 4-D");
  if (weight.shape().size() != 4) {
    throw std::invalid_argument("conv weight not 4-D");
  }
  const std::size_t n = x.shape()[0], cin = x.shape()[1];
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const std::size_t cout = weight.shape()[0];
  const int kernel = static_cast<int>(weight.shape()[2]);
  if (weight.shape()[1] != cin) {
    throw std::invalid_argument("conv weight expects " +
                                std::to_string(weight.shape()[1]) +
                                " input channels, got " + std::to_string(cin));
  }
  const std::size_t oh = detail::conv_out_dim(h, kernel, stride, pad);
  const std::size_t ow = detail::conv_out_dim(w, kernel, stride, pad);
  const std::size_t patch = cin * kernel * kernel;

  Tensor<T> y({n, cout, oh, ow});
  std::vector<T> col(patch * oh * ow);
  for (std::size_t s = 0; s < n; ++s) {
    detail::im2col(x.data() + s * cin * h * w, cin, h, w, kernel,
                   stride, pad, oh, ow, col.data());
    T* ys = y.data() + s * cout * oh * ow;
    gemm_nn(weight.data(), col.data(), ys, cout, patch, oh * ow);
    for (std::size_t c = 0; c < cout; ++c) {
      const T b = bias.data()[c];
      T* row = ys + c * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) row[i] += b;
    }
  }
  return y;
}

template <class T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& weight,
                   const Tensor<T>& gout, int stride, int pad,
                   Tensor<T>& gx, Tensor<T>& gweight, Tensor<T>& gbias) {
  const std::size_t n = x.shape()[0], cin = x.shape()[1];
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const std::size_t cout = weight.shape()[0];
  const int kernel = static_cast<int>(weight.shape()[2]);
  const std::size_t oh = gout.shape()[2], ow = gout.shape()[3];
  const std::size_t patch = cin * kernel * kernel;

  std::vector<T> col(patch * oh * ow);
  std::vector<T> gcol(patch * oh * ow);
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = x.data() + s * cin * h * w;
    const T* gs = gout.data() + s * cout * oh * ow;
    detail::im2col(xs, cin, h, w, kernel, stride, pad, oh, ow, col.data());
    gemm_nt(gs, col.data(), gweight.data(), cout, oh * ow, patch);
    for (std::size_t c = 0; c < cout; ++c) {
      T acc = 0;
      const T* row = gs + c * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += row[i];
      gbias.data()[c] += acc;
    }
    std::fill(gcol.begin(), gcol.end(), T(0));
    gemm_tn(weight.data(), gs, gcol.data(), patch, cout, oh * ow);
    detail::col2im(gcol.data(), cin, h, w, kernel, stride, pad, oh, ow,
                   gx.data() + s * cin * h * w);
  }
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  }
  return y;
}

template <class T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gout, Tensor<T>& gx) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    gx.data()[i] += x.data()[i] > T(0) ? gout.data()[i] : T(0);
  }
}

// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
// `argmax` records the flat input offset of each winner for the backward
// pass; ties go to the earliest position in scan order.
template <class T>
Tensor<T> maxpool_forward(const Tensor<T>& x, std::vector<std::size_t>& argmax) {
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) {
    throw std::invalid_argument("maxpool input smaller than 2x2");
  }
  Tensor<T> y({n, c, oh, ow});
  argmax.assign(y.numel(), 0);
  std::size_t o = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (s * c + ch) * h * w;
      const std::size_t base = (s * c + ch) * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = 2 * oy * w + 2 * ox;
          T val = plane[best];
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t k : cand) {
            if (plane[k] > val) {
              val = plane[k];
              best = k;
            }
          }
          y.data()[o] = val;
          argmax[o] = base + best;
          ++o;
        }
      }
    }
  }
  return y;
}

template <class T>
void maxpool_backward(const std::vector<std::size_t>& argmax,
                      const Tensor<T>& gout, Tensor<T>& gx) {
  for (std::size_t i = 0; i < gout.numel(); ++i) {
    gx.data()[argmax[i]] += gout.data()[i];
  }
}

template <class T>
Tensor<T> gap_forward(const Tensor<T>& x) {
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  Tensor<T> y({n, c});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (s * c + ch) * hw;
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      y.at(s, ch) = acc / static_cast<T>(hw);
    }
  }
  return y;
}

template <class T>
void gap_backward(const Tensor<T>& x, const Tensor<T>& gout, Tensor<T>& gx) {
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T g = gout.at(s, ch) / static_cast<T>(hw);
      T* plane = gx.data() + (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) plane[i] += g;
    }
  }
}

// y = x * W^T + b with W stored [out, in].
template <class T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight,
                        const Tensor<T>& bias) {
  const std::size_t n = x.shape()[0], in = x.shape()[1];
  const std::size_t out = weight.shape()[0];
  if (weight.shape()[1] != in) {
    throw std::invalid_argument("dense weight expects " +
                                std::to_string(weight.shape()[1]) +
                                " inputs, got " + std::to_string(in));
  }
  Tensor<T> y({n, out});
  gemm_nt(x.data(), weight.data(), y.data(), n, in, out);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < out; ++o) y.at(s, o) += bias.data()[o];
  }
  return y;
}

template <class T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weight,
                    const Tensor<T>& gout, Tensor<T>& gx, Tensor<T>& gweight,
                    Tensor<T>& gbias) {
  const std::size_t n = x.shape()[0], in = x.shape()[1];
  const std::size_t out = weight.shape()[0];
  gemm_tn(gout.data(), x.data(), gweight.data(), out, n,
          in);
  gemm_nn(gout.data(), weight.data(), gx.data(), n, out,
          in);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < out; ++o) gbias.data()[o] += gout.at(s, o);
  }
}

template <class T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("add operands differ in shape: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    y.data()[i] = a.data()[i] + b.data()[i];
  }
  return y;
}

template <class T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] ||
      sa[3] != sb[3]) {
    throw std::invalid_argument("concat operands incompatible: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  const std::size_t n = sa[0], ca = sa[1], cb = sb[1];
  const std::size_t hw = sa[2] * sa[3];
  Tensor<T> y({n, ca + cb, sa[2], sa[3]});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.data() + s * ca * hw, ca * hw,
                y.data() + s * (ca + cb) * hw);
    std::copy_n(b.data() + s * cb * hw, cb * hw,
                y.data() + (s * (ca + cb) + ca) * hw);
  }
  return y;
}

template <class T>
void concat_channels_backward(const Tensor<T>& gout, Tensor<T>& ga,
                              Tensor<T>& gb) {
  const std::size_t n = ga.shape()[0], ca = ga.shape()[1], cb = gb.shape()[1];
  const std::size_t hw = ga.shape()[2] * ga.shape()[3];
  for (std::size_t s = 0; s < n; ++s) {
    const T* src = gout.data() + s * (ca + cb) * hw;
    T* da = ga.data() + s * ca * hw;
    T* db = gb.data() + s * cb * hw;
    for (std::size_t i = 0; i < ca * hw; ++i) da[i] += src[i];
    for (std::size_t i = 0; i < cb * hw; ++i) db[i] += src[ca * hw + i];
  }
}

}  // namespace sonovote
