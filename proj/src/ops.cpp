// Copyright 2026 The crowdpoint Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crowdpoint/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <type_traits>

namespace crowdpoint::ops {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;
template <typename T>
using StridedMap = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMap = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

void require_rank(const Shape& s, int rank, const char* op) {
  if (static_cast<int>(s.size()) != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                                shape_str(s));
  }
}

// Pads a shape of rank <= 4 on the left with ones.
std::array<int64_t, 4> as4(const Shape& s) {
  std::array<int64_t, 4> out{1, 1, 1, 1};
  const size_t off = 4 - s.size();
  for (size_t i = 0; i < s.size(); ++i) out[off + i] = s[i];
  return out;
}

struct Broadcast {
  std::array<int64_t, 4> dims;
  std::array<int64_t, 4> bstride;
  bool same;
};

Broadcast make_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size() || a.size() > 4) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
  }
  Broadcast bc{as4(a), {}, a == b};
  const auto bd = as4(b);
  int64_t stride = 1;
  for (int i = 3; i >= 0; --i) {
    if (bd[i] != bc.dims[i] && bd[i] != 1) {
      throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(b) + " to " + shape_str(a));
    }
    bc.bstride[i] = bd[i] == 1 ? 0 : stride;
    stride *= bd[i];
  }
  return bc;
}

template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  int64_t i = 0;
  for (int64_t n = 0; n < bc.dims[0]; ++n)
    for (int64_t c = 0; c < bc.dims[1]; ++c)
      for (int64_t h = 0; h < bc.dims[2]; ++h) {
        const int64_t base = n * bc.bstride[0] + c * bc.bstride[1] + h * bc.bstride[2];
        for (int64_t w = 0; w < bc.dims[3]; ++w, ++i) f(i, base + w * bc.bstride[3]);
      }
}

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F&& fwd, D&& dfdx) {
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.shape());
  for (int64_t i = 0; i < in.numel(); ++i) out[i] = fwd(in[i]);
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [xn, dfdx](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    const Tensor<T>& in = xn->value;
    for (int64_t i = 0; i < in.numel(); ++i) gx[i] += self.grad[i] * dfdx(in[i], self.value[i]);
  });
}

// Column matrix for a stride-1 same convolution of a single image.
template <typename T>
void im2col(const T* x, int64_t channels, int64_t height, int64_t width, int64_t k, T* col) {
  const int64_t pad = k / 2;
  const int64_t hw = height * width;
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * hw;
        const int64_t dx = kj - pad;
        const int64_t w_lo = std::max<int64_t>(0, -dx);
        const int64_t w_hi = std::min<int64_t>(width, width - dx);
        for (int64_t h = 0; h < height; ++h) {
          T* dst = row + h * width;
          const int64_t ih = h + ki - pad;
          if (ih < 0 || ih >= height || w_lo >= w_hi) {
            std::fill(dst, dst + width, T(0));
            continue;
          }
          const T* src = x + (c * height + ih) * width;
          std::fill(dst, dst + w_lo, T(0));
          std::memcpy(dst + w_lo, src + w_lo + dx, sizeof(T) * static_cast<size_t>(w_hi - w_lo));
          std::fill(dst + w_hi, dst + width, T(0));
        }
      }
}

template <typename T>
void col2im_add(const T* col, int64_t channels, int64_t height, int64_t width, int64_t k, T* x) {
  const int64_t pad = k / 2;
  const int64_t hw = height * width;
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * hw;
        const int64_t dx = kj - pad;
        const int64_t w_lo = std::max<int64_t>(0, -dx);
        const int64_t w_hi = std::min<int64_t>(width, width - dx);
        for (int64_t h = 0; h < height; ++h) {
          const int64_t ih = h + ki - pad;
          if (ih < 0 || ih >= height) continue;
          const T* src = row + h * width;
          T* dst = x + (c * height + ih) * width + dx;
          for (int64_t w = w_lo; w < w_hi; ++w) dst[w] += src[w];
        }
      }
}

template <typename T>
void softmax_rows(Mat<T>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

// dS = P o (dP - rowsum(dP o P))
template <typename T>
Mat<T> softmax_backward(const Mat<T>& p, const Mat<T>& dp) {
  Mat<T> ds = dp;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const T dot = p.row(r).dot(dp.row(r));
    ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
  }
  return ds;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Broadcast bc = make_broadcast(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  if (bc.same) {
    out.add_(b.value());
  } else {
    for_each_broadcast(bc, [&](int64_t i, int64_t j) { out[i] += bv[j]; });
  }
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return make_result<T>(std::move(out), {a.node(), b.node()}, [an, bn, bc](Node<T>& self) {
    if (an->requires_grad) an->grad_buffer().add_(self.grad);
    if (bn->requires_grad) {
      Tensor<T>& gb = bn->grad_buffer();
      if (bc.same) {
        gb.add_(self.grad);
      } else {
        for_each_broadcast(bc, [&](int64_t i, int64_t j) { gb[j] += self.grad[i]; });
      }
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Broadcast bc = make_broadcast(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for_each_broadcast(bc, [&](int64_t i, int64_t j) { out[i] *= bv[j]; });
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return make_result<T>(std::move(out), {a.node(), b.node()}, [an, bn, bc](Node<T>& self) {
    const T* av = an->value.data();
    const T* bv = bn->value.data();
    if (an->requires_grad) {
      Tensor<T>& ga = an->grad_buffer();
      for_each_broadcast(bc, [&](int64_t i, int64_t j) { ga[i] += self.grad[i] * bv[j]; });
    }
    if (bn->requires_grad) {
      Tensor<T>& gb = bn->grad_buffer();
      for_each_broadcast(bc, [&](int64_t i, int64_t j) { gb[j] += self.grad[i] * av[i]; });
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return make_result<T>(std::move(out), {a.node(), b.node()}, [an, bn](Node<T>& self) {
    if (an->requires_grad) an->grad_buffer().add_(self.grad);
    if (bn->requires_grad) {
      Tensor<T>& gb = bn->grad_buffer();
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary(
      a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * T(kInvSqrt2))); },
      [](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * T(kInvSqrt2))) + v * T(kInvSqrt2Pi) * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(weight.shape(), 4, "conv2d weight");
  const int64_t n = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t out_c = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == in_c, "conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                                      std::to_string(in_c));
  require(weight.dim(3) == k && k % 2 == 1, "conv2d: kernel must be square and odd, got " + shape_str(weight.shape()));
  if (bias) require(bias->shape() == Shape{out_c}, "conv2d: bias shape " + shape_str(bias->shape()));

  const int64_t hw = h * w, rows = in_c * k * k;
  Tensor<T> out({n, out_c, h, w});
  std::vector<T> col(k == 1 ? 0 : static_cast<size_t>(rows * hw));
  CMapMat<T> wm(weight.value().data(), out_c, rows);
  for (int64_t b = 0; b < n; ++b) {
    const T* xb = x.value().data() + b * in_c * hw;
    if (k != 1) im2col(xb, in_c, h, w, k, col.data());
    CMapMat<T> cm(k == 1 ? xb : col.data(), rows, hw);
    MapMat<T> om(out.data() + b * out_c * hw, out_c, hw);
    if (std::is_same_v<T, float> && !grad_enabled()) {
      // Inference sums in double so fp32 outputs carry a single rounding.
      Eigen::MatrixXd acc = wm.template cast<double>() * cm.template cast<double>();
      if (bias) {
        for (int64_t o = 0; o < out_c; ++o) acc.row(o).array() += static_cast<double>(bias->value()[o]);
      }
      om = acc.template cast<T>();
      continue;
    }
    om.noalias() = wm * cm;
    if (bias) {
      for (int64_t o = 0; o < out_c; ++o) om.row(o).array() += bias->value()[o];
    }
  }
  count_macs(n * out_c * rows * hw);

  std::vector<std::shared_ptr<Node<T>>> parents{x.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  auto* xn = x.node().get();
  auto* wn = weight.node().get();
  auto* bn = bias ? bias->node().get() : nullptr;
  return make_result<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
    std::vector<T> col(k == 1 ? 0 : static_cast<size_t>(rows * hw));
    std::vector<T> dcol(static_cast<size_t>(rows * hw));
    CMapMat<T> wm(wn->value.data(), out_c, rows);
    for (int64_t b = 0; b < n; ++b) {
      CMapMat<T> g(self.grad.data() + b * out_c * hw, out_c, hw);
      if (wn->requires_grad) {
        const T* xb = xn->value.data() + b * in_c * hw;
        if (k != 1) im2col(xb, in_c, h, w, k, col.data());
        CMapMat<T> cm(k == 1 ? xb : col.data(), rows, hw);
        MapMat<T> gw(wn->grad_buffer().data(), out_c, rows);
        gw.noalias() += g * cm.transpose();
      }
      if (bn && bn->requires_grad) {
        Tensor<T>& gb = bn->grad_buffer();
        for (int64_t o = 0; o < out_c; ++o) gb[o] += g.row(o).sum();
      }
      if (xn->requires_grad) {
        T* gx = xn->grad_buffer().data() + b * in_c * hw;
        if (k == 1) {
          MapMat<T> gxm(gx, in_c, hw);
          gxm.noalias() += wm.transpose() * g;
        } else {
          MapMat<T> dc(dcol.data(), rows, hw);
          dc.noalias() = wm.transpose() * g;
          col2im_add(dcol.data(), in_c, h, w, k, gx);
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool2x2(const Var<T>& x) {
  require_rank(x.shape(), 4, "max_pool2x2");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "max_pool2x2: spatial size must be even, got " + shape_str(x.shape()));
  const int64_t oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  const T* in = x.value().data();
  int64_t o = 0;
  for (int64_t p = 0; p < n * c; ++p) {
    const T* plane = in + p * h * w;
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j, ++o) {
        int64_t best = (2 * i) * w + 2 * j;
        for (int64_t di = 0; di < 2; ++di)
          for (int64_t dj = 0; dj < 2; ++dj) {
            const int64_t idx = (2 * i + di) * w + 2 * j + dj;
            if (plane[idx] > plane[best]) best = idx;
          }
        out[o] = plane[best];
        argmax[static_cast<size_t>(o)] = p * h * w + best;
      }
  }
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [xn, argmax = std::move(argmax)](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[static_cast<int64_t>(i)];
  });
}

namespace {
struct Lerp {
  int64_t i0, i1;
  double w0, w1;
};

std::vector<Lerp> upsample_table(int64_t in) {
  std::vector<Lerp> t(static_cast<size_t>(2 * in));
  for (int64_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    const auto i0 = static_cast<int64_t>(std::floor(src));
    const int64_t i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - static_cast<double>(i0);
    t[static_cast<size_t>(o)] = {i0, i1, 1.0 - l1, l1};
  }
  return t;
}
}  // namespace

template <typename T>
Var<T> upsample_bilinear2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample_bilinear2x");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto th = upsample_table(h), tw = upsample_table(w);
  const int64_t oh = 2 * h, ow = 2 * w;
  Tensor<T> out({n, c, oh, ow});
  const T* in = x.value().data();
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = in + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      const Lerp& a = th[static_cast<size_t>(i)];
      for (int64_t j = 0; j < ow; ++j) {
        const Lerp& b = tw[static_cast<size_t>(j)];
        dst[i * ow + j] = static_cast<T>(a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
                                         a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]));
      }
    }
  }
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [=](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (int64_t p = 0; p < n * c; ++p) {
      T* dst = gx.data() + p * h * w;
      const T* g = self.grad.data() + p * oh * ow;
      for (int64_t i = 0; i < oh; ++i) {
        const Lerp& a = th[static_cast<size_t>(i)];
        for (int64_t j = 0; j < ow; ++j) {
          const Lerp& b = tw[static_cast<size_t>(j)];
          const double gv = g[i * ow + j];
          dst[a.i0 * w + b.i0] += static_cast<T>(a.w0 * b.w0 * gv);
          dst[a.i0 * w + b.i1] += static_cast<T>(a.w0 * b.w1 * gv);
          dst[a.i1 * w + b.i0] += static_cast<T>(a.w1 * b.w0 * gv);
          dst[a.i1 * w + b.i1] += static_cast<T>(a.w1 * b.w1 * gv);
        }
      }
    }
  });
}

template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, bool training, T momentum, T eps) {
  require_rank(x.shape(), 4, "batch_norm2d");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c} && running_mean.shape() == Shape{c} &&
              running_var.shape() == Shape{c},
          "batch_norm2d: parameter shapes do not match " + std::to_string(c) + " channels");
  const int64_t count = n * hw;
  std::vector<T> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  const T* in = x.value().data();
  for (int64_t ch = 0; ch < c; ++ch) {
    T mu, var;
    if (training) {
      double s = 0, s2 = 0;
      for (int64_t b = 0; b < n; ++b) {
        const T* p = in + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      for (int64_t b = 0; b < n; ++b) {
        const T* p = in + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) s2 += (p[i] - m) * (p[i] - m);
      }
      mu = static_cast<T>(m);
      var = static_cast<T>(s2 / static_cast<double>(count));
      const T unbiased = count > 1 ? static_cast<T>(s2 / static_cast<double>(count - 1)) : var;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    if (!(var + eps > T(0))) throw std::invalid_argument("batch_norm2d: variance + eps must be positive");
    mean[static_cast<size_t>(ch)] = mu;
    inv_std[static_cast<size_t>(ch)] = T(1) / std::sqrt(var + eps);
  }
  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t off = (b * c + ch) * hw;
      const T mu = mean[static_cast<size_t>(ch)], is = inv_std[static_cast<size_t>(ch)];
      const T g = gamma.value()[ch], be = beta.value()[ch];
      for (int64_t i = 0; i < hw; ++i) {
        const T xh = (in[off + i] - mu) * is;
        xhat[off + i] = xh;
        out[off + i] = g * xh + be;
      }
    }
  auto* xn = x.node().get();
  auto* gn = gamma.node().get();
  auto* bn = beta.node().get();
  return make_result<T>(
      std::move(out), {x.node(), gamma.node(), beta.node()},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        const T* g = self.grad.data();
        for (int64_t ch = 0; ch < c; ++ch) {
          double sg = 0, sgx = 0;
          for (int64_t b = 0; b < n; ++b) {
            const int64_t off = (b * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              sg += g[off + i];
              sgx += g[off + i] * xhat[off + i];
            }
          }
          if (gn->requires_grad) gn->grad_buffer()[ch] += static_cast<T>(sgx);
          if (bn->requires_grad) bn->grad_buffer()[ch] += static_cast<T>(sg);
          if (!xn->requires_grad) continue;
          T* gx = xn->grad_buffer().data();
          const T k = gn->value[ch] * inv_std[static_cast<size_t>(ch)];
          for (int64_t b = 0; b < n; ++b) {
            const int64_t off = (b * c + ch) * hw;
            if (training) {
              const T mg = static_cast<T>(sg / static_cast<double>(count));
              const T mgx = static_cast<T>(sgx / static_cast<double>(count));
              for (int64_t i = 0; i < hw; ++i) gx[off + i] += k * (g[off + i] - mg - xhat[off + i] * mgx);
            } else {
              for (int64_t i = 0; i < hw; ++i) gx[off + i] += k * g[off + i];
            }
          }
        }
      });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  require_rank(s0, 4, "concat_channels");
  int64_t total = 0;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            "concat_channels: shape " + shape_str(s) + " incompatible with " + shape_str(s0));
    total += s[1];
  }
  const int64_t n = s0[0], hw = s0[2] * s0[3];
  Tensor<T> out({n, total, s0[2], s0[3]});
  std::vector<int64_t> offsets;
  std::vector<std::shared_ptr<Node<T>>> parents;
  int64_t off = 0;
  for (const auto& v : xs) {
    const int64_t c = v.dim(1);
    for (int64_t b = 0; b < n; ++b) {
      std::memcpy(out.data() + (b * total + off) * hw, v.value().data() + b * c * hw,
                  sizeof(T) * static_cast<size_t>(c * hw));
    }
    offsets.push_back(off);
    parents.push_back(v.node());
    off += c;
  }
  std::vector<Node<T>*> raw;
  for (const auto& p : parents) raw.push_back(p.get());
  return make_result<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
    for (size_t i = 0; i < raw.size(); ++i) {
      Node<T>* p = raw[i];
      if (!p->requires_grad) continue;
      const int64_t c = p->value.dim(1);
      Tensor<T>& gp = p->grad_buffer();
      for (int64_t b = 0; b < n; ++b) {
        const T* src = self.grad.data() + (b * total + offsets[i]) * hw;
        T* dst = gp.data() + b * c * hw;
        for (int64_t j = 0; j < c * hw; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int64_t begin, int64_t end) {
  require_rank(x.shape(), 4, "slice_channels");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(0 <= begin && begin < end && end <= c, "slice_channels: invalid range");
  const int64_t m = end - begin;
  Tensor<T> out({n, m, x.dim(2), x.dim(3)});
  for (int64_t b = 0; b < n; ++b) {
    std::memcpy(out.data() + b * m * hw, x.value().data() + (b * c + begin) * hw, sizeof(T) * static_cast<size_t>(m * hw));
  }
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [=](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (int64_t b = 0; b < n; ++b) {
      const T* src = self.grad.data() + b * m * hw;
      T* dst = gx.data() + (b * c + begin) * hw;
      for (int64_t j = 0; j < m * hw; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> spatial_mean(const Var<T>& x) {
  require_rank(x.shape(), 4, "spatial_mean");
  const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), 1, 1});
  for (int64_t p = 0; p < nc; ++p) {
    double s = 0;
    for (int64_t i = 0; i < hw; ++i) s += x.value()[p * hw + i];
    out[p] = static_cast<T>(s / static_cast<double>(hw));
  }
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [=](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (int64_t p = 0; p < nc; ++p) {
      const T g = self.grad[p] / static_cast<T>(hw);
      for (int64_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
    }
  });
}

template <typename T>
Var<T> channel_mean(const Var<T>& x) {
  require_rank(x.shape(), 4, "channel_mean");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, 1, x.dim(2), x.dim(3)});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) out[b * hw + i] += x.value()[(b * c + ch) * hw + i];
  for (int64_t i = 0; i < out.numel(); ++i) out[i] /= static_cast<T>(c);
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [=](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) gx[(b * c + ch) * hw + i] += self.grad[b * hw + i] / static_cast<T>(c);
  });
}

template <typename T>
Var<T> channel_max(const Var<T>& x) {
  require_rank(x.shape(), 4, "channel_max");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, 1, x.dim(2), x.dim(3)});
  std::vector<int64_t> arg(static_cast<size_t>(n * hw));
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < hw; ++i) {
      int64_t best = b * c * hw + i;
      for (int64_t ch = 1; ch < c; ++ch) {
        const int64_t idx = (b * c + ch) * hw + i;
        if (x.value()[idx] > x.value()[best]) best = idx;
      }
      out[b * hw + i] = x.value()[best];
      arg[static_cast<size_t>(b * hw + i)] = best;
    }
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [xn, arg = std::move(arg)](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += self.grad[static_cast<int64_t>(i)];
  });
}

template <typename T>
Var<T> to_tokens(const Var<T>& x) {
  require_rank(x.shape(), 4, "to_tokens");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, hw, c});
  for (int64_t b = 0; b < n; ++b) {
    CMapMat<T> src(x.value().data() + b * c * hw, c, hw);
    MapMat<T>(out.data() + b * c * hw, hw, c) = src.transpose();
  }
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [=](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    for (int64_t b = 0; b < n; ++b) {
      MapMat<T>(gx.data() + b * c * hw, c, hw) += CMapMat<T>(self.grad.data() + b * c * hw, hw, c).transpose();
    }
  });
}

template <typename T>
Var<T> from_tokens(const Var<T>& tokens, int64_t height, int64_t width) {
  require_rank(tokens.shape(), 3, "from_tokens");
  const int64_t n = tokens.dim(0), hw = tokens.dim(1), c = tokens.dim(2);
  require(hw == height * width, "from_tokens: token count does not match spatial size");
  Tensor<T> out({n, c, height, width});
  for (int64_t b = 0; b < n; ++b) {
    MapMat<T>(out.data() + b * c * hw, c, hw) = CMapMat<T>(tokens.value().data() + b * c * hw, hw, c).transpose();
  }
  auto* tn = tokens.node().get();
  return make_result<T>(std::move(out), {tokens.node()}, [=](Node<T>& self) {
    Tensor<T>& gt = tn->grad_buffer();
    for (int64_t b = 0; b < n; ++b) {
      MapMat<T>(gt.data() + b * c * hw, hw, c) += CMapMat<T>(self.grad.data() + b * c * hw, c, hw).transpose();
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>* bias) {
  require_rank(x.shape(), 3, "linear");
  require_rank(weight.shape(), 2, "linear weight");
  const int64_t n = x.dim(0), l = x.dim(1), in = x.dim(2), out_f = weight.dim(0);
  require(weight.dim(1) == in, "linear: weight expects " + std::to_string(weight.dim(1)) + " features, got " +
                                   std::to_string(in));
  if (bias) require(bias->shape() == Shape{out_f}, "linear: bias shape " + shape_str(bias->shape()));
  const int64_t rows = n * l;
  Tensor<T> out({n, l, out_f});
  CMapMat<T> xm(x.value().data(), rows, in);
  CMapMat<T> wm(weight.value().data(), out_f, in);
  MapMat<T> om(out.data(), rows, out_f);
  om.noalias() = xm * wm.transpose();
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias->value().data(), out_f);
    om.rowwise() += bv;
  }
  count_macs(rows * in * out_f);
  std::vector<std::shared_ptr<Node<T>>> parents{x.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  auto* xn = x.node().get();
  auto* wn = weight.node().get();
  auto* bn = bias ? bias->node().get() : nullptr;
  return make_result<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
    CMapMat<T> g(self.grad.data(), rows, out_f);
    if (xn->requires_grad) {
      MapMat<T>(xn->grad_buffer().data(), rows, in).noalias() += g * CMapMat<T>(wn->value.data(), out_f, in);
    }
    if (wn->requires_grad) {
      MapMat<T>(wn->grad_buffer().data(), out_f, in).noalias() += g.transpose() * CMapMat<T>(xn->value.data(), rows, in);
    }
    if (bn && bn->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bn->grad_buffer().data(), out_f) += g.colwise().sum();
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_rank(x.shape(), 3, "layer_norm");
  const int64_t c = x.dim(2), rows = x.dim(0) * x.dim(1);
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "layer_norm: parameter shape mismatch");
  Tensor<T> out(x.shape()), xhat(x.shape());
  std::vector<T> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* p = x.value().data() + r * c;
    double m = 0, v = 0;
    for (int64_t i = 0; i < c; ++i) m += p[i];
    m /= static_cast<double>(c);
    for (int64_t i = 0; i < c; ++i) v += (p[i] - m) * (p[i] - m);
    v /= static_cast<double>(c);
    const T is = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t i = 0; i < c; ++i) {
      const T xh = static_cast<T>(p[i] - m) * is;
      xhat[r * c + i] = xh;
      out[r * c + i] = gamma.value()[i] * xh + beta.value()[i];
    }
  }
  auto* xn = x.node().get();
  auto* gn = gamma.node().get();
  auto* bn = beta.node().get();
  return make_result<T>(std::move(out), {x.node(), gamma.node(), beta.node()},
                        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
                          std::vector<T> dxh(static_cast<size_t>(c));
                          for (int64_t r = 0; r < rows; ++r) {
                            const T* g = self.grad.data() + r * c;
                            const T* xh = xhat.data() + r * c;
                            if (gn->requires_grad) {
                              Tensor<T>& gg = gn->grad_buffer();
                              for (int64_t i = 0; i < c; ++i) gg[i] += g[i] * xh[i];
                            }
                            if (bn->requires_grad) {
                              Tensor<T>& gb = bn->grad_buffer();
                              for (int64_t i = 0; i < c; ++i) gb[i] += g[i];
                            }
                            if (!xn->requires_grad) continue;
                            double m1 = 0, m2 = 0;
                            for (int64_t i = 0; i < c; ++i) {
                              dxh[static_cast<size_t>(i)] = g[i] * gn->value[i];
                              m1 += dxh[static_cast<size_t>(i)];
                              m2 += dxh[static_cast<size_t>(i)] * xh[i];
                            }
                            m1 /= static_cast<double>(c);
                            m2 /= static_cast<double>(c);
                            T* gx = xn->grad_buffer().data() + r * c;
                            const T is = inv_std[static_cast<size_t>(r)];
                            for (int64_t i = 0; i < c; ++i) {
                              gx[i] += is * static_cast<T>(dxh[static_cast<size_t>(i)] - m1 - xh[i] * m2);
                            }
                          }
                        });
}

template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, Tensor<T>* weights) {
  require_rank(q.shape(), 3, "multi_head_attention");
  require(q.shape() == k.shape() && q.shape() == v.shape(), "multi_head_attention: q, k, v shapes differ");
  const int64_t n = q.dim(0), l = q.dim(1), c = q.dim(2);
  require(heads > 0 && c % heads == 0, "multi_head_attention: channels not divisible by heads");
  const int64_t d = c / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(d));
  Tensor<T> out({n, l, c});
  Tensor<T> probs({n, heads, l, l});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t h = 0; h < heads; ++h) {
      const int64_t off = b * l * c + h * d;
      CStridedMap<T> qh(q.value().data() + off, l, d, Eigen::OuterStride<>(c));
      CStridedMap<T> kh(k.value().data() + off, l, d, Eigen::OuterStride<>(c));
      CStridedMap<T> vh(v.value().data() + off, l, d, Eigen::OuterStride<>(c));
      Mat<T> s = sc * (qh * kh.transpose());
      softmax_rows(s);
      MapMat<T>(probs.data() + (b * heads + h) * l * l, l, l) = s;
      StridedMap<T> oh(out.data() + off, l, d, Eigen::OuterStride<>(c));
      oh.noalias() = s * vh;
    }
  count_macs(2 * n * l * l * c);
  if (weights) *weights = probs;
  auto* qn = q.node().get();
  auto* kn = k.node().get();
  auto* vn = v.node().get();
  return make_result<T>(std::move(out), {q.node(), k.node(), v.node()},
                        [=, probs = std::move(probs)](Node<T>& self) {
                          for (int64_t b = 0; b < n; ++b)
                            for (int64_t h = 0; h < heads; ++h) {
                              const int64_t off = b * l * c + h * d;
                              CMapMat<T> p(probs.data() + (b * heads + h) * l * l, l, l);
                              CStridedMap<T> go(self.grad.data() + off, l, d, Eigen::OuterStride<>(c));
                              CStridedMap<T> qh(qn->value.data() + off, l, d, Eigen::OuterStride<>(c));
                              CStridedMap<T> kh(kn->value.data() + off, l, d, Eigen::OuterStride<>(c));
                              CStridedMap<T> vh(vn->value.data() + off, l, d, Eigen::OuterStride<>(c));
                              if (vn->requires_grad) {
                                StridedMap<T>(vn->grad_buffer().data() + off, l, d, Eigen::OuterStride<>(c)).noalias() +=
                                    p.transpose() * go;
                              }
                              const Mat<T> dp = go * vh.transpose();
                              const Mat<T> ds = softmax_backward<T>(Mat<T>(p), dp);
                              if (qn->requires_grad) {
                                StridedMap<T>(qn->grad_buffer().data() + off, l, d, Eigen::OuterStride<>(c)).noalias() +=
                                    sc * (ds * kh);
                              }
                              if (kn->requires_grad) {
                                StridedMap<T>(kn->grad_buffer().data() + off, l, d, Eigen::OuterStride<>(c)).noalias() +=
                                    sc * (ds.transpose() * qh);
                              }
                            }
                        });
}

template <typename T>
Var<T> codebook_attention(const Var<T>& x, const Var<T>& codes, Tensor<T>* weights) {
  require_rank(x.shape(), 3, "codebook_attention");
  require_rank(codes.shape(), 2, "codebook_attention codes");
  const int64_t n = x.dim(0), l = x.dim(1), c = x.dim(2), kc = codes.dim(0);
  require(codes.dim(1) == c, "codebook_attention: code dimension " + std::to_string(codes.dim(1)) +
                                 " does not match feature channels " + std::to_string(c));
  require(kc >= 1, "codebook_attention: empty dictionary");
  const T sc = T(1) / std::sqrt(static_cast<T>(c));
  CMapMat<T> cm(codes.value().data(), kc, c);
  Tensor<T> out({n, l, c});
  Tensor<T> probs({n, l, kc});
  for (int64_t b = 0; b < n; ++b) {
    CMapMat<T> xb(x.value().data() + b * l * c, l, c);
    Mat<T> s = sc * (xb * cm.transpose());
    softmax_rows(s);
    MapMat<T>(probs.data() + b * l * kc, l, kc) = s;
    MapMat<T>(out.data() + b * l * c, l, c).noalias() = s * cm;
  }
  count_macs(2 * n * l * kc * c);
  if (weights) *weights = probs;
  auto* xn = x.node().get();
  auto* cn = codes.node().get();
  return make_result<T>(std::move(out), {x.node(), codes.node()}, [=, probs = std::move(probs)](Node<T>& self) {
    CMapMat<T> cm(cn->value.data(), kc, c);
    for (int64_t b = 0; b < n; ++b) {
      CMapMat<T> p(probs.data() + b * l * kc, l, kc);
      CMapMat<T> go(self.grad.data() + b * l * c, l, c);
      CMapMat<T> xb(xn->value.data() + b * l * c, l, c);
      const Mat<T> dp = go * cm.transpose();
      const Mat<T> ds = softmax_backward<T>(Mat<T>(p), dp);
      if (cn->requires_grad) {
        MapMat<T> gc(cn->grad_buffer().data(), kc, c);
        gc.noalias() += p.transpose() * go;
        gc.noalias() += sc * (ds.transpose() * xb);
      }
      if (xn->requires_grad) {
        MapMat<T>(xn->grad_buffer().data() + b * l * c, l, c).noalias() += sc * (ds * cm);
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double s = 0;
  for (T v : x.value().values()) s += v;
  Tensor<T> out({1}, static_cast<T>(s));
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [xn](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    const T g = self.grad[0];
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
  require(x.shape() == w.shape(), "weighted_sum: shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < w.numel(); ++i) s += static_cast<double>(x.value()[i]) * w[i];
  Tensor<T> out({1}, static_cast<T>(s));
  auto* xn = x.node().get();
  return make_result<T>(std::move(out), {x.node()}, [xn, w](Node<T>& self) {
    Tensor<T>& gx = xn->grad_buffer();
    const T g = self.grad[0];
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g * w[i];
  });
}

#define CROWDPOINT_INSTANTIATE_OPS(T)                                                                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> scale(const Var<T>&, T);                                                                     \
  template Var<T> relu(const Var<T>&);                                                                         \
  template Var<T> sigmoid(const Var<T>&);                                                                      \
  template Var<T> gelu(const Var<T>&);                                                                         \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>*);                                         \
  template Var<T> max_pool2x2(const Var<T>&);                                                                  \
  template Var<T> upsample_bilinear2x(const Var<T>&);                                                          \
  template Var<T> batch_norm2d(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T, T); \
  template Var<T> concat_channels(std::span<const Var<T>>);                                                    \
  template Var<T> slice_channels(const Var<T>&, int64_t, int64_t);                                             \
  template Var<T> spatial_mean(const Var<T>&);                                                                 \
  template Var<T> channel_mean(const Var<T>&);                                                                 \
  template Var<T> channel_max(const Var<T>&);                                                                  \
  template Var<T> to_tokens(const Var<T>&);                                                                    \
  template Var<T> from_tokens(const Var<T>&, int64_t, int64_t);                                                \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>*);                                         \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                                  \
  template Var<T> multi_head_attention(const Var<T>&, const Var<T>&, const Var<T>&, int, Tensor<T>*);          \
  template Var<T> codebook_attention(const Var<T>&, const Var<T>&, Tensor<T>*);                                \
  template Var<T> sum(const Var<T>&);                                                                          \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

CROWDPOINT_INSTANTIATE_OPS(float)
CROWDPOINT_INSTANTIATE_OPS(double)

}  // namespace crowdpoint::ops
