#include "resseg/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <unsupported/Eigen/SpecialFunctions>

namespace resseg {

void Conv2dSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kh <= 0 || kw <= 0 || stride <= 0 ||
      padding < 0 || groups <= 0) {
    throw ConfigError("conv spec: all extents must be positive (in=" + std::to_string(in_channels) +
                      " out=" + std::to_string(out_channels) + " groups=" + std::to_string(groups) +
                      ")");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("conv spec: groups=" + std::to_string(groups) + " must divide in=" +
                      std::to_string(in_channels) + " and out=" + std::to_string(out_channels));
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

template <typename Scalar>
using Mat = RowMatrix<Scalar>;

struct Geometry {
  int channels;
  int h, w;     // image extents
  int kh, kw;
  int stride, pad;
  int oh, ow;   // column-grid extents
};

// Unfolds `channels` planes of an image into a (channels·kh·kw) x (oh·ow) matrix.
template <typename Scalar>
void im2col(const Scalar* img, const Geometry& g, Scalar* col) {
  const std::size_t cols = static_cast<std::size_t>(g.oh) * g.ow;
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        Scalar* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * cols;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          Scalar* dst = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.ow, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back into image planes.
template <typename Scalar>
void col2im(const Scalar* col, const Geometry& g, Scalar* img) {
  const std::size_t cols = static_cast<std::size_t>(g.oh) * g.ow;
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const Scalar* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * cols;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const Scalar* src = row + static_cast<std::size_t>(oy) * g.ow;
          Scalar* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Conv2dSpec& s) {
  return s.kh == 1 && s.kw == 1 && s.stride == 1 && s.padding == 0;
}

void check_conv_inputs(const Shape& x, const Conv2dSpec& spec, const Shape& w, const Shape& expect_w,
                       const char* op) {
  spec.validate();
  if (x.c != spec.in_channels) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.c) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (w != expect_w) {
    throw ShapeError(std::string(op) + ": weight shape " + w.str() + " expected " + expect_w.str());
  }
}

template <typename Scalar>
void check_bias(const std::optional<Var<Scalar>>& bias, const Conv2dSpec& spec, const char* op) {
  if (spec.has_bias != bias.has_value()) {
    throw ShapeError(std::string(op) + ": bias presence does not match spec");
  }
  if (bias && bias->shape() != spec.bias_shape()) {
    throw ShapeError(std::string(op) + ": bias shape " + bias->shape().str() + " expected " +
                     spec.bias_shape().str());
  }
}

template <typename Scalar>
void add_bias(Tensor<Scalar>& out, const Tensor<Scalar>& b) {
  const Shape s = out.shape();
  const Eigen::Index plane = static_cast<Eigen::Index>(s.plane());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) ArrayMap<Scalar>(out.plane_ptr(n, c), plane) += b[c];
}

template <typename Scalar>
void accumulate_bias_grad(const Tensor<Scalar>& g, Tensor<Scalar>& gb) {
  const Shape s = g.shape();
  const Eigen::Index plane = static_cast<Eigen::Index>(s.plane());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) gb[c] += ConstArrayMap<Scalar>(g.plane_ptr(n, c), plane).sum();
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Conv2dSpec& spec, const Var<Scalar>& weight,
                   const std::optional<Var<Scalar>>& bias) {
  const Shape xs = x.shape();
  check_conv_inputs(xs, spec, weight.shape(), spec.weight_shape(), "conv2d");
  check_bias(bias, spec, "conv2d");
  if (xs.h + 2 * spec.padding < spec.kh || xs.w + 2 * spec.padding < spec.kw) {
    throw ShapeError("conv2d: input " + xs.str() + " smaller than kernel after padding");
  }

  const int groups = spec.groups;
  const int icg = spec.in_channels / groups;
  const int ocg = spec.out_channels / groups;
  const Geometry geo{icg, xs.h, xs.w, spec.kh, spec.kw, spec.stride, spec.padding,
                     spec.out_extent(xs.h), spec.out_extent_w(xs.w)};
  const Eigen::Index krows = static_cast<Eigen::Index>(icg) * spec.kh * spec.kw;
  const Eigen::Index cols = static_cast<Eigen::Index>(geo.oh) * geo.ow;
  const bool pointwise = is_pointwise(spec);

  Tensor<Scalar> out(Shape{xs.n, spec.out_channels, geo.oh, geo.ow});
  Mat<Scalar> col;
  if (!pointwise) col.resize(krows, cols);
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = weight.value();
  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      ConstMatrixMap<Scalar> wg(wv.data() + static_cast<std::size_t>(g) * ocg * krows, ocg, krows);
      MatrixMap<Scalar> og(out.plane_ptr(n, g * ocg), ocg, cols);
      if (pointwise) {
        og.noalias() = wg * ConstMatrixMap<Scalar>(xv.plane_ptr(n, g * icg), icg, cols);
      } else {
        im2col(xv.plane_ptr(n, g * icg), geo, col.data());
        og.noalias() = wg * col;
      }
    }
  }
  if (bias) add_bias(out, bias->value());

  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<Scalar>(
      std::move(out), std::move(inputs), "conv2d",
      [geo, groups, icg, ocg, krows, cols, pointwise](Node<Scalar>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        const Tensor<Scalar>& gout = self.grad;
        const int batch = nx.value.shape().n;
        Mat<Scalar> col(pointwise ? 0 : krows, pointwise ? 0 : cols);
        Mat<Scalar> dcol(pointwise ? 0 : krows, pointwise ? 0 : cols);
        for (int n = 0; n < batch; ++n) {
          for (int g = 0; g < groups; ++g) {
            ConstMatrixMap<Scalar> go(gout.plane_ptr(n, g * ocg), ocg, cols);
            ConstMatrixMap<Scalar> wg(nw.value.data() + static_cast<std::size_t>(g) * ocg * krows,
                                      ocg, krows);
            if (pointwise) {
              ConstMatrixMap<Scalar> xg(nx.value.plane_ptr(n, g * icg), icg, cols);
              if (nw.requires_grad) {
                MatrixMap<Scalar> dw(
                    nw.grad_buffer().data() + static_cast<std::size_t>(g) * ocg * krows, ocg, krows);
                dw.noalias() += go * xg.transpose();
              }
              if (nx.requires_grad) {
                MatrixMap<Scalar> dx(nx.grad_buffer().plane_ptr(n, g * icg), icg, cols);
                dx.noalias() += wg.transpose() * go;
              }
              continue;
            }
            if (nw.requires_grad) {
              im2col(nx.value.plane_ptr(n, g * icg), geo, col.data());
              MatrixMap<Scalar> dw(
                  nw.grad_buffer().data() + static_cast<std::size_t>(g) * ocg * krows, ocg, krows);
              dw.noalias() += go * col.transpose();
            }
            if (nx.requires_grad) {
              dcol.noalias() = wg.transpose() * go;
              col2im(dcol.data(), geo, nx.grad_buffer().plane_ptr(n, g * icg));
            }
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          accumulate_bias_grad(gout, self.inputs[2]->grad_buffer());
        }
      });
}

template <typename Scalar>
Var<Scalar> transpose_conv2d(const Var<Scalar>& x, const Conv2dSpec& spec,
                             const Var<Scalar>& weight, const std::optional<Var<Scalar>>& bias) {
  const Shape xs = x.shape();
  check_conv_inputs(xs, spec, weight.shape(), spec.transposed_weight_shape(), "transpose_conv2d");
  check_bias(bias, spec, "transpose_conv2d");
  const int oh = spec.transposed_out_extent(xs.h);
  const int ow = spec.transposed_out_extent_w(xs.w);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("transpose_conv2d: input " + xs.str() + " yields empty output");
  }

  const int groups = spec.groups;
  const int icg = spec.in_channels / groups;
  const int ocg = spec.out_channels / groups;
  // The column grid is the input; the "image" is the upsampled output.
  const Geometry geo{ocg, oh, ow, spec.kh, spec.kw, spec.stride, spec.padding, xs.h, xs.w};
  const Eigen::Index krows = static_cast<Eigen::Index>(ocg) * spec.kh * spec.kw;
  const Eigen::Index cols = static_cast<Eigen::Index>(xs.h) * xs.w;

  Tensor<Scalar> out(Shape{xs.n, spec.out_channels, oh, ow});
  Mat<Scalar> col(krows, cols);
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = weight.value();
  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      ConstMatrixMap<Scalar> wg(wv.data() + static_cast<std::size_t>(g) * icg * krows, icg, krows);
      ConstMatrixMap<Scalar> xg(xv.plane_ptr(n, g * icg), icg, cols);
      col.noalias() = wg.transpose() * xg;
      col2im(col.data(), geo, out.plane_ptr(n, g * ocg));
    }
  }
  if (bias) add_bias(out, bias->value());

  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<Scalar>(
      std::move(out), std::move(inputs), "transpose_conv2d",
      [geo, groups, icg, krows, cols](Node<Scalar>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        const Tensor<Scalar>& gout = self.grad;
        const int batch = nx.value.shape().n;
        const int ocg = geo.channels;
        Mat<Scalar> dcol(krows, cols);
        for (int n = 0; n < batch; ++n) {
          for (int g = 0; g < groups; ++g) {
            im2col(gout.plane_ptr(n, g * ocg), geo, dcol.data());
            ConstMatrixMap<Scalar> wg(nw.value.data() + static_cast<std::size_t>(g) * icg * krows,
                                      icg, krows);
            if (nx.requires_grad) {
              MatrixMap<Scalar> dx(nx.grad_buffer().plane_ptr(n, g * icg), icg, cols);
              dx.noalias() += wg * dcol;
            }
            if (nw.requires_grad) {
              ConstMatrixMap<Scalar> xg(nx.value.plane_ptr(n, g * icg), icg, cols);
              MatrixMap<Scalar> dw(
                  nw.grad_buffer().data() + static_cast<std::size_t>(g) * icg * krows, icg, krows);
              dw.noalias() += xg * dcol.transpose();
            }
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          accumulate_bias_grad(gout, self.inputs[2]->grad_buffer());
        }
      });
}

template <typename Scalar>
BatchNormState<Scalar> BatchNormState<Scalar>::make(int channels, Scalar momentum,
                                                    Scalar epsilon) {
  BatchNormState st;
  const Shape s{1, channels, 1, 1};
  st.gamma = Var<Scalar>(Tensor<Scalar>::ones(s), true);
  st.beta = Var<Scalar>(Tensor<Scalar>::zeros(s), true);
  st.running_mean = Tensor<Scalar>::zeros(s);
  st.running_var = Tensor<Scalar>::ones(s);
  st.momentum = momentum;
  st.epsilon = epsilon;
  return st;
}

template <typename Scalar>
Var<Scalar> batchnorm2d(const Var<Scalar>& x, BatchNormState<Scalar>& st, Mode mode) {
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Shape xs = x.shape();
  if (xs.c != st.channels()) {
    throw ShapeError("batchnorm2d: input has " + std::to_string(xs.c) + " channels, layer has " +
                     std::to_string(st.channels()));
  }
  const Eigen::Index plane = static_cast<Eigen::Index>(xs.plane());
  const std::size_t count = static_cast<std::size_t>(xs.n) * xs.plane();
  const Tensor<Scalar>& xv = x.value();

  Arr mean(xs.c), invstd(xs.c);
  if (mode == Mode::Train) {
    if (count == 0) throw ShapeError("batchnorm2d: empty batch");
    for (int c = 0; c < xs.c; ++c) {
      Scalar s = 0;
      for (int n = 0; n < xs.n; ++n) s += ConstArrayMap<Scalar>(xv.plane_ptr(n, c), plane).sum();
      const Scalar m = s / static_cast<Scalar>(count);
      Scalar ss = 0;
      for (int n = 0; n < xs.n; ++n)
        ss += (ConstArrayMap<Scalar>(xv.plane_ptr(n, c), plane) - m).square().sum();
      const Scalar var = ss / static_cast<Scalar>(count);
      mean[c] = m;
      invstd[c] = Scalar(1) / std::sqrt(var + st.epsilon);
      const Scalar unbiased = count > 1 ? ss / static_cast<Scalar>(count - 1) : var;
      st.running_mean[c] = (Scalar(1) - st.momentum) * st.running_mean[c] + st.momentum * m;
      st.running_var[c] = (Scalar(1) - st.momentum) * st.running_var[c] + st.momentum * unbiased;
    }
  } else {
    for (int c = 0; c < xs.c; ++c) {
      mean[c] = st.running_mean[c];
      invstd[c] = Scalar(1) / std::sqrt(st.running_var[c] + st.epsilon);
    }
  }

  Tensor<Scalar> xhat(xs);
  Tensor<Scalar> out(xs);
  const Tensor<Scalar>& gamma = st.gamma.value();
  const Tensor<Scalar>& beta = st.beta.value();
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      ArrayMap<Scalar> xh(xhat.plane_ptr(n, c), plane);
      xh = (ConstArrayMap<Scalar>(xv.plane_ptr(n, c), plane) - mean[c]) * invstd[c];
      ArrayMap<Scalar>(out.plane_ptr(n, c), plane) = xh * gamma[c] + beta[c];
    }
  }

  return make_result<Scalar>(
      std::move(out), {x, st.gamma, st.beta}, "batchnorm2d",
      [xhat = std::move(xhat), invstd, mode, plane, count](Node<Scalar>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const Shape s = nx.value.shape();
        const Tensor<Scalar>& g = self.grad;
        for (int c = 0; c < s.c; ++c) {
          Scalar sum_g = 0, sum_gx = 0;
          for (int n = 0; n < s.n; ++n) {
            ConstArrayMap<Scalar> go(g.plane_ptr(n, c), plane);
            ConstArrayMap<Scalar> xh(xhat.plane_ptr(n, c), plane);
            sum_g += go.sum();
            sum_gx += (go * xh).sum();
          }
          if (ng.requires_grad) ng.grad_buffer()[c] += sum_gx;
          if (nb.requires_grad) nb.grad_buffer()[c] += sum_g;
          if (!nx.requires_grad) continue;
          const Scalar gamma = ng.value[c];
          const Scalar k = gamma * invstd[c];
          Tensor<Scalar>& gx = nx.grad_buffer();
          for (int n = 0; n < s.n; ++n) {
            ConstArrayMap<Scalar> go(g.plane_ptr(n, c), plane);
            ArrayMap<Scalar> dx(gx.plane_ptr(n, c), plane);
            if (mode == Mode::Train) {
              ConstArrayMap<Scalar> xh(xhat.plane_ptr(n, c), plane);
              const Scalar m = static_cast<Scalar>(count);
              dx += k * (go - sum_g / m - xh * (sum_gx / m));
            } else {
              dx += k * go;
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  const Scalar inv_sqrt2 = static_cast<Scalar>(1.0 / std::numbers::sqrt2);
  Tensor<Scalar> out(x.shape());
  const auto xa = x.value().array();
  out.array() = Scalar(0.5) * xa * (Scalar(1) + (xa * inv_sqrt2).erf());
  return make_result<Scalar>(std::move(out), {x}, "gelu", [inv_sqrt2](Node<Scalar>& self) {
    auto& nx = *self.inputs[0];
    const auto xa = nx.value.array();
    const Scalar inv_sqrt_2pi = static_cast<Scalar>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    nx.grad_buffer().array() +=
        self.grad.array() * (Scalar(0.5) * (Scalar(1) + (xa * inv_sqrt2).erf()) +
                             xa * (Scalar(-0.5) * xa.square()).exp() * inv_sqrt_2pi);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().max(Scalar(0));
  return make_result<Scalar>(std::move(out), {x}, "relu", [](Node<Scalar>& self) {
    auto& nx = *self.inputs[0];
    nx.grad_buffer().array() +=
        (nx.value.array() > Scalar(0)).select(self.grad.array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  const Tensor<Scalar>& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<Scalar>(sigmoid_value(xv[i]));
  // The backward rule reads the output through the node's own value.
  return make_result<Scalar>(std::move(out), {x}, "sigmoid", [](Node<Scalar>& self) {
    auto& nx = *self.inputs[0];
    const auto y = self.value.array();
    nx.grad_buffer().array() += self.grad.array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
Var<Scalar> maxpool2d(const Var<Scalar>& x, int kernel, int stride) {
  const Shape xs = x.shape();
  if (kernel <= 0 || stride <= 0) throw ConfigError("maxpool2d: kernel and stride must be positive");
  if (xs.h % stride != 0 || xs.w % stride != 0) {
    throw ShapeError("maxpool2d: spatial dims of " + xs.str() + " not divisible by stride " +
                     std::to_string(stride));
  }
  if (xs.h < kernel || xs.w < kernel) throw ShapeError("maxpool2d: input smaller than window");
  const int oh = (xs.h - kernel) / stride + 1;
  const int ow = (xs.w - kernel) / stride + 1;
  Tensor<Scalar> out(Shape{xs.n, xs.c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const Tensor<Scalar>& xv = x.value();
  std::size_t o = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best = xv.index(n, c, oy * stride, ox * stride);
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
              const std::size_t i = xv.index(n, c, oy * stride + ky, ox * stride + kx);
              if (xv[i] > xv[best]) best = i;
            }
          }
          argmax[o] = best;
          out[o] = xv[best];
        }
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, "maxpool2d",
                             [argmax = std::move(argmax)](Node<Scalar>& self) {
                               Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < argmax.size(); ++i)
                                 gx[argmax[i]] += self.grad[i];
                             });
}

template <typename Scalar>
Var<Scalar> channel_attention(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  if (xs.plane() == 0) throw ShapeError("channel_attention: empty spatial extent");
  Tensor<Scalar> out(Shape{xs.n, xs.c, 1, 1});
  std::vector<std::size_t> argmax(out.size());
  const Tensor<Scalar>& xv = x.value();
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const std::size_t base = xv.index(n, c, 0, 0);
      std::size_t best = base;
      for (std::size_t i = base + 1; i < base + xs.plane(); ++i)
        if (xv[i] > xv[best]) best = i;
      const std::size_t o = static_cast<std::size_t>(n) * xs.c + c;
      argmax[o] = best;
      out[o] = static_cast<Scalar>(sigmoid_value(xv[best]));
    }
  }
  return make_result<Scalar>(std::move(out), {x}, "channel_attention",
                             [argmax = std::move(argmax)](Node<Scalar>& self) {
                               Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < argmax.size(); ++i) {
                                 const Scalar y = self.value[i];
                                 gx[argmax[i]] += self.grad[i] * y * (Scalar(1) - y);
                               }
                             });
}

template <typename Scalar>
Var<Scalar> spatial_attention(const Var<Scalar>& x) {
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Shape xs = x.shape();
  if (xs.c == 0 || xs.plane() == 0) throw ShapeError("spatial_attention: empty input " + xs.str());
  const Eigen::Index plane = static_cast<Eigen::Index>(xs.plane());
  Tensor<Scalar> out(Shape{xs.n, 1, xs.h, xs.w});
  const Tensor<Scalar>& xv = x.value();
  for (int n = 0; n < xs.n; ++n) {
    Arr m = Arr::Zero(plane);
    for (int c = 0; c < xs.c; ++c) m += ConstArrayMap<Scalar>(xv.plane_ptr(n, c), plane);
    m /= static_cast<Scalar>(xs.c);
    ArrayMap<Scalar> y(out.plane_ptr(n, 0), plane);
    y = (m - m.maxCoeff()).exp();
    y /= y.sum();
  }
  return make_result<Scalar>(std::move(out), {x}, "spatial_attention", [plane](Node<Scalar>& self) {
    auto& nx = *self.inputs[0];
    const Shape s = nx.value.shape();
    Tensor<Scalar>& gx = nx.grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      ConstArrayMap<Scalar> y(self.value.plane_ptr(n, 0), plane);
      ConstArrayMap<Scalar> g(self.grad.plane_ptr(n, 0), plane);
      const Arr dm = y * (g - (g * y).sum()) / static_cast<Scalar>(s.c);
      for (int c = 0; c < s.c; ++c) ArrayMap<Scalar>(gx.plane_ptr(n, c), plane) += dm;
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("concat_channels: " + as.str() + " and " + bs.str() + " disagree outside C");
  }
  Tensor<Scalar> out(Shape{as.n, as.c + bs.c, as.h, as.w});
  const std::size_t sa = static_cast<std::size_t>(as.c) * as.plane();
  const std::size_t sb = static_cast<std::size_t>(bs.c) * bs.plane();
  for (int n = 0; n < as.n; ++n) {
    Scalar* dst = out.plane_ptr(n, 0);
    dst = std::copy_n(a.value().data() + n * sa, sa, dst);
    std::copy_n(b.value().data() + n * sb, sb, dst);
  }
  return make_result<Scalar>(std::move(out), {a, b}, "concat_channels",
                             [sa, sb](Node<Scalar>& self) {
                               auto& na = *self.inputs[0];
                               auto& nb = *self.inputs[1];
                               const int batch = na.value.shape().n;
                               using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
                               for (int n = 0; n < batch; ++n) {
                                 const Scalar* g = self.grad.data() + n * (sa + sb);
                                 if (na.requires_grad)
                                   Eigen::Map<Arr>(na.grad_buffer().data() + n * sa, sa) +=
                                       Eigen::Map<const Arr>(g, sa);
                                 if (nb.requires_grad)
                                   Eigen::Map<Arr>(nb.grad_buffer().data() + n * sb, sb) +=
                                       Eigen::Map<const Arr>(g + sa, sb);
                               }
                             });
}

#define RESSEG_INSTANTIATE_OPS(T)                                                              \
  template Var<T> conv2d(const Var<T>&, const Conv2dSpec&, const Var<T>&,                     \
                         const std::optional<Var<T>>&);                                        \
  template Var<T> transpose_conv2d(const Var<T>&, const Conv2dSpec&, const Var<T>&,           \
                                   const std::optional<Var<T>>&);                              \
  template struct BatchNormState<T>;                                                           \
  template Var<T> batchnorm2d(const Var<T>&, BatchNormState<T>&, Mode);                        \
  template Var<T> gelu(const Var<T>&);                                                         \
  template Var<T> relu(const Var<T>&);                                                         \
  template Var<T> sigmoid(const Var<T>&);                                                      \
  template Var<T> maxpool2d(const Var<T>&, int, int);                                          \
  template Var<T> channel_attention(const Var<T>&);                                            \
  template Var<T> spatial_attention(const Var<T>&);                                            \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);

RESSEG_INSTANTIATE_OPS(float)
RESSEG_INSTANTIATE_OPS(double)

}  // namespace resseg
