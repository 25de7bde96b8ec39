#pragma once

// Forward/backward kernels. Backward functions accumulate (+=) into the
// gradient buffers they are given; callers zero them.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bdx/nn/tensor.hpp"

namespace bdx::nn::ops {

inline std::size_t conv1d_out_len(std::size_t len, std::size_t kernel, std::size_t stride, std::size_t padding) {
  require(stride >= 1, ErrorKind::Shape, "conv1d stride must be >= 1");
  require(len + 2 * padding >= kernel, ErrorKind::Shape,
          "conv1d input length " + std::to_string(len) + " + 2*padding shorter than kernel " +
              std::to_string(kernel));
  return (len + 2 * padding - kernel) / stride + 1;
}

namespace detail {
// Output positions t with 0 <= t*stride + offset < len.
inline void valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t len, std::size_t out_len,
                        std::size_t& lo, std::size_t& hi) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t first = offset < 0 ? (-offset + s - 1) / s : 0;
  std::ptrdiff_t last_pos = static_cast<std::ptrdiff_t>(len) - 1 - offset;  // t*s <= last_pos
  std::ptrdiff_t end = last_pos < 0 ? 0 : last_pos / s + 1;
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
  hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(end, static_cast<std::ptrdiff_t>(out_len)));
  if (hi < lo) hi = lo;
}
}  // namespace detail

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

namespace detail {
// col[(c*K + k), t] = x[c, t*stride + k - padding], zero outside the signal.
inline void im2col(const double* x, std::size_t C, std::size_t L, std::size_t K, std::size_t stride,
                   std::size_t padding, std::size_t Lo, double* col) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      double* row = col + (c * K + k) * Lo;
      const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
      std::size_t lo, hi;
      valid_range(off, stride, L, Lo, lo, hi);
      std::fill(row, row + lo, 0.0);
      std::fill(row + hi, row + Lo, 0.0);
      const double* xs = x + c * L;
      if (stride == 1) {
        std::copy(xs + static_cast<std::ptrdiff_t>(lo) + off, xs + static_cast<std::ptrdiff_t>(hi) + off, row + lo);
      } else {
        for (std::size_t t = lo; t < hi; ++t) row[t] = xs[static_cast<std::ptrdiff_t>(t * stride) + off];
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back into x.
inline void col2im_add(const double* col, std::size_t C, std::size_t L, std::size_t K, std::size_t stride,
                       std::size_t padding, std::size_t Lo, double* x) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* row = col + (c * K + k) * Lo;
      const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
      std::size_t lo, hi;
      valid_range(off, stride, L, Lo, lo, hi);
      double* xs = x + c * L;
      for (std::size_t t = lo; t < hi; ++t) xs[static_cast<std::ptrdiff_t>(t * stride) + off] += row[t];
    }
  }
}

inline bool is_identity_im2col(std::size_t K, std::size_t stride, std::size_t padding) {
  return K == 1 && stride == 1 && padding == 0;
}
}  // namespace detail

/// Cross-correlation: out[b,o,t] = bias[o] + sum_{c,k} w[o,c,k] * in[b,c,t*stride + k - padding].
inline Tensor conv1d_forward(const Tensor& in, const Tensor& w, const Tensor& bias, std::size_t stride,
                             std::size_t padding) {
  expect_rank(in, 3, "conv1d input");
  expect_rank(w, 3, "conv1d weight");
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  require(w.dim(1) == C, ErrorKind::Shape,
          "conv1d weight expects " + std::to_string(w.dim(1)) + " input channels, got " + std::to_string(C));
  require(bias.empty() || bias.size() == O, ErrorKind::Shape, "conv1d bias size mismatch");
  const std::size_t Lo = conv1d_out_len(L, K, stride, padding);
  Tensor out({B, O, Lo});
  ConstMatrixMap W(w.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(C * K));
  const bool direct = detail::is_identity_im2col(K, stride, padding);
  std::vector<double> col(direct ? 0 : C * K * Lo);
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = in.data() + b * C * L;
    if (!direct) detail::im2col(x, C, L, K, stride, padding, Lo, col.data());
    ConstMatrixMap X(direct ? x : col.data(), static_cast<Eigen::Index>(C * K), static_cast<Eigen::Index>(Lo));
    MatrixMap Y(out.data() + b * O * Lo, static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(Lo));
    Y.noalias() = W * X;
    if (!bias.empty())
      for (std::size_t o = 0; o < O; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  }
  return out;
}

/// Gradients of conv1d_forward. `grad_in` may be null when the input needs no gradient.
inline void conv1d_backward(const Tensor& in, const Tensor& w, const Tensor& grad_out, std::size_t stride,
                            std::size_t padding, Tensor* grad_in, Tensor& grad_w, Tensor* grad_bias) {
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t Lo = grad_out.dim(2);
  require(grad_out.dim(0) == B && grad_out.dim(1) == O && Lo == conv1d_out_len(L, K, stride, padding),
          ErrorKind::Shape, "conv1d grad_out shape mismatch");
  const auto CK = static_cast<Eigen::Index>(C * K);
  ConstMatrixMap W(w.data(), static_cast<Eigen::Index>(O), CK);
  MatrixMap GW(grad_w.data(), static_cast<Eigen::Index>(O), CK);
  const bool direct = detail::is_identity_im2col(K, stride, padding);
  std::vector<double> col(direct ? 0 : C * K * Lo);
  RowMatrix dcol;
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = in.data() + b * C * L;
    ConstMatrixMap G(grad_out.data() + b * O * Lo, static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(Lo));
    // Fixed summation order, independent of buffer alignment.
    if (grad_bias)
      for (std::size_t o = 0; o < O; ++o) {
        const double* g = grad_out.data() + (b * O + o) * Lo;
        double s = 0.0;
        for (std::size_t t = 0; t < Lo; ++t) s += g[t];
        (*grad_bias)[o] += s;
      }
    if (!direct) detail::im2col(x, C, L, K, stride, padding, Lo, col.data());
    ConstMatrixMap X(direct ? x : col.data(), CK, static_cast<Eigen::Index>(Lo));
    GW.noalias() += G * X.transpose();
    if (grad_in) {
      double* gx = grad_in->data() + b * C * L;
      if (direct) {
        MatrixMap GX(gx, CK, static_cast<Eigen::Index>(Lo));
        GX.noalias() += W.transpose() * G;
      } else {
        dcol.noalias() = W.transpose() * G;
        detail::col2im_add(dcol.data(), C, L, K, stride, padding, Lo, gx);
      }
    }
  }
}

/// out[b,o] = bias[o] + sum_i w[o,i] * in[b,i]
inline Tensor linear_forward(const Tensor& in, const Tensor& w, const Tensor& bias) {
  expect_rank(in, 2, "linear input");
  expect_rank(w, 2, "linear weight");
  const std::size_t B = in.dim(0), I = in.dim(1), O = w.dim(0);
  require(w.dim(1) == I, ErrorKind::Shape,
          "linear weight expects width " + std::to_string(w.dim(1)) + ", got " + std::to_string(I));
  require(bias.empty() || bias.size() == O, ErrorKind::Shape, "linear bias size mismatch");
  Tensor out({B, O});
  ConstMatrixMap X(in.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(I));
  ConstMatrixMap W(w.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(I));
  MatrixMap Y(out.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(O));
  Y.noalias() = X * W.transpose();
  if (!bias.empty())
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o) out.at(b, o) += bias[o];
  return out;
}

inline void linear_backward(const Tensor& in, const Tensor& w, const Tensor& grad_out, Tensor* grad_in,
                            Tensor* grad_w, Tensor* grad_bias) {
  const std::size_t B = in.dim(0), I = in.dim(1), O = w.dim(0);
  require(grad_out.rank() == 2 && grad_out.dim(0) == B && grad_out.dim(1) == O, ErrorKind::Shape,
          "linear grad_out shape mismatch");
  ConstMatrixMap X(in.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(I));
  ConstMatrixMap W(w.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(I));
  ConstMatrixMap G(grad_out.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(O));
  if (grad_bias)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o) (*grad_bias)[o] += grad_out.at(b, o);
  if (grad_w) {
    MatrixMap GW(grad_w->data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(I));
    GW.noalias() += G.transpose() * X;
  }
  if (grad_in) {
    MatrixMap GX(grad_in->data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(I));
    GX.noalias() += G * W;
  }
}

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

/// Gradient through relu, given the forward input.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x[i] > 0.0)) g[i] = 0.0;
  return g;
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = sigmoid(v);
  return y;
}

/// Gradient through sigmoid, given the forward output.
inline Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
  return g;
}

/// (B,C,L) -> (B,C)
inline Tensor global_avg_pool(const Tensor& x) {
  expect_rank(x, 3, "global_avg_pool input");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  require(L >= 1, ErrorKind::Shape, "global_avg_pool over empty length");
  Tensor y({B, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &x.at(b, c, 0);
      double s = 0.0;
      for (std::size_t t = 0; t < L; ++t) s += p[t];
      y.at(b, c) = s / static_cast<double>(L);
    }
  return y;
}

inline void global_avg_pool_backward(const Shape& in_shape, const Tensor& grad_out, Tensor& grad_in) {
  const std::size_t B = in_shape[0], C = in_shape[1], L = in_shape[2];
  const double inv = 1.0 / static_cast<double>(L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double g = grad_out.at(b, c) * inv;
      double* p = &grad_in.at(b, c, 0);
      for (std::size_t t = 0; t < L; ++t) p[t] += g;
    }
}

/// (B,C,L) -> (B,C); `argmax` receives the winning position per (b,c).
inline Tensor global_max_pool(const Tensor& x, std::vector<std::size_t>& argmax) {
  expect_rank(x, 3, "global_max_pool input");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  require(L >= 1, ErrorKind::Shape, "global_max_pool over empty length");
  Tensor y({B, C});
  argmax.assign(B * C, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &x.at(b, c, 0);
      std::size_t best = 0;
      for (std::size_t t = 1; t < L; ++t)
        if (p[t] > p[best]) best = t;
      y.at(b, c) = p[best];
      argmax[b * C + c] = best;
    }
  return y;
}

inline void global_max_pool_backward(const Shape& in_shape, const Tensor& grad_out,
                                     const std::vector<std::size_t>& argmax, Tensor& grad_in) {
  const std::size_t B = in_shape[0], C = in_shape[1];
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) grad_in.at(b, c, argmax[b * C + c]) += grad_out.at(b, c);
}

/// Non-overlapping max over windows of `width`; output length floor(L / width).
inline Tensor max_pool(const Tensor& x, std::size_t width, std::vector<std::size_t>& argmax) {
  expect_rank(x, 3, "max_pool input");
  require(width >= 1, ErrorKind::Shape, "max_pool width must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t Lo = L / width;
  require(Lo >= 1, ErrorKind::Shape,
          "max_pool width " + std::to_string(width) + " exceeds length " + std::to_string(L));
  Tensor y({B, C, Lo});
  argmax.assign(B * C * Lo, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &x.at(b, c, 0);
      double* q = &y.at(b, c, 0);
      std::size_t* a = &argmax[(b * C + c) * Lo];
      for (std::size_t t = 0; t < Lo; ++t) {
        std::size_t best = t * width;
        for (std::size_t j = best + 1; j < (t + 1) * width; ++j)
          if (p[j] > p[best]) best = j;
        q[t] = p[best];
        a[t] = best;
      }
    }
  return y;
}

inline void max_pool_backward(const Shape& in_shape, const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                              Tensor& grad_in) {
  const std::size_t B = in_shape[0], C = in_shape[1];
  const std::size_t Lo = grad_out.dim(2);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* g = &grad_out.at(b, c, 0);
      double* gi = &grad_in.at(b, c, 0);
      const std::size_t* a = &argmax[(b * C + c) * Lo];
      for (std::size_t t = 0; t < Lo; ++t) gi[a[t]] += g[t];
    }
}

struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
};

/// Per-channel normalization over (batch, length). Training mode uses batch
/// statistics and updates the running estimates; inference mode uses the running estimates.
inline Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                                Tensor& running_var, bool training, double momentum, double eps,
                                BatchNormCache* cache) {
  expect_rank(x, 3, "batchnorm input");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  require(gamma.size() == C && beta.size() == C, ErrorKind::Shape, "batchnorm parameter size mismatch");
  Tensor y(x.shape());
  if (cache) {
    cache->x_hat = Tensor(x.shape());
    cache->inv_std.assign(C, 0.0);
  }
  const double n = static_cast<double>(B * L);
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      require(B * L > 1, ErrorKind::Shape, "batchnorm training needs more than one value per channel");
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = &x.at(b, c, 0);
        for (std::size_t t = 0; t < L; ++t) s += p[t];
      }
      mean = s / n;
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = &x.at(b, c, 0);
        for (std::size_t t = 0; t < L; ++t) ss += (p[t] - mean) * (p[t] - mean);
      }
      var = ss / n;
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * ss / (n - 1.0);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    if (cache) cache->inv_std[c] = inv;
    for (std::size_t b = 0; b < B; ++b) {
      const double* p = &x.at(b, c, 0);
      double* q = &y.at(b, c, 0);
      double* h = cache ? &cache->x_hat.at(b, c, 0) : nullptr;
      for (std::size_t t = 0; t < L; ++t) {
        const double xh = (p[t] - mean) * inv;
        if (h) h[t] = xh;
        q[t] = gamma[c] * xh + beta[c];
      }
    }
  }
  return y;
}

/// Training-mode backward (batch statistics are functions of the input).
inline Tensor batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_out,
                                 Tensor& grad_gamma, Tensor& grad_beta) {
  const std::size_t B = grad_out.dim(0), C = grad_out.dim(1), L = grad_out.dim(2);
  const double n = static_cast<double>(B * L);
  Tensor gx(grad_out.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* g = &grad_out.at(b, c, 0);
      const double* h = &cache.x_hat.at(b, c, 0);
      for (std::size_t t = 0; t < L; ++t) {
        sum_g += g[t];
        sum_gx += g[t] * h[t];
      }
    }
    grad_gamma[c] += sum_gx;
    grad_beta[c] += sum_g;
    const double k = gamma[c] * cache.inv_std[c] / n;
    for (std::size_t b = 0; b < B; ++b) {
      const double* g = &grad_out.at(b, c, 0);
      const double* h = &cache.x_hat.at(b, c, 0);
      double* o = &gx.at(b, c, 0);
      for (std::size_t t = 0; t < L; ++t) o[t] = k * (n * g[t] - sum_g - h[t] * sum_gx);
    }
  }
  return gx;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::Shape,
          "add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

/// y[b,c,t] = x[b,c,t] * s[b,c]
inline Tensor channel_scale(const Tensor& x, const Tensor& s) {
  expect_rank(x, 3, "channel_scale input");
  require(s.rank() == 2 && s.dim(0) == x.dim(0) && s.dim(1) == x.dim(1), ErrorKind::Shape,
          "channel_scale weights must be (B,C)");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  Tensor y(x.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double w = s.at(b, c);
      const double* p = &x.at(b, c, 0);
      double* q = &y.at(b, c, 0);
      for (std::size_t t = 0; t < L; ++t) q[t] = p[t] * w;
    }
  return y;
}

inline void channel_scale_backward(const Tensor& x, const Tensor& s, const Tensor& grad_out, Tensor& grad_x,
                                   Tensor& grad_s) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double w = s.at(b, c);
      const double* p = &x.at(b, c, 0);
      const double* g = &grad_out.at(b, c, 0);
      double* gx = &grad_x.at(b, c, 0);
      double acc = 0.0;
      for (std::size_t t = 0; t < L; ++t) {
        gx[t] += g[t] * w;
        acc += g[t] * p[t];
      }
      grad_s.at(b, c) += acc;
    }
}

/// Concatenates (B,C_i,L) tensors along the channel axis.
inline Tensor concat_channels(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::Shape, "concat of nothing");
  const std::size_t B = parts[0].dim(0), L = parts[0].dim(2);
  std::size_t C = 0;
  for (const auto& p : parts) {
    require(p.rank() == 3 && p.dim(0) == B && p.dim(2) == L, ErrorKind::Shape, "concat shape mismatch");
    C += p.dim(1);
  }
  Tensor y({B, C, L});
  for (std::size_t b = 0; b < B; ++b) {
    double* dst = &y.at(b, 0, 0);
    for (const auto& p : parts) {
      const std::size_t n = p.dim(1) * L;
      std::copy_n(&p.at(b, 0, 0), n, dst);
      dst += n;
    }
  }
  return y;
}

/// Channels [first, first+count) of a (B,C,L) tensor.
inline Tensor slice_channels(const Tensor& x, std::size_t first, std::size_t count) {
  expect_rank(x, 3, "slice_channels input");
  require(first + count <= x.dim(1), ErrorKind::Shape, "channel slice out of range");
  const std::size_t B = x.dim(0), L = x.dim(2);
  Tensor y({B, count, L});
  for (std::size_t b = 0; b < B; ++b) std::copy_n(&x.at(b, first, 0), count * L, &y.at(b, 0, 0));
  return y;
}

struct CrossEntropy {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits, (B, classes)
};

/// Mean negative log-softmax of the true class; grad = (softmax - onehot) / B.
inline CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  expect_rank(logits, 2, "cross-entropy logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  require(labels.size() == B, ErrorKind::Shape, "label count does not match batch");
  require(B >= 1, ErrorKind::Shape, "cross-entropy of empty batch");
  CrossEntropy out{0.0, Tensor({B, K})};
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    require(y >= 0 && static_cast<std::size_t>(y) < K, ErrorKind::Label,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
    const double* z = &logits.at(b, 0);
    std::size_t top = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (z[k] > z[top]) top = k;
    double rest = 0.0;  // sum of exp(z_k - max) over k != top
    for (std::size_t k = 0; k < K; ++k)
      if (k != top) rest += std::exp(z[k] - z[top]);
    const double log_sum = std::log1p(rest);
    out.loss += log_sum - (z[y] - z[top]);
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(z[k] - z[top] - log_sum);
      out.grad.at(b, k) = (p - (static_cast<int>(k) == y ? 1.0 : 0.0)) / static_cast<double>(B);
    }
  }
  out.loss /= static_cast<double>(B);
  return out;
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace bdx::nn::ops
