#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bdx/nn/ops.hpp"
#include "bdx/rng.hpp"

namespace bdx::nn {

/// Deterministic uniform stream used for weight initialization.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : state_(seed) {}
  double next() {  // [0, 1)
    state_ = rng::splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  std::uint64_t state_;
};

/// Kaiming-uniform (fan-in, ReLU gain): U(-sqrt(6/fan_in), sqrt(6/fan_in)).
inline void kaiming_uniform(Tensor& w, std::size_t fan_in, UniformStream& rs) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = rs.uniform(-bound, bound);
}

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
         std::size_t padding)
      : weight(name + ".weight", {out_ch, in_ch, kernel}),
        bias(name + ".bias", {out_ch}),
        stride_(stride),
        padding_(padding) {
    require(in_ch >= 1 && out_ch >= 1 && kernel >= 1 && stride >= 1, ErrorKind::Config,
            name + ": conv dimensions must be >= 1");
  }

  void init(UniformStream& rs) {
    kaiming_uniform(weight.value, weight.value.dim(1) * weight.value.dim(2), rs);
    bias.value.fill(0.0);
  }

  Tensor forward(const Tensor& x) {
    input_ = x;
    return ops::conv1d_forward(x, weight.value, bias.value, stride_, padding_);
  }

  Tensor backward(const Tensor& grad_out, bool need_input_grad = true) {
    Tensor gx;
    if (need_input_grad) gx = Tensor(input_.shape());
    ops::conv1d_backward(input_, weight.value, grad_out, stride_, padding_, need_input_grad ? &gx : nullptr,
                         weight.grad, &bias.grad);
    return gx;
  }

  std::size_t out_len(std::size_t len) const {
    return ops::conv1d_out_len(len, weight.value.dim(2), stride_, padding_);
  }
  std::vector<Param*> params() { return {&weight, &bias}; }

  Param weight, bias;

 private:
  std::size_t stride_ = 1, padding_ = 0;
  Tensor input_;
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias = true)
      : weight(name + ".weight", {out, in}), bias(name + ".bias", {with_bias ? out : 0}), has_bias_(with_bias) {
    require(in >= 1 && out >= 1, ErrorKind::Config, name + ": linear dimensions must be >= 1");
  }

  void init(UniformStream& rs) {
    kaiming_uniform(weight.value, weight.value.dim(1), rs);
    bias.value.fill(0.0);
  }

  Tensor forward(const Tensor& x) {
    input_ = x;
    return ops::linear_forward(x, weight.value, bias.value);
  }

  /// Forward without caching (inference, or a second use whose backward is done by the caller).
  Tensor apply(const Tensor& x) const { return ops::linear_forward(x, weight.value, bias.value); }

  Tensor backward(const Tensor& grad_out) { return backward_for(input_, grad_out); }

  Tensor backward_for(const Tensor& input, const Tensor& grad_out) {
    Tensor gx(input.shape());
    ops::linear_backward(input, weight.value, grad_out, &gx, &weight.grad, has_bias_ ? &bias.grad : nullptr);
    return gx;
  }

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }
  bool has_bias() const { return has_bias_; }
  std::vector<Param*> params() {
    if (has_bias_) return {&weight, &bias};
    return {&weight};
  }

  Param weight, bias;

 private:
  bool has_bias_ = true;
  Tensor input_;
};

class BatchNorm1d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t channels)
      : gamma(name + ".gamma", {channels}),
        beta(name + ".beta", {channels}),
        running_mean(name + ".running_mean", {channels}, false),
        running_var(name + ".running_var", {channels}, false) {
    gamma.value.fill(1.0);
    running_var.value.fill(1.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    training_ = training;
    calibration_batches_ = 0;
    return ops::batchnorm_forward(x, gamma.value, beta.value, running_mean.value, running_var.value, training,
                                  kMomentum, kEps, &cache_);
  }

  Tensor backward(const Tensor& grad_out) {
    if (training_) return ops::batchnorm_backward(cache_, gamma.value, grad_out, gamma.grad, beta.grad);
    // Inference mode: affine map with fixed statistics.
    const std::size_t B = grad_out.dim(0), C = grad_out.dim(1), L = grad_out.dim(2);
    Tensor gx(grad_out.shape());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < L; ++t) {
          const double g = grad_out.at(b, c, t);
          gamma.grad[c] += g * cache_.x_hat.at(b, c, t);
          beta.grad[c] += g;
          gx.at(b, c, t) = g * gamma.value[c] * cache_.inv_std[c];
        }
    return gx;
  }

  /// Starts re-estimating the running statistics as a plain average over calibrate() batches.
  void reset_statistics() { calibration_batches_ = 0; }

  /// Normalizes with batch statistics and folds them into the running average. No backward.
  Tensor calibrate(const Tensor& x) {
    training_ = false;
    const double weight = 1.0 / static_cast<double>(++calibration_batches_);
    return ops::batchnorm_forward(x, gamma.value, beta.value, running_mean.value, running_var.value, true, weight,
                                  kEps, nullptr);
  }

  std::vector<Param*> params() { return {&gamma, &beta, &running_mean, &running_var}; }

  Param gamma, beta, running_mean, running_var;

 private:
  bool training_ = true;
  std::size_t calibration_batches_ = 0;
  ops::BatchNormCache cache_;
};

class MaxPool1d {
 public:
  explicit MaxPool1d(std::size_t width = 1) : width_(width) {}

  Tensor forward(const Tensor& x) {
    in_shape_ = x.shape();
    return ops::max_pool(x, width_, argmax_);
  }

  Tensor backward(const Tensor& grad_out) {
    Tensor gx(in_shape_);
    ops::max_pool_backward(in_shape_, grad_out, argmax_, gx);
    return gx;
  }

  std::size_t width() const { return width_; }

 private:
  std::size_t width_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

}  // namespace bdx::nn
