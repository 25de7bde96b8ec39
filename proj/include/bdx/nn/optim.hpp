#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "bdx/nn/tensor.hpp"

namespace bdx::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with bias correction and decoupled weight decay.
class AdamW {
 public:
  AdamW(std::span<Param* const> params, AdamWConfig cfg) : cfg_(cfg) {
    for (Param* p : params) {
      if (!p->trainable) continue;
      slots_.push_back({p, Tensor(p->value.shape()), Tensor(p->value.shape())});
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
      auto& w = s.param->value;
      const auto& g = s.param->grad;
      require(g.shape() == w.shape(), ErrorKind::Shape, s.param->name + ": gradient shape mismatch");
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double m_hat = s.m[i] / bc1;
        const double v_hat = s.v[i] / bc2;
        w[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& s : slots_) s.param->zero_grad();
  }

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Param* param;
    Tensor m, v;
  };
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  std::size_t t_ = 0;
};

/// Halves the rate after `patience` consecutive batches without a new best loss.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, std::size_t patience = 150, double factor = 0.5, double floor = 1e-7)
      : lr_(lr), patience_(patience), factor_(factor), floor_(floor) {}

  double step(double batch_loss) {
    if (batch_loss < best_) {
      best_ = batch_loss;
      stale_ = 0;
    } else if (++stale_ >= patience_) {
      lr_ *= factor_;
      stale_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }
  bool should_stop() const { return lr_ < floor_; }
  double best_loss() const { return best_; }
  std::size_t stale_count() const { return stale_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double floor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

}  // namespace bdx::nn
