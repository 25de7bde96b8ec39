#pragma once

// Central finite-difference comparison for tensors of the nn core.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bdx/nn/tensor.hpp"

namespace gradcheck {

struct Result {
  double rel = 0.0;    // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double scale = 0.0;  // max(||analytic||, ||numeric||)
  std::size_t probes = 0;

  /// Gradients that vanish identically (a conv bias feeding batchnorm) are
  /// accepted when both sides are at rounding-noise level.
  bool ok(double tol, double noise = 1e-9) const { return rel < tol || scale < noise; }
};

/// Perturbs up to `max_probes` coordinates of `values` (all of them when small enough)
/// and compares the numeric slope of `loss` with `analytic`.
inline Result compare(std::span<double> values, std::span<const double> analytic, const std::function<double()>& loss,
                      std::size_t max_probes = 64, std::uint64_t seed = 1, double h = 1e-5) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > max_probes) {
    std::mt19937_64 gen(seed);
    std::shuffle(idx.begin(), idx.end(), gen);
    idx.resize(max_probes);
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (auto i : idx) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = loss();
    values[i] = keep - h;
    const double down = loss();
    values[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    diff += (analytic[i] - numeric) * (analytic[i] - numeric);
    na += analytic[i] * analytic[i];
    nn += numeric * numeric;
  }
  Result r;
  r.probes = idx.size();
  r.scale = std::max(std::sqrt(na), std::sqrt(nn));
  r.rel = std::sqrt(diff) / std::max(r.scale, 1e-300);
  return r;
}

inline bdx::nn::Tensor random_tensor(bdx::nn::Shape shape, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, sigma);
  bdx::nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = d(gen);
  return t;
}

/// sum(out * weights): a scalar whose gradient with respect to `out` is `weights`.
inline double weighted_sum(const bdx::nn::Tensor& out, const bdx::nn::Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

}  // namespace gradcheck
