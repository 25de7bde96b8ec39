#pragma once

// Fixed-duration segmentation, DCT-II, amplitude normalization and the
// three-channel query/reference/residual representation.

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "bdx/binary_io.hpp"
#include "bdx/error.hpp"

namespace bdx {

/// A recording at a known sampling rate under one working condition.
struct RawSignal {
  std::vector<double> samples;
  std::uint32_t sample_rate_hz = 1;
  std::uint32_t condition_id = 0;
};

/// Exactly one second of samples: length == sample_rate_hz.
struct SignalSegment {
  std::vector<double> samples;
  std::uint32_t sample_rate_hz = 1;
  std::uint32_t segment_index = 0;
  std::uint32_t condition_id = 0;
};

struct DcnConfig {
  std::size_t n_f = 24000;
  double beta = 0.01;

  void validate() const {
    require(n_f >= 1, ErrorKind::Config, "n_f must be >= 1");
    require(beta > 0.0, ErrorKind::Config, "beta must be > 0");
  }
};

/// Normalized DCT amplitudes of one segment, length n_f.
struct FrequencyRep {
  std::vector<double> coefficients;

  std::size_t n_f() const { return coefficients.size(); }
  bool operator==(const FrequencyRep&) const = default;
};

/// Channels [query, reference, query - reference], stored row-major (3 x n_f).
class UnifiedRepresentation {
 public:
  UnifiedRepresentation() = default;
  explicit UnifiedRepresentation(std::size_t n_f) : n_f_(n_f), data_(3 * n_f, 0.0) {}

  std::size_t n_f() const { return n_f_; }
  std::span<const double> channel(std::size_t c) const { return {data_.data() + c * n_f_, n_f_}; }
  std::span<double> channel(std::size_t c) { return {data_.data() + c * n_f_, n_f_}; }
  std::span<const double> data() const { return data_; }

 private:
  std::size_t n_f_ = 0;
  std::vector<double> data_;
};

/// Samples [m*s, (m+1)*s) of the recording.
inline SignalSegment segment(const RawSignal& raw, std::size_t m) {
  const std::size_t s = raw.sample_rate_hz;
  require(s >= 1, ErrorKind::Config, "sample rate must be >= 1");
  if ((m + 1) * s > raw.samples.size())
    fail(ErrorKind::Bounds, "segment " + std::to_string(m) + " needs " + std::to_string((m + 1) * s) +
                                " samples, signal has " + std::to_string(raw.samples.size()));
  SignalSegment seg;
  seg.samples.assign(raw.samples.begin() + static_cast<std::ptrdiff_t>(m * s),
                     raw.samples.begin() + static_cast<std::ptrdiff_t>((m + 1) * s));
  seg.sample_rate_hz = raw.sample_rate_hz;
  seg.segment_index = static_cast<std::uint32_t>(m);
  seg.condition_id = raw.condition_id;
  return seg;
}

/// Non-overlapping one-second segments; the trailing partial second is dropped.
inline std::vector<SignalSegment> segment_all(const RawSignal& raw) {
  require(raw.sample_rate_hz >= 1, ErrorKind::Config, "sample rate must be >= 1");
  const std::size_t count = raw.samples.size() / raw.sample_rate_hz;
  if (count == 0)
    fail(ErrorKind::Bounds, "signal shorter than one second (" + std::to_string(raw.samples.size()) +
                                " samples at " + std::to_string(raw.sample_rate_hz) + " Hz)");
  std::vector<SignalSegment> out;
  out.reserve(count);
  for (std::size_t m = 0; m < count; ++m) out.push_back(segment(raw, m));
  return out;
}

/// Orthonormal DCT-II by direct summation, O(n^2). Test oracle for `dct`.
/// `bins` restricts evaluation to selected output indices (all when empty).
inline std::vector<double> dct_reference(std::span<const double> x, std::span<const std::size_t> bins = {}) {
  const std::size_t n = x.size();
  require(n >= 1, ErrorKind::Shape, "dct of empty sequence");
  const long double pi = 3.141592653589793238462643383279502884L;
  auto coefficient = [&](std::size_t k) {
    // cos(pi*k*(2t+1)/(2n)) with the angle reduced exactly modulo 2*pi in integer arithmetic.
    const std::uint64_t period = 4 * static_cast<std::uint64_t>(n);
    long double acc = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      std::uint64_t m = (static_cast<std::uint64_t>(k) * (2 * t + 1)) % period;
      acc += static_cast<long double>(x[t]) * std::cos(pi * static_cast<long double>(m) / (2.0L * n));
    }
    long double c = k == 0 ? std::sqrt(1.0L / n) : std::sqrt(2.0L / n);
    return static_cast<double>(c * acc);
  };
  if (bins.empty()) {
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = coefficient(k);
    return y;
  }
  std::vector<double> y;
  y.reserve(bins.size());
  for (auto k : bins) {
    require(k < n, ErrorKind::Bounds, "dct bin out of range");
    y.push_back(coefficient(k));
  }
  return y;
}

namespace detail {

// FFTW plans are cached per length. Planner calls are not reentrant, so
// creation and lookup are serialized; execution uses per-plan buffers under the same lock.
class DctPlans {
 public:
  static DctPlans& instance() {
    static DctPlans p;
    return p;
  }

  std::vector<double> run(std::span<const double> x, fftw_r2r_kind kind) {
    std::lock_guard lock(mu_);
    Plan& p = plan_for(x.size(), kind);
    std::copy(x.begin(), x.end(), p.in);
    fftw_execute(p.plan);
    std::vector<double> y(p.out, p.out + x.size());
    return y;
  }

 private:
  struct Plan {
    fftw_plan plan = nullptr;
    double* in = nullptr;
    double* out = nullptr;
    ~Plan() {
      if (plan) fftw_destroy_plan(plan);
      fftw_free(in);
      fftw_free(out);
    }
  };

  Plan& plan_for(std::size_t n, fftw_r2r_kind kind) {
    const auto key = std::make_pair(n, static_cast<int>(kind));
    auto it = plans_.find(key);
    if (it != plans_.end()) return *it->second;
    if (plans_.size() > 32) plans_.clear();
    auto p = std::make_unique<Plan>();
    p->in = fftw_alloc_real(n);
    p->out = fftw_alloc_real(n);
    p->plan = fftw_plan_r2r_1d(static_cast<int>(n), p->in, p->out, kind, FFTW_ESTIMATE);
    require(p->plan != nullptr, ErrorKind::Config, "fftw planning failed");
    return *plans_.emplace(key, std::move(p)).first->second;
  }

  std::mutex mu_;
  std::map<std::pair<std::size_t, int>, std::unique_ptr<Plan>> plans_;
};

}  // namespace detail

/// Orthonormal DCT-II, O(n log n):
///   y_k = c_k * sum_t x_t cos(pi k (2t+1) / 2n),  c_0 = sqrt(1/n), c_k = sqrt(2/n).
inline std::vector<double> dct(std::span<const double> x) {
  const std::size_t n = x.size();
  require(n >= 1, ErrorKind::Shape, "dct of empty sequence");
  // REDFT10 yields 2 * sum_t x_t cos(...).
  std::vector<double> y = detail::DctPlans::instance().run(x, FFTW_REDFT10);
  const double c0 = std::sqrt(1.0 / static_cast<double>(n)) * 0.5;
  const double ck = std::sqrt(2.0 / static_cast<double>(n)) * 0.5;
  y[0] *= c0;
  for (std::size_t k = 1; k < n; ++k) y[k] *= ck;
  return y;
}

/// Inverse of `dct` (orthonormal DCT-III).
inline std::vector<double> idct(std::span<const double> y) {
  const std::size_t n = y.size();
  require(n >= 1, ErrorKind::Shape, "idct of empty sequence");
  std::vector<double> z(y.begin(), y.end());
  z[0] *= std::sqrt(1.0 / static_cast<double>(n));
  const double ck = std::sqrt(2.0 / static_cast<double>(n)) * 0.5;
  for (std::size_t k = 1; k < n; ++k) z[k] *= ck;
  // REDFT01 yields z_0 + 2 * sum_{k>=1} z_k cos(...).
  return detail::DctPlans::instance().run(z, FFTW_REDFT01);
}

inline double l2_norm(std::span<const double> x) {
  // Scaled accumulation keeps tiny and huge inputs finite.
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double acc = 0.0;
  for (double v : x) {
    double r = v / scale;
    acc += r * r;
  }
  return scale * std::sqrt(acc);
}

/// beta * sqrt(n) * x / ||x||_2
inline std::vector<double> normalize(std::span<const double> x, double beta) {
  require(!x.empty(), ErrorKind::Shape, "normalize of empty sequence");
  const double norm = l2_norm(x);
  require(norm > 0.0, ErrorKind::Degenerate, "degenerate segment: zero norm, normalization undefined");
  require(std::isfinite(norm), ErrorKind::Degenerate, "non-finite segment values");
  const double gain = beta * std::sqrt(static_cast<double>(x.size())) / norm;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gain;
  return out;
}

/// Discrete cosine normalization: DCT, cut or zero-pad to n_f, then normalize over n_f.
inline FrequencyRep dcn(std::span<const double> samples, const DcnConfig& cfg) {
  cfg.validate();
  require(!samples.empty(), ErrorKind::Shape, "dcn of empty segment");
  std::vector<double> spectrum = dct(samples);
  spectrum.resize(cfg.n_f, 0.0);
  return FrequencyRep{normalize(spectrum, cfg.beta)};
}

inline FrequencyRep dcn(const SignalSegment& seg, const DcnConfig& cfg) {
  require(seg.samples.size() == seg.sample_rate_hz, ErrorKind::Shape,
          "segment length must equal its sample rate (one second)");
  return dcn(seg.samples, cfg);
}

/// R_v = [F_v, F~_v, F_v - F~_v].
inline UnifiedRepresentation unify(const FrequencyRep& query, const FrequencyRep& reference) {
  require(query.n_f() == reference.n_f(), ErrorKind::Shape,
          "query and reference lengths differ: " + std::to_string(query.n_f()) + " vs " +
              std::to_string(reference.n_f()));
  UnifiedRepresentation r(query.n_f());
  auto q = r.channel(0), ref = r.channel(1), res = r.channel(2);
  for (std::size_t i = 0; i < query.n_f(); ++i) {
    q[i] = query.coefficients[i];
    ref[i] = reference.coefficients[i];
    res[i] = q[i] - ref[i];
  }
  return r;
}

/// A one-second DCT-II window places f Hz at bin 2f.
inline std::int64_t frequency_bin_of_hz(double f, std::size_t n_f) {
  require(std::isfinite(f) && f >= 0.0 && f <= static_cast<double>(n_f) / 2.0, ErrorKind::Bounds,
          "frequency " + std::to_string(f) + " Hz outside representable range [0, " +
              std::to_string(static_cast<double>(n_f) / 2.0) + "]");
  return static_cast<std::int64_t>(std::round(2.0 * f));
}

// VSEG: "VSEG", u32 sample_rate_hz, u32 sample_count, sample_count x f32 (all little-endian).

inline std::vector<char> encode_vseg(std::uint32_t sample_rate_hz, std::span<const double> samples) {
  io::ByteWriter w;
  w.bytes("VSEG");
  w.put<std::uint32_t>(sample_rate_hz);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  for (double v : samples) w.put<float>(static_cast<float>(v));
  return w.data();
}

inline RawSignal decode_vseg(std::span<const char> data, const std::string& origin = "VSEG") {
  io::ByteReader r(data, origin);
  if (data.size() < 4 || r.bytes(4) != "VSEG") fail(ErrorKind::Io, origin + ": bad magic, expected VSEG");
  RawSignal sig;
  sig.sample_rate_hz = r.get<std::uint32_t>();
  auto count = r.get<std::uint32_t>();
  require(sig.sample_rate_hz >= 1, ErrorKind::Io, origin + ": zero sample rate");
  if (r.remaining() < static_cast<std::size_t>(count) * 4) fail(ErrorKind::Io, origin + ": truncated payload");
  sig.samples.resize(count);
  for (auto& v : sig.samples) v = static_cast<double>(r.get<float>());
  return sig;
}

inline void write_vseg(const std::filesystem::path& path, std::uint32_t sample_rate_hz,
                       std::span<const double> samples) {
  io::write_file(path, encode_vseg(sample_rate_hz, samples));
}

inline RawSignal read_vseg(const std::filesystem::path& path) {
  return decode_vseg(io::read_file(path), path.string());
}

}  // namespace bdx
