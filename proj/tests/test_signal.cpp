#include <gtest/gtest.h>

#include <cstring>

#include "bdx/signal.hpp"
#include "oracles.hpp"

using namespace bdx;

namespace {

RawSignal ramp(std::size_t n, std::uint32_t rate) {
  RawSignal r;
  r.sample_rate_hz = rate;
  r.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.samples[i] = static_cast<double>(i);
  return r;
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a bdx::Error";
  return ErrorKind::Config;
}

std::size_t argmax_abs(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  return best;
}

}  // namespace

TEST(Segment, ThirdSecondOfA48kRecording) {
  auto raw = ramp(144000, 48000);
  auto seg = segment(raw, 2);
  ASSERT_EQ(seg.samples.size(), 48000u);
  EXPECT_EQ(seg.samples.front(), 96000.0);
  EXPECT_EQ(seg.samples.back(), 143999.0);
  EXPECT_EQ(seg.segment_index, 2u);
}

TEST(Segment, FirstSecond) {
  auto raw = ramp(50000, 48000);
  auto seg = segment(raw, 0);
  EXPECT_EQ(seg.samples.front(), 0.0);
  EXPECT_EQ(seg.samples.size(), 48000u);
}

TEST(Segment, PastTheEndIsABoundsError) {
  auto raw = ramp(100000, 48000);
  EXPECT_EQ(kind_of([&] { segment(raw, 2); }), ErrorKind::Bounds);
}

TEST(SegmentAll, DropsTrailingRemainder) {
  auto segs = segment_all(ramp(125000, 50000));
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[1].samples.back(), 99999.0);
}

TEST(SegmentAll, ExactlyOneSecond) { EXPECT_EQ(segment_all(ramp(48000, 48000)).size(), 1u); }

TEST(SegmentAll, ShorterThanOneSecondFails) {
  EXPECT_EQ(kind_of([] { segment_all(ramp(40000, 48000)); }), ErrorKind::Bounds);
}

TEST(SegmentAll, ConcatenationIsAPrefixOfTheRecording) {
  auto raw = ramp(7 * 1000 + 333, 1000);
  std::vector<double> joined;
  for (const auto& s : segment_all(raw)) joined.insert(joined.end(), s.samples.begin(), s.samples.end());
  ASSERT_EQ(joined.size(), 7000u);
  EXPECT_TRUE(std::equal(joined.begin(), joined.end(), raw.samples.begin()));
}

TEST(Dct, ConstantInputConcentratesInDc) {
  const std::size_t n = 37;
  std::vector<double> x(n, 2.5);
  auto y = dct(x);
  EXPECT_NEAR(y[0], 2.5 * std::sqrt(double(n)), 1e-12);
  for (std::size_t k = 1; k < n; ++k) EXPECT_NEAR(y[k], 0.0, 1e-12) << k;
}

TEST(Dct, UnitImpulseLengthFour) {
  std::vector<double> x{1, 0, 0, 0};
  auto y = dct(x);
  EXPECT_NEAR(y[0], 0.5, 1e-15);
  for (int k = 1; k < 4; ++k) EXPECT_NEAR(y[k], std::sqrt(2.0) / 2.0 * std::cos(std::numbers::pi * k / 8.0), 1e-15);
}

TEST(Dct, ParsevalLength64AgainstDirectSum) {
  auto x = oracle::gaussian(64, 11);
  auto fast = dct(x);
  auto direct = oracle::dct2(x);
  EXPECT_LT(std::abs(oracle::norm2(fast) - oracle::norm2(x)), 1e-12 * oracle::norm2(x));
  EXPECT_LT(std::abs(oracle::norm2(direct) - oracle::norm2(x)), 1e-12 * oracle::norm2(x));
}

TEST(Dct, FastMatchesDirectSumOnAssortedLengths) {
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 17u, 100u, 127u, 480u, 1000u, 1023u}) {
    auto x = oracle::gaussian(n, 100 + n);
    auto fast = dct(x);
    auto direct = oracle::dct2(x);
    double err = 0.0;
    for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs(fast[k] - direct[k]));
    EXPECT_LT(err, 1e-10 * std::max(oracle::max_abs(direct), 1e-300)) << "n=" << n;
  }
}

TEST(Dct, LibraryDirectSumAgreesWithTestOracle) {
  auto x = oracle::gaussian(301, 5);
  auto lib = dct_reference(x);
  auto ref = oracle::dct2(x);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(lib[k], ref[k], 1e-12) << k;
  std::vector<std::size_t> bins{0, 7, 300};
  auto some = dct_reference(x, bins);
  ASSERT_EQ(some.size(), 3u);
  for (std::size_t i = 0; i < bins.size(); ++i) EXPECT_EQ(some[i], lib[bins[i]]);
}

TEST(Dct, Linearity) {
  auto x = oracle::gaussian(999, 1), y = oracle::gaussian(999, 2);
  const double a = 0.75, b = -3.25;
  std::vector<double> mix(999);
  for (std::size_t i = 0; i < 999; ++i) mix[i] = a * x[i] + b * y[i];
  auto dm = dct(mix), dx = dct(x), dy = dct(y);
  double err = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < 999; ++k) {
    err = std::max(err, std::abs(dm[k] - (a * dx[k] + b * dy[k])));
    scale = std::max(scale, std::abs(dm[k]));
  }
  EXPECT_LT(err, 1e-10 * scale);
}

TEST(Dct, InverseRoundTrip) {
  auto x = oracle::gaussian(1200, 9);
  auto back = idct(dct(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
}

TEST(Dct, EmptyInputFails) {
  std::vector<double> none;
  EXPECT_EQ(kind_of([&] { dct(none); }), ErrorKind::Shape);
}

TEST(Normalize, OnesBecomeBeta) {
  std::vector<double> x(24000, 1.0);
  for (double v : normalize(x, 0.01)) ASSERT_NEAR(v, 0.01, 1e-15);
}

TEST(Normalize, ThreeFourCaseMatchesHighPrecisionEvaluation) {
  std::vector<double> x(24000, 0.0);
  x[0] = 3.0;
  x[1] = 4.0;
  auto y = normalize(x, 0.01);
  const long double g = 0.01L * std::sqrt(24000.0L) / 5.0L;
  EXPECT_NEAR(y[0], static_cast<double>(g * 3.0L), 1e-15);
  EXPECT_NEAR(y[1], static_cast<double>(g * 4.0L), 1e-15);
  for (std::size_t i = 2; i < y.size(); ++i) ASSERT_EQ(y[i], 0.0);
}

TEST(Normalize, ZerosAreDegenerate) {
  std::vector<double> x(10, 0.0);
  EXPECT_EQ(kind_of([&] { normalize(x, 0.01); }), ErrorKind::Degenerate);
}

TEST(Normalize, TinyAndHugeInputsKeepTheNorm) {
  for (double scale : {1e-200, 1e200}) {
    auto x = oracle::gaussian(100, 3, scale);
    auto y = normalize(x, 0.5);
    EXPECT_NEAR(oracle::norm2(y), 0.5 * std::sqrt(100.0), 1e-12);
  }
}

TEST(Dcn, PadBranchLeavesZerosBeyondTheRate) {
  SignalSegment seg{oracle::gaussian(12000, 21), 12000, 0, 0};
  auto f = dcn(seg, DcnConfig{24000, 0.01});
  ASSERT_EQ(f.n_f(), 24000u);
  for (std::size_t i = 12000; i < 24000; ++i) ASSERT_EQ(f.coefficients[i], 0.0) << i;
  EXPECT_NEAR(oracle::norm2(f.coefficients), 0.01 * std::sqrt(24000.0), 1e-9 * 0.01 * std::sqrt(24000.0));
}

TEST(Dcn, CutBranchMatchesDirectSumOracle) {
  // Same branch as s=48000, n_f=24000 at a size the direct sum handles.
  auto x = oracle::gaussian(480, 4);
  auto f = dcn(x, DcnConfig{240, 0.01});
  auto full = oracle::dct2(x);
  std::vector<double> head(full.begin(), full.begin() + 240);
  const double gain = 0.01 * std::sqrt(240.0) / oracle::norm2(head);
  for (std::size_t k = 0; k < 240; ++k) EXPECT_NEAR(f.coefficients[k], gain * head[k], 1e-12) << k;
}

TEST(Dcn, CutBranchAt48kUsesTheFirst24000Coefficients) {
  auto x = oracle::gaussian(48000, 8);
  auto f = dcn(x, DcnConfig{24000, 0.01});
  auto spectrum = dct(x);
  // Proportional to the leading coefficients: check sampled bins against the direct sum.
  std::vector<std::size_t> bins{0, 1, 999, 12345, 23999};
  auto direct = dct_reference(x, bins);
  const double ratio = f.coefficients[1] / direct[1];
  for (std::size_t i = 0; i < bins.size(); ++i)
    EXPECT_NEAR(f.coefficients[bins[i]], ratio * direct[i], 1e-9 * std::abs(ratio) * oracle::max_abs(spectrum));
  EXPECT_GT(ratio, 0.0);
}

TEST(Dcn, NormInvariantOverRandomSegments) {
  const double target = 0.01 * std::sqrt(24000.0);
  for (std::uint32_t rate : {1000u, 12000u, 30000u, 48000u}) {
    SignalSegment seg{oracle::gaussian(rate, rate), rate, 0, 0};
    EXPECT_NEAR(oracle::norm2(dcn(seg, DcnConfig{}).coefficients), target, 1e-9 * target) << rate;
  }
}

TEST(Dcn, ZeroSegmentIsDegenerate) {
  SignalSegment seg{std::vector<double>(1000, 0.0), 1000, 0, 0};
  EXPECT_EQ(kind_of([&] { dcn(seg, DcnConfig{}); }), ErrorKind::Degenerate);
}

TEST(Dcn, SegmentMustBeOneSecond) {
  SignalSegment seg{oracle::gaussian(999, 1), 1000, 0, 0};
  EXPECT_EQ(kind_of([&] { dcn(seg, DcnConfig{}); }), ErrorKind::Shape);
}

TEST(Dcn, InvalidConfigIsRejected) {
  auto x = oracle::gaussian(100, 1);
  EXPECT_EQ(kind_of([&] { dcn(x, DcnConfig{0, 0.01}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { dcn(x, DcnConfig{10, 0.0}); }), ErrorKind::Config);
}

TEST(Dcn, CosineToneLandsOnTwiceItsFrequencyAtEveryRate) {
  for (double f : {97.0, 1000.0, 3333.0})
    for (std::size_t rate : {12000u, 48000u, 100000u}) {
      auto rep = dcn(oracle::tone(f, rate, std::numbers::pi / 2), DcnConfig{});
      EXPECT_EQ(static_cast<std::int64_t>(argmax_abs(rep.coefficients)), frequency_bin_of_hz(f, 24000))
          << f << " Hz at " << rate;
    }
}

TEST(Dcn, ArbitraryPhaseToneStaysWithinOneBinAcrossRates) {
  // A sine component splits between the two neighbours of bin 2f.
  for (double phase : {0.0, 0.3, 2.0})
    for (double f : {97.0, 1000.0, 3333.0}) {
      std::vector<std::int64_t> peaks;
      for (std::size_t rate : {12000u, 48000u, 100000u})
        peaks.push_back(static_cast<std::int64_t>(argmax_abs(dcn(oracle::tone(f, rate, phase), DcnConfig{}).coefficients)));
      for (auto p : peaks) {
        EXPECT_LE(std::abs(p - frequency_bin_of_hz(f, 24000)), 1) << f << " Hz, phase " << phase;
        EXPECT_LE(std::abs(p - peaks[0]), 1);
      }
    }
}

TEST(Unify, IdenticalInputsGiveZeroResidual) {
  FrequencyRep a{oracle::gaussian(16, 1)};
  auto r = unify(a, a);
  for (double v : r.channel(2)) EXPECT_EQ(v, 0.0);
}

TEST(Unify, ZeroReferenceGivesResidualEqualToQuery) {
  FrequencyRep q{oracle::gaussian(16, 2)}, z{std::vector<double>(16, 0.0)};
  auto r = unify(q, z);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(r.channel(2)[i], q.coefficients[i]);
}

TEST(Unify, ChannelsMatchElementwiseOracle) {
  FrequencyRep q{oracle::gaussian(8, 3)}, ref{oracle::gaussian(8, 4)};
  auto r = unify(q, ref);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(r.channel(0)[i], q.coefficients[i]);
    EXPECT_EQ(r.channel(1)[i], ref.coefficients[i]);
    const double expect = q.coefficients[i] - ref.coefficients[i];
    EXPECT_EQ(std::memcmp(&r.channel(2)[i], &expect, sizeof(double)), 0);
  }
}

TEST(Unify, LengthMismatchIsAShapeError) {
  FrequencyRep a{std::vector<double>(8, 1.0)}, b{std::vector<double>(9, 1.0)};
  EXPECT_EQ(kind_of([&] { unify(a, b); }), ErrorKind::Shape);
}

TEST(FrequencyBin, Examples) {
  EXPECT_EQ(frequency_bin_of_hz(1000.0, 24000), 2000);
  EXPECT_EQ(frequency_bin_of_hz(0.0, 24000), 0);
  EXPECT_EQ(frequency_bin_of_hz(500.25, 24000), 1001);
  EXPECT_EQ(frequency_bin_of_hz(12000.0, 24000), 24000);
}

TEST(FrequencyBin, OutOfRangeFails) {
  EXPECT_EQ(kind_of([] { frequency_bin_of_hz(12000.5, 24000); }), ErrorKind::Bounds);
  EXPECT_EQ(kind_of([] { frequency_bin_of_hz(-1.0, 24000); }), ErrorKind::Bounds);
}

TEST(Vseg, RoundTripIsBitExactForFloatValues) {
  auto x = oracle::gaussian(777, 6);
  for (auto& v : x) v = static_cast<double>(static_cast<float>(v));
  auto bytes = encode_vseg(25600, x);
  EXPECT_EQ(bytes.size(), 12u + 4u * 777u);
  auto back = decode_vseg(bytes);
  EXPECT_EQ(back.sample_rate_hz, 25600u);
  EXPECT_EQ(back.samples, x);
  EXPECT_EQ(encode_vseg(back.sample_rate_hz, back.samples), bytes);
}

TEST(Vseg, HeaderIsLittleEndian) {
  std::vector<double> x{1.0};
  auto bytes = encode_vseg(0x01020304, x);
  EXPECT_EQ(std::string(bytes.data(), 4), "VSEG");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x04);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);
}

TEST(Vseg, RejectsBadMagicAndTruncation) {
  std::vector<double> x(10, 0.5);
  auto bytes = encode_vseg(10, x);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_vseg(bad); }), ErrorKind::Io);
  bytes.pop_back();
  EXPECT_EQ(kind_of([&] { decode_vseg(bytes); }), ErrorKind::Io);
  std::vector<char> tiny{'V', 'S'};
  EXPECT_EQ(kind_of([&] { decode_vseg(tiny); }), ErrorKind::Io);
}
