#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "bdx/fcn.hpp"
#include "bdx/train.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace bdx;
using nn::Shape;
using nn::Tensor;
using gradcheck::random_tensor;
using gradcheck::weighted_sum;

namespace {

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

// Parameter count by layer arithmetic, written independently of the model code.
std::size_t counted_params(const FcnConfig& c) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k + out; };
  auto bn = [&](std::size_t ch) { return c.batch_norm ? 2 * ch : 0; };
  const std::size_t k = c.stem_kernel ? c.stem_kernel : std::max<std::size_t>(1, (64 * c.n_f + 12000) / 24000);
  std::size_t n = c.in_channels * (conv(1, c.stem_channels, k) + bn(c.stem_channels));
  std::size_t in = c.in_channels * c.stem_channels;
  for (auto w : c.block_widths) {
    const std::size_t cat = w * c.branch_kernels.size();
    for (auto bk : c.branch_kernels) n += conv(in, w, bk) + bn(w);
    const std::size_t hid = std::max<std::size_t>(1, cat / c.cam_reduction);
    n += (cat * hid + hid) + (hid * cat + cat);
    n += conv(cat, w, 1) + bn(w);
    in = w;
  }
  return n + (in * c.hidden + c.hidden) + (c.hidden * c.classes + c.classes);
}

FcnConfig tiny_config() {
  FcnConfig c;
  c.n_f = 64;
  c.stem_kernel = 8;
  c.stem_stride = 2;
  c.stem_channels = 2;
  c.branch_kernels = {3, 5};
  c.block_widths = {4, 4};
  c.cam_reduction = 2;
  c.pool_width = 2;
  c.hidden = 8;
  return c;
}

}  // namespace

TEST(FaultLabel, LocationAndSeverityAreTotal) {
  EXPECT_EQ(fault_location(0), FaultLocation::None);
  EXPECT_EQ(fault_severity(0), FaultSeverity::None);
  const FaultLocation locs[] = {FaultLocation::Inner, FaultLocation::Ball, FaultLocation::Outer};
  const FaultSeverity sevs[] = {FaultSeverity::Minor, FaultSeverity::Moderate, FaultSeverity::Severe};
  for (int label = 1; label <= 9; ++label) {
    EXPECT_EQ(fault_location(label), locs[(label - 1) / 3]);
    EXPECT_EQ(fault_severity(label), sevs[(label - 1) % 3]);
    EXPECT_EQ(fault_label(fault_location(label), fault_severity(label)), label);
  }
  EXPECT_EQ(kind_of([] { fault_location(10); }), ErrorKind::Label);
  EXPECT_EQ(kind_of([] { fault_severity(-1); }), ErrorKind::Label);
}

TEST(FcnConfig, Validation) {
  auto bad = [](auto mutate) {
    FcnConfig c = tiny_config();
    mutate(c);
    return kind_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](FcnConfig& c) { c.classes = 1; }), ErrorKind::Config);
  EXPECT_EQ(bad([](FcnConfig& c) { c.branch_kernels = {3, 4}; }), ErrorKind::Config);
  EXPECT_EQ(bad([](FcnConfig& c) { c.cam_reduction = 9; }), ErrorKind::Config);
  EXPECT_EQ(bad([](FcnConfig& c) { c.block_widths = {4, 4, 4, 4, 4}; }), ErrorKind::Config);
  EXPECT_EQ(bad([](FcnConfig& c) { c.hidden = 0; }), ErrorKind::Config);
  EXPECT_NO_THROW(tiny_config().validate());
}

TEST(FcnConfig, ParsesKeyValues) {
  auto kv = KeyValues::parse("stem_channels = 4\nblock_widths = 8,16\nbatch_norm = false\n");
  FcnConfig c = FcnConfig::from(kv);
  EXPECT_EQ(c.stem_channels, 4u);
  EXPECT_EQ(c.block_widths, (std::vector<std::size_t>{8, 16}));
  EXPECT_FALSE(c.batch_norm);
  EXPECT_EQ(c.hidden, FcnConfig{}.hidden);
}

TEST(FcnModel, ParameterCountMatchesLayerArithmetic) {
  FcnConfig variants[4] = {tiny_config(), FcnConfig{}, FcnConfig{}, FcnConfig{}};
  variants[2].batch_norm = false;
  variants[3].in_channels = 1;
  variants[3].n_f = 6000;
  for (const auto& c : variants) {
    FcnModel m(c);
    EXPECT_EQ(m.parameter_count(), counted_params(c));
  }
}

TEST(FcnModel, DefaultSizeAndMonotoneInNf) {
  std::size_t prev = 0;
  for (std::size_t n_f : {6000u, 12000u, 24000u, 48000u}) {
    FcnConfig c;
    c.n_f = n_f;
    const std::size_t n = FcnModel(c).parameter_count();
    EXPECT_GT(n, prev) << "n_f=" << n_f;
    prev = n;
    if (n_f == 24000) {
      EXPECT_GE(n, 500000u);
      EXPECT_LE(n, 1500000u);
    }
  }
}

TEST(FcnModel, EncodeShapesAtDefaultSize) {
  FcnModel m(FcnConfig{}, 1);
  Tensor x = random_tensor({2, 3, 24000}, 2, 0.01);
  Tensor f = m.encode(x);
  EXPECT_EQ(f.shape(), (Shape{2, FcnConfig{}.block_widths.back()}));
  EXPECT_EQ(m.classify_features(f).shape(), (Shape{2, 10}));
}

TEST(FcnModel, RejectsWrongInputShape) {
  FcnModel m(tiny_config());
  EXPECT_EQ(kind_of([&] { m.encode(Tensor({1, 2, 64})); }), ErrorKind::Shape);
  EXPECT_EQ(kind_of([&] { m.encode(Tensor({1, 3, 65})); }), ErrorKind::Shape);
  EXPECT_EQ(kind_of([&] { m.encode(Tensor({3, 64})); }), ErrorKind::Shape);
}

TEST(FcnModel, ZeroReferenceChannelsStayFinite) {
  FcnModel m(tiny_config(), 3);
  Tensor x({2, 3, 64});
  auto q = random_tensor({2, 1, 64}, 4);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 64; ++t) x.at(b, 0, t) = q.at(b, 0, t);
  const Tensor logits = m.classify(x);
  for (double v : logits.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(FcnModel, BatchOrderDoesNotChangePerSampleLogits) {
  FcnModel m(tiny_config(), 5);
  Tensor x = random_tensor({3, 3, 64}, 6);
  Tensor swapped(x.shape());
  const std::size_t perm[3] = {2, 0, 1};
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < 64; ++t) swapped.at(b, c, t) = x.at(perm[b], c, t);
  Tensor a = m.classify(x), b = m.classify(swapped);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(b.at(i, k), a.at(perm[i], k));
  EXPECT_EQ(m.classify(x), a);  // deterministic
}

TEST(FcnModel, StemsShareNoParameters) {
  FcnModel m(tiny_config(), 7);
  std::vector<const double*> stem_weights;
  for (auto* p : m.params())
    if (p->name.rfind("stem", 0) == 0 && p->name.find("conv.weight") != std::string::npos)
      stem_weights.push_back(p->value.data());
  ASSERT_EQ(stem_weights.size(), 3u);
  EXPECT_NE(stem_weights[0], stem_weights[1]);
  auto ps = m.params();
  EXPECT_NE(ps[0]->value, ps[ps.size() / 2]->value);
}

TEST(ChannelAttention, ZeroMlpHalvesTheInput) {
  ChannelAttention cam("cam", 4, 2);
  Tensor x = random_tensor({2, 4, 5}, 8);
  Tensor y = cam.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.5 * x[i]);
}

TEST(ChannelAttention, HandComputedTwoChannelCase) {
  ChannelAttention cam("cam", 2, 2);  // hidden width 1
  cam.fc1.weight.value = Tensor({1, 2}, {0.5, -1.0});
  cam.fc1.bias.value = Tensor({1}, {0.25});
  cam.fc2.weight.value = Tensor({2, 1}, {2.0, -1.0});
  cam.fc2.bias.value = Tensor({2}, {0.1, 0.0});
  Tensor x({1, 2, 2}, {1.0, 3.0, -2.0, 0.0});
  // avg = (2, -1), max = (3, 0)
  auto relu = [](double v) { return v > 0 ? v : 0.0; };
  const double ha = relu(0.5 * 2.0 - 1.0 * -1.0 + 0.25);  // 2.25
  const double hm = relu(0.5 * 3.0 - 1.0 * 0.0 + 0.25);   // 1.75
  const double w0 = 1.0 / (1.0 + std::exp(-((2.0 * ha + 0.1) + (2.0 * hm + 0.1))));
  const double w1 = 1.0 / (1.0 + std::exp(-((-1.0 * ha) + (-1.0 * hm))));
  Tensor y = cam.forward(x);
  EXPECT_NEAR(y.at(0, 0, 0), 1.0 * w0, 1e-15);
  EXPECT_NEAR(y.at(0, 0, 1), 3.0 * w0, 1e-15);
  EXPECT_NEAR(y.at(0, 1, 0), -2.0 * w1, 1e-15);
  EXPECT_NEAR(y.at(0, 1, 1), 0.0, 1e-15);
  EXPECT_NEAR(cam.weights().at(0, 1), w1, 1e-15);
}

TEST(ChannelAttention, WeightsStayInUnitInterval) {
  ChannelAttention cam("cam", 6, 3);
  nn::UniformStream rs(9);
  cam.init(rs);
  cam.forward(random_tensor({4, 6, 7}, 10, 5.0));
  for (double w : cam.weights().values()) {
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
  }
  EXPECT_EQ(kind_of([] { ChannelAttention("cam", 4, 5); }), ErrorKind::Config);
}

TEST(ChannelAttention, GradientsMatchFiniteDifferences) {
  ChannelAttention cam("cam", 6, 2);
  nn::UniformStream rs(11);
  cam.init(rs);
  cam.fc1.bias.value = random_tensor({3}, 12, 0.1);
  Tensor x = random_tensor({3, 6, 5}, 13);
  Tensor r = random_tensor(x.shape(), 14);
  cam.forward(x);
  Tensor gx = cam.backward(r);
  auto loss = [&] {
    ChannelAttention probe = cam;
    return weighted_sum(probe.forward(x), r);
  };
  EXPECT_LT(gradcheck::compare(x.values(), gx.values(), loss).rel, 1e-4);
  for (auto* p : std::vector<nn::Param*>{&cam.fc1.weight, &cam.fc1.bias, &cam.fc2.weight, &cam.fc2.bias})
    EXPECT_LT(gradcheck::compare(p->value.values(), p->grad.values(), loss).rel, 1e-4) << p->name;
}

TEST(Mscab, ShapesAndCompositionOracle) {
  Mscab block("blk", 3, 4, {3, 5, 7}, 4, 2, true);
  nn::UniformStream rs(15);
  block.init(rs);
  Tensor x = random_tensor({2, 3, 11}, 16);
  Tensor y = block.forward(x, Mode::Eval);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5}));
  EXPECT_EQ(block.cam.weights().dim(1), 12u);

  // Recompose from primitive ops with the block's own weights.
  auto unit = [](detail::ConvUnit& u, const Tensor& in, std::size_t pad) {
    Tensor h = nn::ops::conv1d_forward(in, u.conv.weight.value, u.conv.bias.value, 1, pad);
    Tensor rm = u.bn.running_mean.value, rv = u.bn.running_var.value;
    h = nn::ops::batchnorm_forward(h, u.bn.gamma.value, u.bn.beta.value, rm, rv, false, 0.1, 1e-5, nullptr);
    return nn::ops::relu(h);
  };
  std::vector<Tensor> outs;
  const std::size_t ks[] = {3, 5, 7};
  for (std::size_t i = 0; i < 3; ++i) outs.push_back(unit(block.branches[i], x, ks[i] / 2));
  Tensor cat = nn::ops::concat_channels(outs);
  ChannelAttention cam = block.cam;
  Tensor fused = unit(block.fuse, cam.forward(cat), 0);
  std::vector<std::size_t> arg;
  Tensor expect = nn::ops::max_pool(fused, 2, arg);
  EXPECT_EQ(y, expect);
}

TEST(Mscab, GradientsMatchFiniteDifferences) {
  Mscab block("blk", 2, 3, {3, 5}, 2, 2, true);
  nn::UniformStream rs(17);
  block.init(rs);
  Tensor x = random_tensor({3, 2, 8}, 18);
  Tensor r = random_tensor({3, 3, 4}, 19);
  block.forward(x, Mode::Train);
  Tensor gx = block.backward(r);
  auto loss = [&] {
    Mscab probe = block;
    return weighted_sum(probe.forward(x, Mode::Train), r);
  };
  EXPECT_LT(gradcheck::compare(x.values(), gx.values(), loss).rel, 1e-4);
  std::vector<nn::Param*> ps;
  block.params(ps);
  for (auto* p : ps) {
    if (!p->trainable) continue;
    auto r = gradcheck::compare(p->value.values(), p->grad.values(), loss, 24);
    EXPECT_TRUE(r.ok(1e-4)) << p->name << " rel " << r.rel;
  }
}

TEST(FcnModel, EndToEndGradientAtTinySize) {
  FcnModel m(tiny_config(), 20);
  Tensor x = random_tensor({4, 3, 64}, 21);
  std::vector<int> y{0, 3, 7, 9};
  m.zero_grad();
  auto ce = nn::ops::softmax_cross_entropy(m.classify(x, Mode::Train), y);
  Tensor gx = m.backward(ce.grad, true);
  auto loss = [&] { return nn::ops::softmax_cross_entropy(m.classify(x, Mode::Train), y).loss; };
  EXPECT_LT(gradcheck::compare(x.values(), gx.values(), loss, 48).rel, 1e-3);
  for (auto* p : m.params()) {
    if (!p->trainable) continue;
    auto r = gradcheck::compare(p->value.values(), p->grad.values(), loss, 12);
    EXPECT_TRUE(r.ok(1e-3)) << p->name << " rel " << r.rel;
  }
}

TEST(FcnModel, SaveLoadRoundTrip) {
  FcnConfig c = tiny_config();
  c.batch_norm = false;
  c.hidden = 5;
  FcnModel m(c, 22);
  auto path = std::filesystem::temp_directory_path() / "bdx_fcn_roundtrip.bdxw";
  m.save(path);
  FcnModel back = FcnModel::load(path);
  EXPECT_EQ(back.config().hidden, 5u);
  EXPECT_FALSE(back.config().batch_norm);
  Tensor x = random_tensor({2, 3, 64}, 23);
  EXPECT_EQ(back.classify(x), m.classify(x));
  EXPECT_EQ(nn::encode_checkpoint(back.named_tensors()), nn::encode_checkpoint(m.named_tensors()));
}

TEST(FcnModel, SeedControlsInitialization) {
  auto first = [](std::uint64_t seed) { return FcnModel(tiny_config(), seed).params()[0]->value; };
  EXPECT_EQ(first(1), first(1));
  EXPECT_NE(first(1), first(2));
}

namespace {

// Two working conditions, three classes. Class k adds a tone at a class-specific
// frequency whose amplitude is large against the noise, so the task is separable.
struct ToyData {
  SampleSet train, val;
  ReferenceStore store;
};

ToyData toy_data(std::size_t per_cell) {
  const std::size_t rate = 2000;
  DcnConfig dcn_cfg{.n_f = 2000, .beta = 0.01};
  const double base_hz[2] = {30.0, 45.0};
  const double class_hz[3] = {0.0, 310.0, 620.0};
  ToyData d;
  for (SampleSet* s : {&d.train, &d.val}) {
    s->n_f = dcn_cfg.n_f;
    s->variant = Variant::Full;
  }
  std::uint64_t seed = 1000;
  for (std::uint32_t cond = 0; cond < 2; ++cond)
    for (int label = 0; label < 3; ++label)
      for (std::size_t i = 0; i < per_cell + per_cell / 4; ++i) {
        auto x = oracle::gaussian(rate, seed++, 0.3);
        for (std::size_t t = 0; t < rate; ++t) {
          const double tt = double(t) / double(rate);
          x[t] += std::sin(2 * std::numbers::pi * base_hz[cond] * tt);
          if (label) x[t] += 0.8 * std::sin(2 * std::numbers::pi * class_hz[label] * tt + 0.3 * double(i));
        }
        auto rep = dcn(x, dcn_cfg);
        SampleSet& s = i < per_cell ? d.train : d.val;
        if (&s == &d.train && label == 0 && i < 3) d.store.insert_reference(cond, rep, 0, Split::Train);
        s.queries.push_back(rep.coefficients);
        s.conditions.push_back(cond);
        s.labels.push_back(label);
        s.sources.push_back("toy");
        s.ids.push_back(std::to_string(seed));
      }
  return d;
}

FcnConfig toy_model() {
  FcnConfig c;
  c.n_f = 2000;
  c.classes = 3;
  c.stem_kernel = 16;
  c.stem_stride = 8;
  c.stem_channels = 2;
  c.block_widths = {8, 8};
  c.cam_reduction = 4;
  c.hidden = 16;
  return c;
}

}  // namespace

TEST(Pretrain, ToySetIsLearned) {
  ToyData d = toy_data(100);  // 600 training segments
  ASSERT_EQ(d.train.size(), 600u);
  FcnModel m(toy_model(), 1);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  cfg.seed = 2;
  TrainResult r = pretrain(m, d.train, d.val, &d.store, cfg);
  EXPECT_NEAR(r.initial_loss, std::log(3.0), 1.0);
  EXPECT_LE(r.best_epoch, 50u);
  EXPECT_GE(accuracy(m, d.train, &d.store, eval_seed(cfg.seed)), 0.99);
  EXPECT_GE(r.best_val_acc, 0.95);
}

TEST(Pretrain, FixedSeedGivesIdenticalWeights) {
  ToyData d = toy_data(20);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  auto run = [&] {
    FcnModel m(toy_model(), 4);
    pretrain(m, d.train, d.val, &d.store, cfg);
    return nn::encode_checkpoint(m.named_tensors());
  };
  const auto first = run();
  std::vector<std::vector<double>> pad;  // shifts later heap addresses
  for (std::size_t i = 1; i < 8; ++i) pad.emplace_back(i * 3 + 1, 0.0);
  EXPECT_EQ(first, run());
}

TEST(Pretrain, EmptyTrainingSetIsDataError) {
  ToyData d = toy_data(2);
  SampleSet empty;
  empty.n_f = 2000;
  FcnModel m(toy_model());
  EXPECT_EQ(kind_of([&] { pretrain(m, empty, d.val, &d.store, TrainConfig{}); }), ErrorKind::Data);
}

TEST(Pretrain, MissingReferenceSurfaces) {
  ToyData d = toy_data(4);
  ReferenceStore partial;
  partial.insert_reference(0, FrequencyRep{d.train.queries[0]}, 0, Split::Train);
  FcnModel m(toy_model());
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_EQ(kind_of([&] { pretrain(m, d.train, d.val, &partial, cfg); }), ErrorKind::MissingReference);
}
