#pragma once

// Fault classification network: one wide-kernel stem per input channel,
// multiscale channel-attention blocks, global average pooling, and a
// two-layer classifier.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bdx/config.hpp"
#include "bdx/nn/checkpoint.hpp"
#include "bdx/nn/layers.hpp"

namespace bdx {

inline constexpr int kFaultClasses = 10;

enum class FaultLocation { None, Inner, Ball, Outer };
enum class FaultSeverity { None, Minor, Moderate, Severe };

/// 0 normal; 1-3 inner, 4-6 ball, 7-9 outer, each minor/moderate/severe.
inline FaultLocation fault_location(int label) {
  require(label >= 0 && label < kFaultClasses, ErrorKind::Label, "label " + std::to_string(label) + " out of range");
  if (label == 0) return FaultLocation::None;
  return static_cast<FaultLocation>((label - 1) / 3 + 1);
}

inline FaultSeverity fault_severity(int label) {
  require(label >= 0 && label < kFaultClasses, ErrorKind::Label, "label " + std::to_string(label) + " out of range");
  if (label == 0) return FaultSeverity::None;
  return static_cast<FaultSeverity>((label - 1) % 3 + 1);
}

inline int fault_label(FaultLocation loc, FaultSeverity sev) {
  if (loc == FaultLocation::None || sev == FaultSeverity::None) return 0;
  return (static_cast<int>(loc) - 1) * 3 + static_cast<int>(sev);
}

inline const char* location_name(FaultLocation l) {
  switch (l) {
    case FaultLocation::None: return "none";
    case FaultLocation::Inner: return "inner ring";
    case FaultLocation::Ball: return "ball";
    case FaultLocation::Outer: return "outer ring";
  }
  return "?";
}

inline const char* severity_name(FaultSeverity s) {
  switch (s) {
    case FaultSeverity::None: return "none";
    case FaultSeverity::Minor: return "minor";
    case FaultSeverity::Moderate: return "moderate";
    case FaultSeverity::Severe: return "severe";
  }
  return "?";
}

struct FcnConfig {
  std::size_t n_f = 24000;
  std::size_t in_channels = 3;
  std::size_t stem_kernel = 0;  // 0: 64 * n_f / 24000, at least 1
  std::size_t stem_stride = 8;
  std::size_t stem_channels = 16;
  std::vector<std::size_t> branch_kernels{3, 5, 7};
  std::vector<std::size_t> block_widths{64, 128, 256};
  std::size_t cam_reduction = 8;
  std::size_t pool_width = 4;
  std::size_t hidden = 256;
  std::size_t classes = kFaultClasses;
  bool batch_norm = true;

  std::size_t effective_stem_kernel() const {
    if (stem_kernel != 0) return stem_kernel;
    return std::max<std::size_t>(1, (64 * n_f + 12000) / 24000);
  }

  void validate() const {
    require(classes >= 2, ErrorKind::Config, "classes must be >= 2");
    require(in_channels >= 1, ErrorKind::Config, "in_channels must be >= 1");
    require(n_f >= 1 && stem_stride >= 1 && stem_channels >= 1 && hidden >= 1 && pool_width >= 1 &&
                cam_reduction >= 1,
            ErrorKind::Config, "FCN widths and sizes must be >= 1");
    require(!branch_kernels.empty() && !block_widths.empty(), ErrorKind::Config,
            "FCN needs at least one branch kernel and one block");
    for (auto k : branch_kernels)
      require(k % 2 == 1, ErrorKind::Config, "branch kernels must be odd (length-preserving padding)");
    for (auto w : block_widths) require(w >= 1, ErrorKind::Config, "block widths must be >= 1");
    for (auto w : block_widths)
      require(cam_reduction <= w * branch_kernels.size(), ErrorKind::Config,
              "CAM reduction ratio exceeds channel count");
    std::size_t len = n_f;
    require(len >= effective_stem_kernel(), ErrorKind::Config,
            "n_f " + std::to_string(n_f) + " shorter than stem kernel " + std::to_string(effective_stem_kernel()));
    len = (len - effective_stem_kernel()) / stem_stride + 1;
    for (std::size_t i = 0; i < block_widths.size(); ++i) {
      len /= pool_width;
      require(len >= 1, ErrorKind::Config, "n_f too small for the configured stem stride and pooling");
    }
  }

  static FcnConfig from(const KeyValues& kv) { return from(kv, FcnConfig{}); }

  static FcnConfig from(const KeyValues& kv, FcnConfig base) {
    FcnConfig c = base;
    c.n_f = kv.get<std::size_t>("n_f", c.n_f);
    c.in_channels = kv.get<std::size_t>("in_channels", c.in_channels);
    c.stem_kernel = kv.get<std::size_t>("stem_kernel", c.stem_kernel);
    c.stem_stride = kv.get<std::size_t>("stem_stride", c.stem_stride);
    c.stem_channels = kv.get<std::size_t>("stem_channels", c.stem_channels);
    c.branch_kernels = kv.list<std::size_t>("branch_kernels", c.branch_kernels);
    c.block_widths = kv.list<std::size_t>("block_widths", c.block_widths);
    c.cam_reduction = kv.get<std::size_t>("cam_reduction", c.cam_reduction);
    c.pool_width = kv.get<std::size_t>("pool_width", c.pool_width);
    c.hidden = kv.get<std::size_t>("hidden", c.hidden);
    c.classes = kv.get<std::size_t>("classes", c.classes);
    c.batch_norm = kv.get<bool>("batch_norm", c.batch_norm);
    return c;
  }

  /// Config stored alongside the weights as "config.*" tensors.
  std::vector<nn::NamedTensor> to_tensors() const {
    auto scalar = [](std::string name, double v) { return nn::NamedTensor{std::move(name), nn::Tensor({1}, {v})}; };
    auto vec = [](std::string name, const std::vector<std::size_t>& v) {
      return nn::NamedTensor{std::move(name), nn::Tensor({v.size()}, std::vector<double>(v.begin(), v.end()))};
    };
    return {scalar("config.n_f", double(n_f)),
            scalar("config.in_channels", double(in_channels)),
            scalar("config.stem_kernel", double(effective_stem_kernel())),
            scalar("config.stem_stride", double(stem_stride)),
            scalar("config.stem_channels", double(stem_channels)),
            vec("config.branch_kernels", branch_kernels),
            vec("config.block_widths", block_widths),
            scalar("config.cam_reduction", double(cam_reduction)),
            scalar("config.pool_width", double(pool_width)),
            scalar("config.hidden", double(hidden)),
            scalar("config.classes", double(classes)),
            scalar("config.batch_norm", batch_norm ? 1.0 : 0.0)};
  }

  static FcnConfig from_tensors(const std::vector<nn::NamedTensor>& tensors) {
    auto find = [&](const std::string& name) -> const nn::Tensor& {
      for (const auto& nt : tensors)
        if (nt.name == name) return nt.tensor;
      fail(ErrorKind::Io, "checkpoint lacks " + name);
    };
    auto scalar = [&](const std::string& name) { return static_cast<std::size_t>(find(name)[0]); };
    auto vec = [&](const std::string& name) {
      std::vector<std::size_t> v;
      for (double d : find(name).values()) v.push_back(static_cast<std::size_t>(d));
      return v;
    };
    FcnConfig c;
    c.n_f = scalar("config.n_f");
    c.in_channels = scalar("config.in_channels");
    c.stem_kernel = scalar("config.stem_kernel");
    c.stem_stride = scalar("config.stem_stride");
    c.stem_channels = scalar("config.stem_channels");
    c.branch_kernels = vec("config.branch_kernels");
    c.block_widths = vec("config.block_widths");
    c.cam_reduction = scalar("config.cam_reduction");
    c.pool_width = scalar("config.pool_width");
    c.hidden = scalar("config.hidden");
    c.classes = scalar("config.classes");
    c.batch_norm = find("config.batch_norm")[0] != 0.0;
    return c;
  }
};

/// Calibrate runs batch statistics forward only and averages them into the
/// batchnorm running statistics (see FcnModel::recalibrate_batchnorm).
enum class Mode { Train, Eval, Calibrate };

namespace detail {

/// conv -> [batchnorm] -> relu
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
           std::size_t padding, bool batch_norm)
      : conv(name + ".conv", in, out, kernel, stride, padding), use_bn_(batch_norm) {
    if (use_bn_) bn = nn::BatchNorm1d(name + ".bn", out);
  }

  nn::Tensor forward(const nn::Tensor& x, Mode mode) {
    nn::Tensor y = conv.forward(x);
    if (use_bn_) y = mode == Mode::Calibrate ? bn.calibrate(y) : bn.forward(y, mode == Mode::Train);
    pre_act_ = y;
    return nn::ops::relu(y);
  }

  nn::Tensor backward(const nn::Tensor& grad_out, bool need_input_grad = true) {
    nn::Tensor g = nn::ops::relu_backward(pre_act_, grad_out);
    if (use_bn_) g = bn.backward(g);
    return conv.backward(g, need_input_grad);
  }

  void params(std::vector<nn::Param*>& out) {
    for (auto* p : conv.params()) out.push_back(p);
    if (use_bn_)
      for (auto* p : bn.params()) out.push_back(p);
  }

  nn::Conv1d conv;
  nn::BatchNorm1d bn;

 private:
  bool use_bn_ = true;
  nn::Tensor pre_act_;
};

}  // namespace detail

/// Channel attention: w = sigmoid(mlp(avgpool(x)) + mlp(maxpool(x))), y = x * w per channel.
/// The two-layer mlp (C -> C/r -> C, relu between) is shared by both pooled paths.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(const std::string& name, std::size_t channels, std::size_t reduction) {
    require(reduction >= 1 && reduction <= channels, ErrorKind::Config,
            name + ": CAM reduction " + std::to_string(reduction) + " exceeds channel count " +
                std::to_string(channels));
    const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
    fc1 = nn::Linear(name + ".fc1", channels, hidden);
    fc2 = nn::Linear(name + ".fc2", hidden, channels);
  }

  void init(nn::UniformStream& rs) {
    fc1.init(rs);
    fc2.init(rs);
  }

  nn::Tensor forward(const nn::Tensor& x) {
    x_ = x;
    avg_ = nn::ops::global_avg_pool(x);
    mx_ = nn::ops::global_max_pool(x, argmax_);
    ha_pre_ = fc1.apply(avg_);
    hm_pre_ = fc1.apply(mx_);
    ha_ = nn::ops::relu(ha_pre_);
    hm_ = nn::ops::relu(hm_pre_);
    weights_ = nn::ops::sigmoid(nn::ops::add(fc2.apply(ha_), fc2.apply(hm_)));
    return nn::ops::channel_scale(x, weights_);
  }

  nn::Tensor backward(const nn::Tensor& grad_out) {
    nn::Tensor gx(x_.shape());
    nn::Tensor gw(weights_.shape());
    nn::ops::channel_scale_backward(x_, weights_, grad_out, gx, gw);
    nn::Tensor gs = nn::ops::sigmoid_backward(weights_, gw);
    nn::Tensor g_ha = fc2.backward_for(ha_, gs);
    nn::Tensor g_hm = fc2.backward_for(hm_, gs);
    nn::Tensor g_avg = fc1.backward_for(avg_, nn::ops::relu_backward(ha_pre_, g_ha));
    nn::Tensor g_mx = fc1.backward_for(mx_, nn::ops::relu_backward(hm_pre_, g_hm));
    nn::ops::global_avg_pool_backward(x_.shape(), g_avg, gx);
    nn::ops::global_max_pool_backward(x_.shape(), g_mx, argmax_, gx);
    return gx;
  }

  /// Per-channel gates from the last forward, (B, C), each in (0, 1).
  const nn::Tensor& weights() const { return weights_; }

  void params(std::vector<nn::Param*>& out) {
    for (auto* p : fc1.params()) out.push_back(p);
    for (auto* p : fc2.params()) out.push_back(p);
  }

  nn::Linear fc1, fc2;

 private:
  nn::Tensor x_, avg_, mx_, ha_pre_, hm_pre_, ha_, hm_, weights_;
  std::vector<std::size_t> argmax_;
};

/// Multiscale channel-attention block: parallel length-preserving convolutions,
/// channel concatenation, channel attention, pointwise fusion conv, windowed max-pool.
class Mscab {
 public:
  Mscab() = default;
  Mscab(const std::string& name, std::size_t in, std::size_t width, const std::vector<std::size_t>& kernels,
        std::size_t reduction, std::size_t pool_width, bool batch_norm)
      : cam(name + ".cam", width * kernels.size(), reduction),
        fuse(name + ".fuse", width * kernels.size(), width, 1, 1, 0, batch_norm),
        pool(pool_width) {
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      require(kernels[i] % 2 == 1, ErrorKind::Config, name + ": branch kernels must be odd");
      branches.emplace_back(name + ".branch" + std::to_string(i), in, width, kernels[i], 1, kernels[i] / 2,
                            batch_norm);
    }
  }

  void init(nn::UniformStream& rs) {
    for (auto& b : branches) b.conv.init(rs);
    cam.init(rs);
    fuse.conv.init(rs);
  }

  nn::Tensor forward(const nn::Tensor& x, Mode mode) {
    std::vector<nn::Tensor> outs;
    outs.reserve(branches.size());
    for (auto& b : branches) outs.push_back(b.forward(x, mode));
    nn::Tensor cat = nn::ops::concat_channels(outs);
    nn::Tensor attended = cam.forward(cat);
    return pool.forward(fuse.forward(attended, mode));
  }

  nn::Tensor backward(const nn::Tensor& grad_out) {
    nn::Tensor g = cam.backward(fuse.backward(pool.backward(grad_out)));
    const std::size_t width = g.dim(1) / branches.size();
    nn::Tensor gx;
    for (std::size_t i = 0; i < branches.size(); ++i) {
      nn::Tensor gi = branches[i].backward(nn::ops::slice_channels(g, i * width, width));
      gx = i == 0 ? std::move(gi) : nn::ops::add(gx, gi);
    }
    return gx;
  }

  void params(std::vector<nn::Param*>& out) {
    for (auto& b : branches) b.params(out);
    cam.params(out);
    fuse.params(out);
  }

  std::vector<detail::ConvUnit> branches;
  ChannelAttention cam;
  detail::ConvUnit fuse;
  nn::MaxPool1d pool;
};

class FcnModel {
 public:
  explicit FcnModel(FcnConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t k = cfg_.effective_stem_kernel();
    for (std::size_t c = 0; c < cfg_.in_channels; ++c)
      stems_.emplace_back("stem" + std::to_string(c), 1, cfg_.stem_channels, k, cfg_.stem_stride, 0,
                          cfg_.batch_norm);
    std::size_t in = cfg_.in_channels * cfg_.stem_channels;
    for (std::size_t i = 0; i < cfg_.block_widths.size(); ++i) {
      blocks_.emplace_back("block" + std::to_string(i + 1), in, cfg_.block_widths[i], cfg_.branch_kernels,
                           cfg_.cam_reduction, cfg_.pool_width, cfg_.batch_norm);
      in = cfg_.block_widths[i];
    }
    l1_ = nn::Linear("classifier.l1", in, cfg_.hidden);
    l2_ = nn::Linear("classifier.l2", cfg_.hidden, cfg_.classes);
    nn::UniformStream rs(rng::derive(seed, {0x46434e}));
    for (auto& s : stems_) s.conv.init(rs);
    for (auto& b : blocks_) b.init(rs);
    l1_.init(rs);
    l2_.init(rs);
  }

  const FcnConfig& config() const { return cfg_; }
  std::size_t feature_width() const { return l1_.in_features(); }

  /// (B, in_channels, n_f) -> (B, feature_width)
  nn::Tensor encode(const nn::Tensor& x, Mode mode = Mode::Eval) {
    nn::expect_rank(x, 3, "FCN input");
    require(x.dim(1) == cfg_.in_channels && x.dim(2) == cfg_.n_f, ErrorKind::Shape,
            "FCN expects input (B," + std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.n_f) + "), got " +
                nn::shape_str(x.shape()));
    std::vector<nn::Tensor> stem_out;
    stem_out.reserve(stems_.size());
    for (std::size_t c = 0; c < stems_.size(); ++c)
      stem_out.push_back(stems_[c].forward(nn::ops::slice_channels(x, c, 1), mode));
    nn::Tensor h = nn::ops::concat_channels(stem_out);
    for (auto& b : blocks_) h = b.forward(h, mode);
    last_block_shape_ = h.shape();
    return nn::ops::global_avg_pool(h);
  }

  /// l2(relu(l1(features)))
  nn::Tensor classify_features(const nn::Tensor& features) {
    features_ = features;
    hidden_pre_ = l1_.forward(features);
    return l2_.forward(nn::ops::relu(hidden_pre_));
  }

  /// Logits (B, classes).
  nn::Tensor classify(const nn::Tensor& x, Mode mode = Mode::Eval) { return classify_features(encode(x, mode)); }

  /// Backpropagates d loss / d logits through the last classify() call.
  /// Returns d loss / d input when requested, else an empty tensor.
  nn::Tensor backward(const nn::Tensor& grad_logits, bool need_input_grad = false) {
    nn::Tensor g = l1_.backward(nn::ops::relu_backward(hidden_pre_, l2_.backward(grad_logits)));
    nn::Tensor gh(last_block_shape_);
    nn::ops::global_avg_pool_backward(last_block_shape_, g, gh);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) gh = it->backward(gh);
    const std::size_t per = cfg_.stem_channels;
    std::vector<nn::Tensor> gin;
    for (std::size_t c = 0; c < stems_.size(); ++c)
      gin.push_back(stems_[c].backward(nn::ops::slice_channels(gh, c * per, per), need_input_grad));
    if (!need_input_grad) return {};
    return nn::ops::concat_channels(gin);
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    for (auto& s : stems_) s.params(out);
    for (auto& b : blocks_) b.params(out);
    for (auto* p : l1_.params()) out.push_back(p);
    for (auto* p : l2_.params()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params())
      if (p->trainable) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Replaces every batchnorm's running statistics with the average batch
  /// statistics over `batches`, computed under the current weights.
  template <typename BatchSource>
  void recalibrate_batchnorm(std::size_t batches, BatchSource&& next_batch) {
    if (!cfg_.batch_norm || batches == 0) return;
    for (auto& s : stems_) s.bn.reset_statistics();
    for (auto& b : blocks_) {
      for (auto& br : b.branches) br.bn.reset_statistics();
      b.fuse.bn.reset_statistics();
    }
    for (std::size_t i = 0; i < batches; ++i) encode(next_batch(i), Mode::Calibrate);
  }

  nn::Linear& l1() { return l1_; }
  nn::Linear& l2() { return l2_; }
  std::vector<Mscab>& blocks() { return blocks_; }

  std::vector<nn::NamedTensor> named_tensors() {
    std::vector<nn::NamedTensor> out = cfg_.to_tensors();
    for (auto* p : params()) out.push_back({p->name, p->value});
    return out;
  }

  void save(const std::filesystem::path& path) { nn::save_checkpoint(path, named_tensors()); }

  static FcnModel from_tensors(const std::vector<nn::NamedTensor>& tensors) {
    FcnModel m(FcnConfig::from_tensors(tensors));
    auto ps = m.params();
    nn::assign_params(tensors, ps);
    return m;
  }

  static FcnModel load(const std::filesystem::path& path) { return from_tensors(nn::load_checkpoint(path)); }

 private:
  FcnConfig cfg_;
  std::vector<detail::ConvUnit> stems_;
  std::vector<Mscab> blocks_;
  nn::Linear l1_, l2_;
  nn::Tensor features_, hidden_pre_;
  nn::Shape last_block_shape_;
};

}  // namespace bdx
