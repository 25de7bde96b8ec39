#pragma once

// FCN pre-training with cross-entropy, AdamW and the plateau schedule.
// The validation-best weights are kept.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <vector>

#include "bdx/config.hpp"
#include "bdx/dataset.hpp"
#include "bdx/fcn.hpp"
#include "bdx/nn/checkpoint.hpp"
#include "bdx/nn/optim.hpp"

namespace bdx {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 1024;
  double lr = 1e-4;
  double weight_decay = 0.01;
  std::size_t patience = 150;
  double factor = 0.5;
  double lr_floor = 1e-7;
  std::size_t bn_calibration_batches = 4;  // per epoch, 0 keeps the momentum estimates
  std::uint64_t seed = 0;

  static TrainConfig from(const KeyValues& kv) { return from(kv, TrainConfig{}); }

  static TrainConfig from(const KeyValues& kv, TrainConfig base) {
    TrainConfig c = base;
    c.epochs = kv.get<std::size_t>("epochs", c.epochs);
    c.batch_size = kv.get<std::size_t>("batch_size", c.batch_size);
    c.lr = kv.get<double>("lr", c.lr);
    c.weight_decay = kv.get<double>("weight_decay", c.weight_decay);
    c.patience = kv.get<std::size_t>("patience", c.patience);
    c.factor = kv.get<double>("factor", c.factor);
    c.lr_floor = kv.get<double>("lr_floor", c.lr_floor);
    c.bn_calibration_batches = kv.get<std::size_t>("bn_calibration_batches", c.bn_calibration_batches);
    c.seed = kv.get<std::uint64_t>("seed", c.seed);
    require(c.epochs >= 1 && c.batch_size >= 1, ErrorKind::Config, "epochs and batch_size must be >= 1");
    require(c.lr > 0 && c.factor > 0 && c.factor < 1, ErrorKind::Config, "lr must be > 0 and factor in (0,1)");
    return c;
  }
};

/// Training settings and data variant stored next to the weights, so eval can
/// retrain under the same recipe and diagnose can rebuild the input pipeline.
struct CheckpointMeta {
  TrainConfig train;
  Variant variant = Variant::Full;
  double beta = DcnConfig{}.beta;

  std::vector<nn::NamedTensor> to_tensors() const {
    auto scalar = [](std::string name, double v) { return nn::NamedTensor{std::move(name), nn::Tensor({1}, {v})}; };
    return {scalar("train.epochs", double(train.epochs)),
            scalar("train.batch_size", double(train.batch_size)),
            scalar("train.lr", train.lr),
            scalar("train.weight_decay", train.weight_decay),
            scalar("train.patience", double(train.patience)),
            scalar("train.factor", train.factor),
            scalar("train.lr_floor", train.lr_floor),
            scalar("train.bn_calibration_batches", double(train.bn_calibration_batches)),
            // Split in two so the 64-bit seed survives the double encoding.
            scalar("train.seed_hi", double(train.seed >> 32)),
            scalar("train.seed_lo", double(train.seed & 0xffffffffu)),
            scalar("data.variant", double(static_cast<int>(variant))),
            scalar("data.beta", beta)};
  }

  static CheckpointMeta from_tensors(const std::vector<nn::NamedTensor>& tensors) {
    auto find = [&](const std::string& name) -> double {
      for (const auto& nt : tensors)
        if (nt.name == name && nt.tensor.size() == 1) return nt.tensor[0];
      fail(ErrorKind::Io, "checkpoint lacks " + name);
    };
    CheckpointMeta m;
    m.train.epochs = static_cast<std::size_t>(find("train.epochs"));
    m.train.batch_size = static_cast<std::size_t>(find("train.batch_size"));
    m.train.lr = find("train.lr");
    m.train.weight_decay = find("train.weight_decay");
    m.train.patience = static_cast<std::size_t>(find("train.patience"));
    m.train.factor = find("train.factor");
    m.train.lr_floor = find("train.lr_floor");
    m.train.bn_calibration_batches = static_cast<std::size_t>(find("train.bn_calibration_batches"));
    m.train.seed = (static_cast<std::uint64_t>(find("train.seed_hi")) << 32) | static_cast<std::uint64_t>(find("train.seed_lo"));
    const int v = static_cast<int>(find("data.variant"));
    require(v >= 0 && v <= static_cast<int>(Variant::TimeDomain), ErrorKind::Io, "checkpoint has an unknown data variant");
    m.variant = static_cast<Variant>(v);
    m.beta = find("data.beta");
    return m;
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_acc = -1.0;
  std::size_t best_epoch = 0;
  double initial_loss = 0.0;  // loss of the first batch, before any update
  bool stopped_on_floor = false;
};

inline std::size_t argmax_row(const nn::Tensor& logits, std::size_t b) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.dim(1); ++k)
    if (logits.at(b, k) > logits.at(b, best)) best = k;
  return best;
}

/// Inference-mode logits for the given samples, in batches.
inline nn::Tensor predict_logits(FcnModel& model, const SampleSet& set, std::span<const std::size_t> indices,
                                 const ReferenceStore* store, std::uint64_t seed, std::size_t batch_size = 256) {
  const std::size_t K = model.config().classes;
  nn::Tensor out({indices.size(), K});
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, indices.size() - start);
    nn::Tensor logits = model.classify(assemble_batch(set, indices.subspan(start, n), store, seed), Mode::Eval);
    std::copy_n(logits.data(), n * K, &out.at(start, 0));
  }
  return out;
}

inline std::vector<std::size_t> all_indices(const SampleSet& set) {
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

inline double accuracy(FcnModel& model, const SampleSet& set, const ReferenceStore* store, std::uint64_t seed) {
  if (set.size() == 0) return 0.0;
  auto idx = all_indices(set);
  nn::Tensor logits = predict_logits(model, set, idx, store, seed);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < idx.size(); ++b)
    correct += static_cast<int>(argmax_row(logits, b)) == set.labels[idx[b]];
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

/// Seed for reference draws on held-out data (fixed across epochs).
inline std::uint64_t eval_seed(std::uint64_t seed) { return rng::derive(seed, {0x6576616c}); }

inline TrainResult pretrain(FcnModel& model, const SampleSet& train, const SampleSet& val, const ReferenceStore* store,
                            const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  require(train.size() > 0, ErrorKind::Data, "training set is empty");
  require(train.n_f == model.config().n_f, ErrorKind::Config,
          "training data n_f " + std::to_string(train.n_f) + " does not match model n_f " +
              std::to_string(model.config().n_f));
  require(variant_channels(train.variant) == model.config().in_channels, ErrorKind::Config,
          "model input channels do not match the data variant");
  auto params = model.params();
  nn::AdamW opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  nn::PlateauSchedule sched(cfg.lr, cfg.patience, cfg.factor, cfg.lr_floor);

  TrainResult result;
  std::vector<nn::Tensor> best;
  std::vector<std::size_t> order = all_indices(train);
  bool first_batch = true;

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !result.stopped_on_floor; ++epoch) {
    // Fisher-Yates with a per-epoch stream.
    std::uint64_t state = rng::derive(cfg.seed, {0x73687566, epoch});
    for (std::size_t i = order.size(); i > 1; --i) {
      state = rng::splitmix64(state);
      std::swap(order[i - 1], order[rng::index_below(state, i)]);
    }
    const std::uint64_t ref_seed = rng::derive(cfg.seed, {0x65706f63, epoch});

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> batch(order.data() + start, n);
      // Batchnorm needs more than one value per channel; a trailing singleton batch is skipped.
      if (n < 2 && order.size() >= 2) continue;
      nn::Tensor x = assemble_batch(train, batch, store, ref_seed);
      std::vector<int> labels(n);
      for (std::size_t b = 0; b < n; ++b) labels[b] = train.labels[batch[b]];

      model.zero_grad();
      nn::Tensor logits = model.classify(x, Mode::Train);
      auto ce = nn::ops::softmax_cross_entropy(logits, labels);
      if (first_batch) {
        result.initial_loss = ce.loss;
        first_batch = false;
      }
      model.backward(ce.grad);
      opt.step();
      opt.set_lr(sched.step(ce.loss));

      loss_sum += ce.loss * static_cast<double>(n);
      for (std::size_t b = 0; b < n; ++b) correct += static_cast<int>(argmax_row(logits, b)) == labels[b];
      seen += n;
      if (sched.should_stop()) {
        result.stopped_on_floor = true;
        break;
      }
    }

    if (cfg.bn_calibration_batches > 0 && order.size() >= 2) {
      const std::size_t per = std::min(cfg.batch_size, order.size());
      const std::size_t count = std::min(cfg.bn_calibration_batches, std::max<std::size_t>(order.size() / per, 1));
      model.recalibrate_batchnorm(count, [&](std::size_t i) {
        return assemble_batch(train, std::span<const std::size_t>(order.data() + i * per, per), store, ref_seed);
      });
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    row.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    row.val_acc = val.size() ? accuracy(model, val, store, eval_seed(cfg.seed)) : row.train_acc;
    row.lr = opt.lr();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.val_acc > result.best_val_acc) {
      result.best_val_acc = row.val_acc;
      result.best_epoch = epoch;
      best.clear();
      for (auto* p : params) best.push_back(p->value);
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

/// Append-only TSV: epoch, train_loss, train_acc, val_acc, lr.
inline void append_training_log(const std::filesystem::path& path, const EpochLog& row) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::Io, "cannot append to " + path.string());
  if (fresh) out << "epoch\ttrain_loss\ttrain_acc\tval_acc\tlr\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.4f\t%.4f\t%.3g\n", row.epoch, row.train_loss, row.train_acc,
                row.val_acc, row.lr);
  out << buf;
}

}  // namespace bdx
