#pragma once

// Metrics and experiment harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bdx/dataset.hpp"
#include "bdx/fcn.hpp"
#include "bdx/synth.hpp"
#include "bdx/train.hpp"

namespace bdx {

/// Rows are true labels, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = kFaultClasses) : classes_(classes), counts_(classes * classes, 0) {}

  void add(int truth, int predicted) {
    require(truth >= 0 && predicted >= 0 && static_cast<std::size_t>(truth) < classes_ &&
                static_cast<std::size_t>(predicted) < classes_,
            ErrorKind::Label, "confusion entry out of range");
    ++counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)];
  }

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::size_t classes() const { return classes_; }

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t k = 0; k < classes_; ++k) t += at(k, k);
    return t;
  }

  std::size_t row_sum(std::size_t truth) const {
    std::size_t t = 0;
    for (std::size_t p = 0; p < classes_; ++p) t += at(truth, p);
    return t;
  }

  double accuracy() const { return total() ? static_cast<double>(trace()) / static_cast<double>(total()) : 0.0; }

  /// classes x classes grid of counts, tab-separated.
  std::string tsv() const {
    std::ostringstream out;
    for (std::size_t t = 0; t < classes_; ++t) {
      for (std::size_t p = 0; p < classes_; ++p) out << (p ? "\t" : "") << at(t, p);
      out << '\n';
    }
    return out.str();
  }

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

struct AlarmRates {
  double false_alarm = 0.0;   // healthy flagged faulty / healthy
  double missed_alarm = 0.0;  // faulty flagged healthy / faulty

  static AlarmRates from(const ConfusionMatrix& cm) {
    std::size_t healthy = cm.row_sum(0), flagged = healthy - cm.at(0, 0);
    std::size_t faulty = 0, missed = 0;
    for (std::size_t t = 1; t < cm.classes(); ++t) {
      faulty += cm.row_sum(t);
      missed += cm.at(t, 0);
    }
    AlarmRates r;
    r.false_alarm = healthy ? static_cast<double>(flagged) / static_cast<double>(healthy) : 0.0;
    r.missed_alarm = faulty ? static_cast<double>(missed) / static_cast<double>(faulty) : 0.0;
    return r;
  }
};

struct SourceScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  AlarmRates alarms;
  std::size_t evaluated = 0;
  std::size_t missing_reference = 0;  // samples excluded because their condition has no reference
  std::vector<std::string> missing_ids;
  std::map<std::string, SourceScore> per_source;
};

/// Classifies every sample; samples whose condition has no reference are counted and excluded.
inline EvalResult evaluate(FcnModel& model, const SampleSet& set, const ReferenceStore* store, std::uint64_t seed) {
  EvalResult r;
  r.confusion = ConfusionMatrix(model.config().classes);
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (variant_uses_reference(set.variant) && (store == nullptr || !store->has(set.conditions[i]))) {
      ++r.missing_reference;
      r.missing_ids.push_back(set.ids[i]);
      continue;
    }
    usable.push_back(i);
  }
  nn::Tensor logits = predict_logits(model, set, usable, store, seed);
  for (std::size_t b = 0; b < usable.size(); ++b) {
    const std::size_t i = usable[b];
    const int pred = static_cast<int>(argmax_row(logits, b));
    r.confusion.add(set.labels[i], pred);
    auto& s = r.per_source[set.sources[i]];
    s.correct += pred == set.labels[i];
    ++s.total;
  }
  r.evaluated = usable.size();
  r.accuracy = r.confusion.accuracy();
  r.alarms = AlarmRates::from(r.confusion);
  return r;
}

/// ||DCT(x)[0, n_f)||^2 / ||DCT(x)||^2, 1 when n_f covers the whole spectrum.
inline double energy_fraction(std::span<const double> segment, std::size_t n_f) {
  std::vector<double> c = dct(segment);
  double total = 0.0, head = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double e = c[k] * c[k];
    total += e;
    if (k < n_f) head += e;
  }
  require(total > 0.0, ErrorKind::Degenerate, "energy fraction of an all-zero segment");
  if (n_f >= c.size()) return 1.0;
  return std::min(head / total, 1.0);
}

struct EnergyPoint {
  std::size_t n_f = 0;
  double fraction = 0.0;
};

/// Mean energy fraction over segments for each n_f.
inline std::vector<EnergyPoint> energy_fraction_curve(const std::vector<std::vector<double>>& segments,
                                                      const std::vector<std::size_t>& n_fs) {
  require(!segments.empty(), ErrorKind::Degenerate, "no segments for the energy-fraction curve");
  std::vector<EnergyPoint> out;
  for (auto n : n_fs) out.push_back({n, 0.0});
  for (const auto& seg : segments) {
    std::vector<double> c = dct(seg);
    // Prefix sums make every n_f a lookup.
    std::vector<double> prefix(c.size() + 1, 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) prefix[k + 1] = prefix[k] + c[k] * c[k];
    const double total = prefix.back();
    require(total > 0.0, ErrorKind::Degenerate, "energy fraction of an all-zero segment");
    for (auto& p : out) p.fraction += p.n_f >= c.size() ? 1.0 : std::min(prefix[p.n_f] / total, 1.0);
  }
  for (auto& p : out) p.fraction /= static_cast<double>(segments.size());
  return out;
}

struct AblationResult {
  Variant variant = Variant::Full;
  TrainResult training;
  EvalResult test;
};

/// Trains the variant on the (optionally source-held-out) training split and evaluates on
/// the test split, or on the excluded sources when `holdout` is non-empty.
inline AblationResult ablation_run(const LoadedDataset& data, Variant variant, FcnConfig model_cfg,
                                   const TrainConfig& train_cfg, const std::vector<std::string>& holdout = {},
                                   const std::function<void(const EpochLog&)>& on_epoch = {}) {
  HoldoutSplit split = holdout_subset(data.manifest, holdout);
  Manifest test_entries = holdout.empty() ? filter_split(split.manifest, Split::Test) : split.zero_shot;
  Manifest train_entries = filter_split(split.manifest, Split::Train);
  Manifest val_entries = filter_split(split.manifest, Split::Val);
  require(!train_entries.empty(), ErrorKind::Data, "no training entries left after the holdout");

  SampleSet train = load_samples(data.dir, train_entries, data.dcn, variant);
  SampleSet val = load_samples(data.dir, val_entries, data.dcn, variant);
  SampleSet test = load_samples(data.dir, test_entries, data.dcn, variant);

  model_cfg.n_f = data.dcn.n_f;
  model_cfg.in_channels = variant_channels(variant);
  FcnModel model(model_cfg, train_cfg.seed);
  AblationResult r;
  r.variant = variant;
  r.training = pretrain(model, train, val, &data.store, train_cfg, on_epoch);
  r.test = evaluate(model, test, &data.store, eval_seed(train_cfg.seed));
  return r;
}

/// One row per sample: id, label, condition, source, then the encoder features.
inline void dump_features(FcnModel& model, const SampleSet& set, const ReferenceStore* store, std::uint64_t seed,
                          const std::filesystem::path& path, std::size_t batch_size = 256) {
  std::ostringstream out;
  out << "sample_id\tlabel\tcondition_id\tsource_tag";
  for (std::size_t j = 0; j < model.feature_width(); ++j) out << "\tf" << j;
  out << '\n';
  auto idx = all_indices(set);
  char buf[32];
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - start);
    std::span<const std::size_t> batch(idx.data() + start, n);
    nn::Tensor f = model.encode(assemble_batch(set, batch, store, seed), Mode::Eval);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t i = batch[b];
      out << set.ids[i] << '\t' << set.labels[i] << '\t' << set.conditions[i] << '\t' << set.sources[i];
      for (std::size_t j = 0; j < f.dim(1); ++j) {
        std::snprintf(buf, sizeof buf, "\t%.9g", f.at(b, j));
        out << buf;
      }
      out << '\n';
    }
  }
  io::write_text(path, out.str());
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// metric<TAB>value rows under a seed header.
inline std::string report_tsv(const EvalResult& r, std::uint64_t seed, const std::string& label) {
  std::ostringstream out;
  out << "# seed\t" << seed << "\n# run\t" << label << "\nmetric\tvalue\n";
  out << "accuracy\t" << fixed4(r.accuracy) << "\nfalse_alarm\t" << fixed4(r.alarms.false_alarm) << "\nmissed_alarm\t"
      << fixed4(r.alarms.missed_alarm) << "\nevaluated\t" << r.evaluated << "\nmissing_reference\t"
      << r.missing_reference << '\n';
  for (const auto& [src, s] : r.per_source) out << "accuracy[" << src << "]\t" << fixed4(s.accuracy()) << '\n';
  return out.str();
}

inline std::string report_text(const EvalResult& r, std::uint64_t seed, const std::string& label) {
  std::ostringstream out;
  out << "run: " << label << " (seed " << seed << ")\n";
  out << "accuracy:      " << fixed4(r.accuracy) << " (" << r.confusion.trace() << "/" << r.evaluated << ")\n";
  out << "false alarm:   " << fixed4(r.alarms.false_alarm) << "\n";
  out << "missed alarm:  " << fixed4(r.alarms.missed_alarm) << "\n";
  if (r.missing_reference) out << "warning: " << r.missing_reference << " samples skipped, no fault-free reference\n";
  for (const auto& [src, s] : r.per_source)
    out << "  " << src << ": " << fixed4(s.accuracy()) << " (" << s.correct << "/" << s.total << ")\n";
  return out.str();
}

}  // namespace bdx
