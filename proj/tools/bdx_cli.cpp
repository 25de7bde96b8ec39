// bdx: dataset generation, training, evaluation, diagnosis, alignment
// initialization and inspection.
//
// Exit codes: 0 ok, 2 config, 3 I/O, 4 training data, 5 missing reference.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include "bdx/alignment.hpp"
#include "bdx/eval.hpp"
#include "bdx/synth.hpp"
#include "bdx/templates.hpp"
#include "bdx/train.hpp"

#ifndef BDX_ASSET_DIR
#define BDX_ASSET_DIR "assets"
#endif

namespace {

using namespace bdx;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kData = 4, kMissingRef = 5 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Label: return kConfig;
    case ErrorKind::Io:
    case ErrorKind::Persistence: return kIo;
    case ErrorKind::MissingReference: return kMissingRef;
    case ErrorKind::Data:
    case ErrorKind::Shape:
    case ErrorKind::Bounds:
    case ErrorKind::Degenerate:
    case ErrorKind::RejectedReference: return kData;
  }
  return kData;
}

std::vector<std::string> split_tags(const std::string& s) {
  std::vector<std::string> out;
  for (auto& t : text::split(s, ','))
    if (auto v = text::trim(t); !v.empty()) out.push_back(v);
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::string rigs, out;
  std::size_t segments = 60;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenArgs& a) {
  RigFile rigs = a.rigs.empty() ? default_rig_file() : RigFile::load(a.rigs);
  DatasetContext ds = build_dataset(rigs, a.segments, a.seed, a.out);

  std::map<Split, std::size_t> per_split;
  std::map<int, std::size_t> per_label;
  for (const auto& e : ds.manifest) {
    ++per_split[e.split];
    ++per_label[e.label];
  }
  std::cout << "dataset: " << fs::path(a.out).string() << " (n_f " << ds.dcn.n_f << ", seed " << a.seed << ")\n";
  std::cout << "conditions: " << ds.registry.size() << "\n";
  for (std::uint32_t id = 0; id < ds.registry.size(); ++id)
    std::cout << "  " << id << "\t" << ds.registry.info(id).canonical() << "\treferences " << ds.store.count(id) << "\n";
  std::cout << "labels:";
  for (const auto& [label, n] : per_label) std::cout << " " << label << ":" << n;
  std::cout << "\nsplits: train " << per_split[Split::Train] << ", val " << per_split[Split::Val] << ", test "
            << per_split[Split::Test] << "\nentries: " << ds.manifest.size() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, config, out, variant, log;
  std::uint64_t seed = 0;
  bool quiet = false;
};

struct Recipe {
  FcnConfig model;
  CheckpointMeta meta;
};

Recipe read_recipe(const std::string& path, const LoadedDataset& d, std::uint64_t seed, const std::string& variant_flag) {
  KeyValues kv = path.empty() ? KeyValues{} : KeyValues::load(path);
  Recipe r;
  r.model = FcnConfig::from(kv);
  r.meta.train = TrainConfig::from(kv);
  r.meta.variant = parse_variant(variant_flag.empty() ? kv.str("variant", "full") : variant_flag);
  if (auto unused = kv.unused(); !unused.empty()) fail(ErrorKind::Config, path + ": unknown key '" + unused.front() + "'");
  if (kv.has("n_f") && r.model.n_f != d.dcn.n_f)
    fail(ErrorKind::Config, "config n_f " + std::to_string(r.model.n_f) + " differs from the dataset's " +
                                std::to_string(d.dcn.n_f));
  r.model.n_f = d.dcn.n_f;
  r.model.in_channels = variant_channels(r.meta.variant);
  r.meta.train.seed = seed;
  r.meta.beta = d.dcn.beta;
  r.model.validate();
  return r;
}

int cmd_train(const TrainArgs& a) {
  LoadedDataset d = load_dataset(a.data);
  Recipe r = read_recipe(a.config, d, a.seed, a.variant);
  SampleSet train = load_samples(d.dir, filter_split(d.manifest, Split::Train), d.dcn, r.meta.variant);
  SampleSet val = load_samples(d.dir, filter_split(d.manifest, Split::Val), d.dcn, r.meta.variant);

  FcnModel model(r.model, r.meta.train.seed);
  const fs::path log = a.log.empty() ? fs::path(a.out + ".log.tsv") : fs::path(a.log);
  if (fs::exists(log)) fs::remove(log);
  std::cout << "training " << variant_name(r.meta.variant) << " model: " << model.parameter_count() << " parameters, "
            << train.size() << " train / " << val.size() << " val samples\n";
  TrainResult res;
  try {
    res = pretrain(model, train, val, &d.store, r.meta.train, [&](const EpochLog& e) {
      append_training_log(log, e);
      if (!a.quiet)
        std::printf("epoch %3zu  loss %.4f  train %.4f  val %.4f  lr %.3g\n", e.epoch, e.train_loss, e.train_acc,
                    e.val_acc, e.lr);
      std::fflush(stdout);
    });
  } catch (const Error& e) {
    // A reference gap in the training data is a dataset problem here.
    if (e.kind() == ErrorKind::MissingReference) fail(ErrorKind::Data, e.what());
    throw;
  }

  auto tensors = model.named_tensors();
  for (auto& t : r.meta.to_tensors()) tensors.push_back(std::move(t));
  nn::save_checkpoint(a.out, tensors);
  const auto bytes = io::read_file(a.out);
  std::printf("best validation accuracy: %.4f (epoch %zu)\n", res.best_val_acc, res.best_epoch);
  std::printf("checkpoint: %s (fnv1a %s)\n", a.out.c_str(), io::hex64(io::fnv1a(bytes)).c_str());
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string data, ckpt, holdout, ablation, dump, confusion, report;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_eval(const EvalArgs& a) {
  LoadedDataset d = load_dataset(a.data);
  auto tensors = nn::load_checkpoint(a.ckpt);
  CheckpointMeta meta = CheckpointMeta::from_tensors(tensors);
  FcnConfig model_cfg = FcnConfig::from_tensors(tensors);
  require(model_cfg.n_f == d.dcn.n_f, ErrorKind::Config,
          "checkpoint n_f " + std::to_string(model_cfg.n_f) + " differs from the dataset's " + std::to_string(d.dcn.n_f));
  if (a.seed_given) meta.train.seed = a.seed;

  const auto holdout = split_tags(a.holdout);
  const bool retrain = !holdout.empty() || !a.ablation.empty();
  Variant variant = a.ablation.empty() ? meta.variant : parse_variant(a.ablation);

  std::string label = variant_name(variant);
  if (!holdout.empty()) label += " holdout=" + a.holdout;

  EvalResult result;
  std::optional<FcnModel> model;
  SampleSet test;
  if (retrain) {
    HoldoutSplit split = holdout_subset(d.manifest, holdout);
    Manifest test_entries = holdout.empty() ? filter_split(split.manifest, Split::Test) : split.zero_shot;
    SampleSet train = load_samples(d.dir, filter_split(split.manifest, Split::Train), d.dcn, variant);
    SampleSet val = load_samples(d.dir, filter_split(split.manifest, Split::Val), d.dcn, variant);
    require(train.size() > 0, ErrorKind::Data, "no training entries left after the holdout");
    test = load_samples(d.dir, test_entries, d.dcn, variant);
    model_cfg.in_channels = variant_channels(variant);
    model.emplace(model_cfg, meta.train.seed);
    std::cout << "retraining " << label << " on " << train.size() << " samples\n";
    auto res = pretrain(*model, train, val, &d.store, meta.train);
    std::printf("best validation accuracy: %.4f (epoch %zu)\n", res.best_val_acc, res.best_epoch);
  } else {
    model.emplace(FcnModel::from_tensors(tensors));
    test = load_samples(d.dir, filter_split(d.manifest, Split::Test), d.dcn, variant);
  }
  require(test.size() > 0, ErrorKind::Data, "the evaluation split is empty");
  result = evaluate(*model, test, &d.store, eval_seed(meta.train.seed));
  if (result.missing_reference)
    std::cerr << "warning: " << result.missing_reference << " samples have no fault-free reference and were excluded\n";
  std::cout << report_text(result, meta.train.seed, label);

  const fs::path confusion = a.confusion.empty() ? fs::path(a.ckpt + ".confusion.tsv") : fs::path(a.confusion);
  io::write_text(confusion, result.confusion.tsv());
  std::cout << "confusion matrix: " << confusion.string() << "\n";
  if (!a.report.empty()) io::write_text(a.report, report_tsv(result, meta.train.seed, label));
  if (!a.dump.empty()) {
    dump_features(*model, test, &d.store, eval_seed(meta.train.seed), a.dump);
    std::cout << "features: " << a.dump << " (" << test.size() << " rows)\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
  std::string signal, store, ckpt, task, templates, descriptions;
  std::uint32_t condition = 0;
  std::uint64_t seed = 0;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  require(a.task.size() == 1 && a.task[0] >= 'A' && a.task[0] <= 'D', ErrorKind::Config, "--task must be A, B, C or D");
  const char task = a.task[0];
  ResponseTemplateSet templates =
      ResponseTemplateSet::load(a.templates.empty() ? fs::path(BDX_ASSET_DIR) / "templates.tsv" : fs::path(a.templates));
  FaultDescriptionSet descriptions =
      a.descriptions.empty() ? FaultDescriptionSet::defaults() : FaultDescriptionSet::load(a.descriptions);

  auto tensors = nn::load_checkpoint(a.ckpt);
  CheckpointMeta meta = CheckpointMeta::from_tensors(tensors);
  FcnModel model = FcnModel::from_tensors(tensors);
  require(descriptions.size() == model.config().classes, ErrorKind::Config, "description count differs from class count");
  LoadedStore store = load_store(a.store);
  if (variant_uses_reference(meta.variant) && !store.store.has(a.condition))
    fail(ErrorKind::MissingReference,
         "no fault-free reference for condition " + std::to_string(a.condition) +
             ". Diagnosis compares the signal against a healthy recording taken under the same working condition; "
             "record fault-free data on this machine and add it to the reference store first.");

  RawSignal raw = read_vseg(a.signal);
  auto segments = segment_all(raw);
  SampleSet set;
  set.n_f = model.config().n_f;
  set.variant = meta.variant;
  for (std::size_t m = 0; m < segments.size(); ++m) {
    if (meta.variant == Variant::TimeDomain) {
      std::vector<double> x = segments[m].samples;
      x.resize(set.n_f, 0.0);
      set.queries.push_back(std::move(x));
    } else {
      set.queries.push_back(dcn(segments[m], DcnConfig{set.n_f, meta.beta}).coefficients);
    }
    set.conditions.push_back(a.condition);
    set.labels.push_back(0);
    set.sources.push_back("");
    set.ids.push_back(a.signal + "#" + std::to_string(m));
  }
  auto idx = all_indices(set);
  nn::Tensor logits = predict_logits(model, set, idx, &store.store, a.seed);
  // Mean class probability over the one-second segments.
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> mean(K, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    auto p = nn::ops::softmax(std::span<const double>(&logits.at(b, 0), K));
    for (std::size_t k = 0; k < K; ++k) mean[k] += p[k] / static_cast<double>(B);
  }
  const int label = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  Response r = respond(templates, descriptions, task, label);
  std::printf("segments: %zu\n", segments.size());
  std::printf("predicted class: %d (%s)\n", label, descriptions.texts[static_cast<std::size_t>(label)].c_str());
  std::printf("confidence: %.4f\n", mean[static_cast<std::size_t>(label)]);
  std::printf("task %c prompt: %s\n", task, r.prompt.c_str());
  std::printf("answer: %s\n", r.answer.c_str());
  return kOk;
}

// ---------------------------------------------------------------- align-init

struct AlignArgs {
  std::string ckpt, descriptions, out;
  std::size_t tau = 8, hidden = 64;
  std::uint64_t seed = 0;
};

int cmd_align_init(const AlignArgs& a) {
  FaultDescriptionSet desc = a.descriptions.empty() ? FaultDescriptionSet::defaults() : FaultDescriptionSet::load(a.descriptions);
  FcnModel model = FcnModel::load(a.ckpt);
  std::vector<std::string> vocab = ToyEmbeddingProvider::default_vocabulary();
  std::set<std::string> known(vocab.begin(), vocab.end());
  for (const auto& t : desc.texts)
    for (auto& w : text::split(text::lower(t), ' '))
      if (!w.empty() && known.insert(w).second) vocab.push_back(w);
  ToyEmbeddingProvider provider(a.hidden, vocab, a.seed);
  AlignmentLayer layer = build_alignment(model, desc, provider, a.tau);
  nn::save_checkpoint(a.out, layer.named_tensors());
  const std::size_t ok = one_hot_identity_count(layer, desc, provider);
  const bool pass = ok == desc.size();
  std::printf("alignment layer: tau %zu, hidden %zu, %zu classes -> %s\n", a.tau, a.hidden, desc.size(), a.out.c_str());
  std::printf("one-hot identity: %s (%zu/%zu classes)\n", pass ? "PASS" : "FAIL", ok, desc.size());
  return pass ? kOk : 1;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string data, sweep = "6000,12000,24000,48000", config;
  std::size_t max_segments = 0;
};

int cmd_inspect(const InspectArgs& a) {
  LoadedDataset d = load_dataset(a.data);
  std::vector<std::size_t> nfs;
  for (const auto& t : split_tags(a.sweep)) nfs.push_back(text::parse_number<std::size_t>(t, ErrorKind::Config, "--nf-sweep"));
  require(!nfs.empty(), ErrorKind::Config, "--nf-sweep is empty");
  FcnConfig base = a.config.empty() ? FcnConfig{} : FcnConfig::from(KeyValues::load(a.config));

  std::vector<std::vector<double>> segments;
  for (const auto& e : d.manifest) {
    if (a.max_segments && segments.size() >= a.max_segments) break;
    segments.push_back(read_vseg(d.dir / e.path).samples);
  }
  auto curve = energy_fraction_curve(segments, nfs);
  std::printf("segments: %zu\n", segments.size());
  std::printf("n_f\tenergy_fraction\tparameters\n");
  for (const auto& p : curve) {
    FcnConfig c = base;
    c.n_f = p.n_f;
    if (a.config.empty()) c.stem_kernel = 0;  // n_f-scaled stem
    std::string params = "-";  // network does not fit this n_f
    try {
      params = std::to_string(FcnModel(c).parameter_count());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Config) throw;
    }
    std::printf("%zu\t%.4f\t%s\n", p.n_f, p.fraction, params.c_str());
  }
  std::printf("reference parameter count at n_f=24000: 974700\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bearing fault diagnosis toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Synthesize a dataset, reference store and manifest");
  g->add_option("--rigs", gen.rigs, "Rig file (key = value); built-in four-rig default when omitted");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--segments", gen.segments, "One-second segments per (rig, label) cell");
  g->add_option("--seed", gen.seed, "Seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Pre-train the FCN");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "Model/training config (key = value)");
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--seed", tr.seed, "Seed");
  t->add_option("--variant", tr.variant, "Input variant (full, no_ref_no_res, no_res, no_ref, time_domain)");
  t->add_option("--log", tr.log, "Training log TSV (default <out>.log.tsv)");
  t->add_flag("--quiet", tr.quiet, "No per-epoch output");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint, or retrain for holdout/ablation runs");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--holdout", ev.holdout, "Comma-separated source tags held out of training");
  e->add_option("--ablation", ev.ablation, "Variant to retrain and evaluate");
  e->add_option("--dump-features", ev.dump, "Write encoder features of the evaluated samples");
  e->add_option("--confusion", ev.confusion, "Confusion matrix TSV (default <ckpt>.confusion.tsv)");
  e->add_option("--report", ev.report, "Metrics TSV");
  auto* eseed = e->add_option("--seed", ev.seed, "Seed for retraining and reference draws");

  DiagnoseArgs dg;
  auto* dsub = app.add_subcommand("diagnose", "Diagnose one recording against its condition's reference");
  dsub->add_option("--signal", dg.signal, "VSEG recording (>= 1 s)")->required();
  dsub->add_option("--condition", dg.condition, "Condition id")->required();
  dsub->add_option("--store", dg.store, "Reference store directory")->required();
  dsub->add_option("--ckpt", dg.ckpt, "Checkpoint")->required();
  dsub->add_option("--task", dg.task, "A anomaly, B diagnosis, C maintenance, D risk")->required();
  dsub->add_option("--templates", dg.templates, "Templates TSV");
  dsub->add_option("--descriptions", dg.descriptions, "Fault descriptions, one per line");
  dsub->add_option("--seed", dg.seed, "Reference draw seed");

  AlignArgs al;
  auto* asub = app.add_subcommand("align-init", "Initialize the alignment layer from a checkpoint");
  asub->add_option("--ckpt", al.ckpt, "FCN checkpoint")->required();
  asub->add_option("--descriptions", al.descriptions, "Fault descriptions, one per line");
  asub->add_option("--tau", al.tau, "Token length")->check(CLI::PositiveNumber);
  asub->add_option("--hidden", al.hidden, "Embedding width")->check(CLI::PositiveNumber);
  asub->add_option("--seed", al.seed, "Embedding table seed");
  asub->add_option("--out", al.out, "Output weights")->required();

  InspectArgs in;
  auto* isub = app.add_subcommand("inspect", "Energy fraction and parameter count per n_f");
  isub->add_option("--data", in.data, "Dataset directory")->required();
  isub->add_option("--nf-sweep", in.sweep, "Comma-separated n_f values");
  isub->add_option("--config", in.config, "Model config (key = value)");
  isub->add_option("--max-segments", in.max_segments, "Use at most this many segments (0: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kConfig;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) {
      ev.seed_given = eseed->count() > 0;
      return cmd_eval(ev);
    }
    if (*dsub) return cmd_diagnose(dg);
    if (*asub) return cmd_align_init(al);
    if (*isub) return cmd_inspect(in);
  } catch (const bdx::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kIo;
  }
  return kOk;
}
