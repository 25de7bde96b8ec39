#pragma once

// Synthetic bearing vibration oracle and dataset builder.
//
// A recording is sensor_gain * (shaft harmonics + periodic decaying-resonance
// impulses at the fault's characteristic rate) + white noise. Inner-race
// impulses are amplitude-modulated at the shaft rate.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bdx/config.hpp"
#include "bdx/dataset.hpp"
#include "bdx/fcn.hpp"
#include "bdx/reference_store.hpp"
#include "bdx/rng.hpp"
#include "bdx/signal.hpp"

namespace bdx {

struct RigSpec {
  std::string source_tag = "rig";
  double shaft_rate_hz = 25.0;
  double load_scale = 1.0;
  double sensor_gain = 1.0;
  std::uint32_t sample_rate_hz = 12000;
  double noise_sigma = 0.05;
  double resonance_hz = 2000.0;
  double resonance_decay = 0.002;  // seconds
  std::string load = "0";
  std::string sensor = "accel";
  // Impulses per shaft revolution.
  double outer_multiplier = 3.58;
  double inner_multiplier = 5.42;
  double ball_multiplier = 4.71;

  void validate() const {
    const std::string who = "rig '" + source_tag + "': ";
    require(!source_tag.empty() && source_tag.find_first_of("\t\n,/") == std::string::npos, ErrorKind::Config,
            who + "source tag must be non-empty without tabs, commas or slashes");
    require(shaft_rate_hz > 0, ErrorKind::Config, who + "shaft_rate_hz must be > 0");
    require(load_scale >= 0, ErrorKind::Config, who + "load_scale must be >= 0");
    require(sensor_gain > 0, ErrorKind::Config, who + "sensor_gain must be > 0");
    require(sample_rate_hz >= 1, ErrorKind::Config, who + "sample_rate_hz must be >= 1");
    require(noise_sigma >= 0, ErrorKind::Config, who + "noise_sigma must be >= 0");
    require(resonance_hz > 0 && resonance_decay > 0, ErrorKind::Config, who + "resonance must be positive");
    require(static_cast<double>(sample_rate_hz) > 2.0 * resonance_hz, ErrorKind::Config,
            who + "sample rate must exceed twice the resonance frequency");
    require(outer_multiplier > 0 && inner_multiplier > 0 && ball_multiplier > 0, ErrorKind::Config,
            who + "characteristic multipliers must be > 0");
  }

  ConditionInfo condition() const { return {shaft_rate_hz * 60.0, load, sensor, source_tag}; }

  double multiplier(FaultLocation loc) const {
    switch (loc) {
      case FaultLocation::Outer: return outer_multiplier;
      case FaultLocation::Inner: return inner_multiplier;
      case FaultLocation::Ball: return ball_multiplier;
      case FaultLocation::None: return 0.0;
    }
    return 0.0;
  }
};

struct SeverityAmplitudes {
  double minor = 0.5;
  double moderate = 1.0;
  double severe = 2.0;

  double of(FaultSeverity s) const {
    switch (s) {
      case FaultSeverity::Minor: return minor;
      case FaultSeverity::Moderate: return moderate;
      case FaultSeverity::Severe: return severe;
      case FaultSeverity::None: return 0.0;
    }
    return 0.0;
  }
};

struct FaultSpec {
  int label = 0;
  double characteristic_multiplier = 0.0;
  double severity_amp = 0.0;

  static FaultSpec for_label(int label, const RigSpec& rig, const SeverityAmplitudes& amps = {}) {
    require(label >= 0 && label < kFaultClasses, ErrorKind::Label,
            "label " + std::to_string(label) + " outside [0, " + std::to_string(kFaultClasses) + ")");
    if (label == 0) return {};
    return {label, rig.multiplier(fault_location(label)), amps.of(fault_severity(label))};
  }
};

/// Deterministic given (rig, fault, duration, seed).
inline RawSignal synthesize(const RigSpec& rig, const FaultSpec& fault, double duration_s, std::uint64_t seed) {
  rig.validate();
  require(duration_s >= 1.0, ErrorKind::Config, "duration must be >= 1 s");
  require(fault.label >= 0 && fault.label < kFaultClasses, ErrorKind::Label, "fault label out of range");
  require(fault.label == 0 || (fault.characteristic_multiplier > 0 && fault.severity_amp >= 0), ErrorKind::Config,
          "faulty spec needs a positive characteristic multiplier");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double fs = rig.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  std::mt19937_64 gen(rng::derive(seed, {0x73796e}));
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  const double phi1 = phase(gen), phi2 = phase(gen);

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    x[i] = rig.load_scale *
           (std::sin(two_pi * rig.shaft_rate_hz * t + phi1) + 0.5 * std::sin(two_pi * 2.0 * rig.shaft_rate_hz * t + phi2));
  }

  if (fault.label != 0) {
    const bool inner = fault_location(fault.label) == FaultLocation::Inner;
    const double period = 1.0 / (fault.characteristic_multiplier * rig.shaft_rate_hz);
    const double span = 10.0 * rig.resonance_decay;
    std::normal_distribution<double> slip(0.0, 0.005 * period);
    const double mod_phase = phase(gen);
    for (double base = phase(gen) / two_pi * period; base < duration_s; base += period) {
      const double tj = base + slip(gen);
      double amp = fault.severity_amp;
      if (inner) amp *= 0.6 + 0.4 * std::cos(two_pi * rig.shaft_rate_hz * tj + mod_phase);
      auto first = static_cast<std::ptrdiff_t>(std::ceil(tj * fs));
      auto last = static_cast<std::ptrdiff_t>(std::floor((tj + span) * fs));
      for (auto i = std::max<std::ptrdiff_t>(first, 0); i <= last && i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double dt = static_cast<double>(i) / fs - tj;
        x[static_cast<std::size_t>(i)] += amp * std::exp(-dt / rig.resonance_decay) * std::sin(two_pi * rig.resonance_hz * dt);
      }
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& v : x) v = rig.sensor_gain * v + rig.noise_sigma * noise(gen);
  return RawSignal{std::move(x), rig.sample_rate_hz, 0};
}

/// Dataset-wide generation settings: the rig list, DCN settings used for the reference store, severity amplitudes.
struct RigFile {
  std::vector<RigSpec> rigs;
  DcnConfig dcn;
  SeverityAmplitudes severity;

  /// Flat key = value format:
  ///   rigs = rigA,rigB        n_f = 6000        beta = 0.01
  ///   severity_minor / severity_moderate / severity_severe
  ///   <rig>.<field> for every RigSpec field (shaft_rate_hz, sample_rate_hz, load, sensor, ...)
  static RigFile from(const KeyValues& kv) {
    RigFile f;
    f.dcn.n_f = kv.get<std::size_t>("n_f", f.dcn.n_f);
    f.dcn.beta = kv.get<double>("beta", f.dcn.beta);
    f.severity.minor = kv.get<double>("severity_minor", f.severity.minor);
    f.severity.moderate = kv.get<double>("severity_moderate", f.severity.moderate);
    f.severity.severe = kv.get<double>("severity_severe", f.severity.severe);
    auto names = text::split(kv.str("rigs", ""), ',');
    for (auto& raw : names) {
      auto name = text::trim(raw);
      if (name.empty()) continue;
      RigSpec r;
      r.source_tag = name;
      auto key = [&](const char* field) { return name + "." + field; };
      r.shaft_rate_hz = kv.get<double>(key("shaft_rate_hz"), r.shaft_rate_hz);
      r.load_scale = kv.get<double>(key("load_scale"), r.load_scale);
      r.sensor_gain = kv.get<double>(key("sensor_gain"), r.sensor_gain);
      r.sample_rate_hz = kv.get<std::uint32_t>(key("sample_rate_hz"), r.sample_rate_hz);
      r.noise_sigma = kv.get<double>(key("noise_sigma"), r.noise_sigma);
      r.resonance_hz = kv.get<double>(key("resonance_hz"), r.resonance_hz);
      r.resonance_decay = kv.get<double>(key("resonance_decay"), r.resonance_decay);
      r.load = kv.str(key("load"), r.load);
      r.sensor = kv.str(key("sensor"), r.sensor);
      r.outer_multiplier = kv.get<double>(key("outer_multiplier"), r.outer_multiplier);
      r.inner_multiplier = kv.get<double>(key("inner_multiplier"), r.inner_multiplier);
      r.ball_multiplier = kv.get<double>(key("ball_multiplier"), r.ball_multiplier);
      r.validate();
      f.rigs.push_back(std::move(r));
    }
    require(!f.rigs.empty(), ErrorKind::Config, "rig file lists no rigs");
    std::set<std::string> seen;
    for (const auto& r : f.rigs)
      require(seen.insert(r.source_tag).second, ErrorKind::Config, "duplicate rig '" + r.source_tag + "'");
    auto unused = kv.unused();
    if (!unused.empty()) fail(ErrorKind::Config, "unknown rig file key '" + unused.front() + "'");
    f.dcn.validate();
    return f;
  }

  static RigFile load(const std::filesystem::path& path) { return from(KeyValues::load(path)); }
};

/// Four rigs spanning sampling rates, shaft speeds, gains and resonances.
inline RigFile default_rig_file() {
  RigFile f;
  f.dcn.n_f = 6000;
  auto rig = [](std::string tag, double shaft, double load, double gain, std::uint32_t fs, double noise, double res,
                std::string load_tag, std::string sensor) {
    RigSpec r;
    r.source_tag = std::move(tag);
    r.shaft_rate_hz = shaft;
    r.load_scale = load;
    r.sensor_gain = gain;
    r.sample_rate_hz = fs;
    r.noise_sigma = noise;
    r.resonance_hz = res;
    r.load = std::move(load_tag);
    r.sensor = std::move(sensor);
    return r;
  };
  f.rigs = {rig("rigA", 29.95, 1.0, 1.0, 12000, 0.05, 2200.0, "1hp", "drive_end"),
            rig("rigB", 25.0, 0.9, 2.5, 48000, 0.10, 1800.0, "2kN", "housing"),
            rig("rigC", 20.0, 1.1, 0.5, 25600, 0.03, 2500.0, "3kN", "vertical"),
            rig("rigD", 24.0, 1.0, 1.5, 16000, 0.08, 2000.0, "1kN", "horizontal")};
  return f;
}

inline std::string format_rig_file(const RigFile& f) {
  std::ostringstream out;
  out << "n_f = " << f.dcn.n_f << "\nbeta = " << f.dcn.beta << "\n";
  out << "severity_minor = " << f.severity.minor << "\nseverity_moderate = " << f.severity.moderate
      << "\nseverity_severe = " << f.severity.severe << "\nrigs = ";
  for (std::size_t i = 0; i < f.rigs.size(); ++i) out << (i ? "," : "") << f.rigs[i].source_tag;
  out << "\n";
  for (const auto& r : f.rigs) {
    const auto& n = r.source_tag;
    out << n << ".shaft_rate_hz = " << r.shaft_rate_hz << "\n"
        << n << ".load_scale = " << r.load_scale << "\n"
        << n << ".sensor_gain = " << r.sensor_gain << "\n"
        << n << ".sample_rate_hz = " << r.sample_rate_hz << "\n"
        << n << ".noise_sigma = " << r.noise_sigma << "\n"
        << n << ".resonance_hz = " << r.resonance_hz << "\n"
        << n << ".resonance_decay = " << r.resonance_decay << "\n"
        << n << ".load = " << r.load << "\n"
        << n << ".sensor = " << r.sensor << "\n";
  }
  return out.str();
}

/// Per-(condition, label) stratum sizes for the 7:2:1 split.
struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

inline SplitCounts stratified_counts(std::size_t n) {
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  c.val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  if (n >= 1 && c.train == 0) c.train = 1;
  if (c.train + c.val > n) c.val = n - c.train;
  c.test = n - c.train - c.val;
  return c;
}

/// Split tags for `n` segments of one stratum, shuffled deterministically.
inline std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed) {
  const SplitCounts c = stratified_counts(n);
  std::vector<Split> tags;
  tags.insert(tags.end(), c.train, Split::Train);
  tags.insert(tags.end(), c.val, Split::Val);
  tags.insert(tags.end(), c.test, Split::Test);
  std::uint64_t state = seed;
  for (std::size_t i = n; i > 1; --i) {
    state = rng::splitmix64(state);
    std::swap(tags[i - 1], tags[rng::index_below(state, i)]);
  }
  return tags;
}

/// Mutable dataset under construction: directory, condition registry, reference store.
struct DatasetContext {
  std::filesystem::path dir;
  DcnConfig dcn;
  std::uint64_t seed = 0;
  ConditionRegistry registry;
  ReferenceStore store;
  Manifest manifest;

  /// Segments a recording, writes one VSEG per segment, assigns stratified splits,
  /// and stores the DCN of fault-free training segments as references.
  Manifest add_recording(const RawSignal& raw, const ConditionInfo& info, int label, const std::string& stem) {
    require(label >= 0 && label < kFaultClasses, ErrorKind::Label,
            "label " + std::to_string(label) + " outside [0, " + std::to_string(kFaultClasses) + ")");
    const std::uint32_t cid = registry.register_condition(info);
    auto segments = segment_all(raw);
    auto splits = assign_splits(segments.size(), rng::derive(seed, {0x73706c, cid, static_cast<std::uint64_t>(label),
                                                                    io::fnv1a(std::span(stem.data(), stem.size()))}));
    Manifest added;
    for (std::size_t m = 0; m < segments.size(); ++m) {
      // Round through f32 so in-memory references match what is re-read from disk.
      std::vector<double> samples = segments[m].samples;
      for (auto& v : samples) v = static_cast<double>(static_cast<float>(v));
      ManifestEntry e;
      e.path = "segments/" + stem + "/" + std::to_string(m) + ".vseg";
      e.label = label;
      e.condition_id = cid;
      e.source_tag = info.source;
      e.split = splits[m];
      write_vseg(dir / e.path, raw.sample_rate_hz, samples);
      if (label == 0 && e.split == Split::Train) store.insert_reference(cid, bdx::dcn(samples, dcn), 0, Split::Train);
      added.push_back(e);
    }
    manifest.insert(manifest.end(), added.begin(), added.end());
    return added;
  }

  /// manifest.tsv, dataset.conf (DCN settings) and store/.
  void save() const {
    write_manifest(dir / "manifest.tsv", manifest);
    std::ostringstream conf;
    conf << "n_f = " << dcn.n_f << "\nbeta = " << dcn.beta << "\n";
    io::write_text(dir / "dataset.conf", conf.str());
    save_store(store, registry, dir / "store");
  }
};

/// Synthesizes `segments_per_cell` seconds for every (rig, label) cell.
inline DatasetContext build_dataset(const RigFile& rigs, std::size_t segments_per_cell, std::uint64_t seed,
                                    const std::filesystem::path& out_dir) {
  require(!rigs.rigs.empty(), ErrorKind::Config, "empty rig configuration");
  require(segments_per_cell >= 1, ErrorKind::Config, "segments per cell must be >= 1");
  DatasetContext ctx;
  ctx.dir = out_dir;
  ctx.dcn = rigs.dcn;
  ctx.seed = seed;
  std::filesystem::create_directories(out_dir);
  if (std::filesystem::exists(out_dir / "segments")) std::filesystem::remove_all(out_dir / "segments");
  for (std::size_t r = 0; r < rigs.rigs.size(); ++r) {
    const RigSpec& rig = rigs.rigs[r];
    for (int label = 0; label < kFaultClasses; ++label) {
      RawSignal raw = synthesize(rig, FaultSpec::for_label(label, rig, rigs.severity),
                                 static_cast<double>(segments_per_cell), rng::derive(seed, {r, static_cast<std::uint64_t>(label)}));
      ctx.add_recording(raw, rig.condition(), label, rig.source_tag + "/" + std::to_string(label));
    }
  }
  ctx.save();
  return ctx;
}

/// Reads dataset.conf, manifest.tsv and store/ from a generated dataset directory.
struct LoadedDataset {
  std::filesystem::path dir;
  DcnConfig dcn;
  Manifest manifest;
  ConditionRegistry registry;
  ReferenceStore store;
};

inline LoadedDataset load_dataset(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::Io, "data directory not found: " + dir.string());
  require(std::filesystem::is_regular_file(dir / "manifest.tsv"), ErrorKind::Io, "missing " + (dir / "manifest.tsv").string());
  LoadedDataset d;
  d.dir = dir;
  auto kv = KeyValues::load(dir / "dataset.conf");
  d.dcn.n_f = kv.get<std::size_t>("n_f", d.dcn.n_f);
  d.dcn.beta = kv.get<double>("beta", d.dcn.beta);
  d.manifest = read_manifest(dir / "manifest.tsv");
  auto loaded = load_store(dir / "store");
  d.registry = std::move(loaded.registry);
  d.store = std::move(loaded.store);
  return d;
}

/// Ingests a real recording stored as VSEG into an open dataset.
inline Manifest import_recording(DatasetContext& ctx, const std::filesystem::path& vseg, const ConditionInfo& info,
                                 int label) {
  require(label >= 0 && label < kFaultClasses, ErrorKind::Label,
          "label " + std::to_string(label) + " outside [0, " + std::to_string(kFaultClasses) + ")");
  RawSignal raw = read_vseg(vseg);
  return ctx.add_recording(raw, info, label, "imported/" + text::lower(info.source) + "/" + vseg.stem().string());
}

struct HoldoutSplit {
  Manifest manifest;   // excluded sources re-tagged as test; others unchanged
  Manifest zero_shot;  // exactly the excluded-source entries
};

/// Leave-source-out: excluded sources never reach train/val.
inline HoldoutSplit holdout_subset(const Manifest& m, const std::vector<std::string>& excluded) {
  std::set<std::string> tags;
  for (const auto& e : m) tags.insert(e.source_tag);
  std::set<std::string> drop;
  for (const auto& t : excluded) {
    require(tags.count(t) != 0, ErrorKind::Config, "unknown source tag '" + t + "'");
    drop.insert(t);
  }
  HoldoutSplit out;
  for (auto e : m) {
    if (drop.count(e.source_tag)) {
      e.split = Split::Test;
      out.zero_shot.push_back(e);
    }
    out.manifest.push_back(std::move(e));
  }
  return out;
}

/// Envelope-spectrum location statistic: band-pass around the rig resonance,
/// square, and pick the fault location whose characteristic rate carries the
/// most envelope energy. Used to check the oracle is separable.
inline FaultLocation envelope_location(std::span<const double> segment, const RigSpec& rig) {
  const std::size_t n = segment.size();
  std::vector<double> spec = dct(segment);
  const double half_band = 3.0 / (std::numbers::pi * rig.resonance_decay);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = static_cast<double>(k) / 2.0 * static_cast<double>(rig.sample_rate_hz) / static_cast<double>(n);
    if (std::abs(f - rig.resonance_hz) > half_band) spec[k] = 0.0;
  }
  std::vector<double> band = idct(spec);
  double mean = 0.0;
  for (auto& v : band) mean += (v = v * v);
  mean /= static_cast<double>(n);
  for (auto& v : band) v -= mean;
  std::vector<double> env = dct(band);
  auto energy_at = [&](double hz) {
    // Sum of the first three harmonics, +/- 2 bins each.
    double e = 0.0;
    const double bins_per_hz = 2.0 * static_cast<double>(n) / static_cast<double>(rig.sample_rate_hz);
    for (int h = 1; h <= 3; ++h) {
      const auto c = static_cast<std::ptrdiff_t>(std::llround(h * hz * bins_per_hz));
      for (std::ptrdiff_t k = c - 2; k <= c + 2; ++k)
        if (k >= 0 && k < static_cast<std::ptrdiff_t>(n)) e += env[static_cast<std::size_t>(k)] * env[static_cast<std::size_t>(k)];
    }
    return e;
  };
  FaultLocation best = FaultLocation::Inner;
  double best_e = -1.0;
  for (auto loc : {FaultLocation::Inner, FaultLocation::Ball, FaultLocation::Outer}) {
    double e = energy_at(rig.multiplier(loc) * rig.shaft_rate_hz);
    if (e > best_e) {
      best_e = e;
      best = loc;
    }
  }
  return best;
}

/// Share of a segment's spectral energy inside the rig's resonance band.
inline double impulse_band_energy_fraction(std::span<const double> segment, const RigSpec& rig) {
  const std::size_t n = segment.size();
  std::vector<double> spec = dct(segment);
  const double half_band = 3.0 / (std::numbers::pi * rig.resonance_decay);
  double band = 0.0, total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double f = static_cast<double>(k) / 2.0 * static_cast<double>(rig.sample_rate_hz) / static_cast<double>(n);
    const double e = spec[k] * spec[k];
    total += e;
    if (std::abs(f - rig.resonance_hz) <= half_band) band += e;
  }
  return total > 0 ? band / total : 0.0;
}

}  // namespace bdx
