#pragma once

// Dataset manifest, in-memory sample sets and network input assembly.

#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bdx/binary_io.hpp"
#include "bdx/reference_store.hpp"
#include "bdx/rng.hpp"
#include "bdx/signal.hpp"
#include "bdx/nn/tensor.hpp"

namespace bdx {

struct ManifestEntry {
  std::string path;  // relative to the dataset directory
  int label = 0;
  std::uint32_t condition_id = 0;
  std::string source_tag;
  Split split = Split::Train;

  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

/// manifest.tsv: path, label, condition_id, source_tag, split (tab-separated, no header).
inline std::string format_manifest(const Manifest& m) {
  std::ostringstream out;
  for (const auto& e : m)
    out << e.path << '\t' << e.label << '\t' << e.condition_id << '\t' << e.source_tag << '\t'
        << split_name(e.split) << '\n';
  return out.str();
}

inline Manifest parse_manifest(std::string_view content, const std::string& origin = "manifest.tsv") {
  Manifest m;
  std::size_t lineno = 0;
  for (const auto& line : text::lines(content)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = text::split(line, '\t');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (f.size() != 5) fail(ErrorKind::Io, where + ": expected 5 tab-separated fields");
    ManifestEntry e;
    e.path = f[0];
    e.label = text::parse_number<int>(f[1], ErrorKind::Io, where + " label");
    e.condition_id = text::parse_number<std::uint32_t>(f[2], ErrorKind::Io, where + " condition id");
    e.source_tag = f[3];
    e.split = parse_split(f[4]);
    m.push_back(std::move(e));
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  io::write_text(path, format_manifest(m));
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_text(path), path.string());
}

inline Manifest filter_split(const Manifest& m, Split s) {
  Manifest out;
  for (const auto& e : m)
    if (e.split == s) out.push_back(e);
  return out;
}

/// Which channels the network sees.
enum class Variant { Full, NoRefNoRes, NoRes, NoRef, TimeDomain };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoRefNoRes: return "no_ref_no_res";
    case Variant::NoRes: return "no_res";
    case Variant::NoRef: return "no_ref";
    case Variant::TimeDomain: return "time_domain";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::Full, Variant::NoRefNoRes, Variant::NoRes, Variant::NoRef, Variant::TimeDomain})
    if (s == variant_name(v)) return v;
  fail(ErrorKind::Config, "unknown ablation variant '" + std::string(s) +
                              "' (expected full, no_ref_no_res, no_res, no_ref, time_domain)");
}

inline std::size_t variant_channels(Variant v) {
  switch (v) {
    case Variant::Full: return 3;
    case Variant::NoRes:
    case Variant::NoRef: return 2;
    case Variant::NoRefNoRes:
    case Variant::TimeDomain: return 1;
  }
  return 0;
}

inline bool variant_uses_reference(Variant v) { return v == Variant::Full || v == Variant::NoRes || v == Variant::NoRef; }

/// Per-sample network inputs before reference resolution.
struct SampleSet {
  std::size_t n_f = 0;
  Variant variant = Variant::Full;
  std::vector<std::vector<double>> queries;  // DCN output, or raw samples cut/padded to n_f for TimeDomain
  std::vector<std::uint32_t> conditions;
  std::vector<int> labels;
  std::vector<std::string> sources;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
};

/// Loads each entry's VSEG segment and converts it to the variant's query channel.
inline SampleSet load_samples(const std::filesystem::path& data_dir, const Manifest& entries, const DcnConfig& dcn_cfg,
                              Variant variant) {
  dcn_cfg.validate();
  SampleSet set;
  set.n_f = dcn_cfg.n_f;
  set.variant = variant;
  for (const auto& e : entries) {
    RawSignal raw = read_vseg(data_dir / e.path);
    require(raw.samples.size() == raw.sample_rate_hz, ErrorKind::Data,
            e.path + ": dataset segments must hold exactly one second of samples");
    if (variant == Variant::TimeDomain) {
      std::vector<double> x = raw.samples;
      x.resize(dcn_cfg.n_f, 0.0);
      set.queries.push_back(std::move(x));
    } else {
      set.queries.push_back(dcn(raw.samples, dcn_cfg).coefficients);
    }
    set.conditions.push_back(e.condition_id);
    set.labels.push_back(e.label);
    set.sources.push_back(e.source_tag);
    set.ids.push_back(e.path);
  }
  return set;
}

/// Seed used for the reference draw of sample `index` under `seed`.
inline std::uint64_t reference_seed(std::uint64_t seed, std::size_t index) {
  return rng::derive(seed, {0x726566, index});
}

/// Builds a (B, channels, n_f) batch. Reference channels come from `store`,
/// drawn with reference_seed(seed, sample index).
inline nn::Tensor assemble_batch(const SampleSet& set, std::span<const std::size_t> indices,
                                 const ReferenceStore* store, std::uint64_t seed) {
  const std::size_t C = variant_channels(set.variant), n = set.n_f;
  nn::Tensor x({indices.size(), C, n});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t i = indices[b];
    const auto& q = set.queries[i];
    if (!variant_uses_reference(set.variant)) {
      std::copy(q.begin(), q.end(), &x.at(b, 0, 0));
      continue;
    }
    require(store != nullptr, ErrorKind::MissingReference, "variant needs a reference store");
    const FrequencyRep& ref = store->lookup_reference(set.conditions[i], reference_seed(seed, i));
    UnifiedRepresentation r = unify(FrequencyRep{q}, ref);
    std::vector<std::size_t> channels;
    switch (set.variant) {
      case Variant::Full: channels = {0, 1, 2}; break;
      case Variant::NoRes: channels = {0, 1}; break;
      case Variant::NoRef: channels = {0, 2}; break;
      default: break;
    }
    for (std::size_t c = 0; c < channels.size(); ++c) {
      auto src = r.channel(channels[c]);
      std::copy(src.begin(), src.end(), &x.at(b, c, 0));
    }
  }
  return x;
}

}  // namespace bdx
