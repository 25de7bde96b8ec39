#pragma once

// Working-condition registry and the store of fault-free frequency references.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bdx/binary_io.hpp"
#include "bdx/error.hpp"
#include "bdx/rng.hpp"
#include "bdx/signal.hpp"
#include "bdx/text.hpp"

namespace bdx {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  fail(ErrorKind::Io, "unknown split '" + std::string(s) + "'");
}

/// Speed, load, sensor and source of a recording.
struct ConditionInfo {
  std::optional<double> rpm;
  std::string load;
  std::string sensor;
  std::string source;

  static std::string render_rpm(const std::optional<double>& rpm) {
    if (!rpm) return "unknown";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", *rpm);
    return buf;
  }

  /// lowercase(rpm|load|sensor|source), rpm with three decimals.
  std::string canonical() const {
    return text::lower(render_rpm(rpm) + "|" + load + "|" + sensor + "|" + source);
  }
};

class ConditionRegistry {
 public:
  /// Index of `info`, appending it when its canonical string is new.
  std::uint32_t register_condition(const ConditionInfo& info) {
    for (const auto* field : {&info.load, &info.sensor, &info.source})
      require(field->find_first_of("\t\n\r") == std::string::npos, ErrorKind::Config,
              "condition fields may not contain tabs or newlines");
    auto key = info.canonical();
    if (auto it = index_.find(key); it != index_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(infos_.size());
    infos_.push_back(info);
    index_.emplace(std::move(key), id);
    return id;
  }

  std::optional<std::uint32_t> find(const ConditionInfo& info) const {
    auto it = index_.find(info.canonical());
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const ConditionInfo& info(std::uint32_t id) const {
    require(id < infos_.size(), ErrorKind::Bounds, "unknown condition id " + std::to_string(id));
    return infos_[id];
  }

  std::size_t size() const { return infos_.size(); }
  const std::vector<ConditionInfo>& infos() const { return infos_; }

 private:
  std::vector<ConditionInfo> infos_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Fault-free, training-split frequency references keyed by condition id.
class ReferenceStore {
 public:
  void insert_reference(std::uint32_t condition_id, FrequencyRep rep, int fault_label, Split split) {
    if (fault_label != 0)
      fail(ErrorKind::RejectedReference,
           "reference rejected: fault label " + std::to_string(fault_label) + " is not fault-free");
    if (split != Split::Train)
      fail(ErrorKind::RejectedReference,
           std::string("reference rejected: split '") + split_name(split) + "' is not the training split");
    require(rep.n_f() > 0, ErrorKind::Shape, "empty reference");
    if (n_f_ == 0) n_f_ = rep.n_f();
    require(rep.n_f() == n_f_, ErrorKind::Shape,
            "reference length " + std::to_string(rep.n_f()) + " differs from store n_f " + std::to_string(n_f_));
    refs_[condition_id].push_back(std::move(rep));
  }

  /// Uniformly chosen reference for the condition; a pure function of (contents, id, seed).
  const FrequencyRep& lookup_reference(std::uint32_t condition_id, std::uint64_t seed) const {
    auto it = refs_.find(condition_id);
    if (it == refs_.end() || it->second.empty())
      fail(ErrorKind::MissingReference,
           "no fault-free reference stored for working condition " + std::to_string(condition_id));
    const auto& list = it->second;
    return list[rng::index_below(rng::splitmix64(seed ^ (0xa0761d6478bd642fULL * (condition_id + 1))),
                                 list.size())];
  }

  bool has(std::uint32_t condition_id) const {
    auto it = refs_.find(condition_id);
    return it != refs_.end() && !it->second.empty();
  }

  std::size_t count(std::uint32_t condition_id) const {
    auto it = refs_.find(condition_id);
    return it == refs_.end() ? 0 : it->second.size();
  }

  std::size_t n_f() const { return n_f_; }
  const std::map<std::uint32_t, std::vector<FrequencyRep>>& all() const { return refs_; }

 private:
  std::size_t n_f_ = 0;
  std::map<std::uint32_t, std::vector<FrequencyRep>> refs_;
};

// VFRQ: "VFRQ", u32 n_f, n_f x f64 (little-endian).

inline std::vector<char> encode_vfrq(const FrequencyRep& rep) {
  io::ByteWriter w;
  w.bytes("VFRQ");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rep.n_f()));
  for (double v : rep.coefficients) w.put<double>(v);
  return w.data();
}

inline FrequencyRep decode_vfrq(std::span<const char> data, const std::string& origin = "VFRQ") {
  io::ByteReader r(data, origin);
  if (data.size() < 4 || r.bytes(4) != "VFRQ") fail(ErrorKind::Io, origin + ": bad magic, expected VFRQ");
  auto n = r.get<std::uint32_t>();
  if (r.remaining() < static_cast<std::size_t>(n) * 8) fail(ErrorKind::Io, origin + ": truncated payload");
  FrequencyRep rep;
  rep.coefficients.resize(n);
  for (auto& v : rep.coefficients) v = r.get<double>();
  return rep;
}

/// Persisted layout:
///   conditions.tsv            index, rpm, load, sensor, source
///   refs/<id>/<k>.vfreq       one reference each
///   refs/index.tsv            id, k, n_f, FNV-1a of the .vfreq file
inline void save_store(const ReferenceStore& store, const ConditionRegistry& registry,
                       const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream conds;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto& c = registry.info(static_cast<std::uint32_t>(i));
    conds << i << '\t' << ConditionInfo::render_rpm(c.rpm) << '\t' << c.load << '\t' << c.sensor << '\t'
          << c.source << '\n';
  }
  io::write_text(dir / "conditions.tsv", conds.str());

  if (fs::exists(dir / "refs")) fs::remove_all(dir / "refs");
  fs::create_directories(dir / "refs");
  std::ostringstream index;
  for (const auto& [id, list] : store.all()) {
    for (std::size_t k = 0; k < list.size(); ++k) {
      auto bytes = encode_vfrq(list[k]);
      io::write_file(dir / "refs" / std::to_string(id) / (std::to_string(k) + ".vfreq"), bytes);
      index << id << '\t' << k << '\t' << list[k].n_f() << '\t' << io::hex64(io::fnv1a(bytes)) << '\n';
    }
  }
  io::write_text(dir / "refs" / "index.tsv", index.str());
}

struct LoadedStore {
  ReferenceStore store;
  ConditionRegistry registry;
};

inline LoadedStore load_store(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  auto corrupt = [&](const std::string& why) { fail(ErrorKind::Persistence, dir.string() + ": " + why); };
  if (!fs::is_regular_file(dir / "conditions.tsv")) corrupt("missing conditions.tsv");
  if (!fs::is_regular_file(dir / "refs" / "index.tsv")) corrupt("missing refs/index.tsv");

  LoadedStore out;
  std::size_t expected = 0;
  for (const auto& line : text::lines(io::read_text(dir / "conditions.tsv"))) {
    auto f = text::split(line, '\t');
    if (f.size() != 5) corrupt("conditions.tsv: expected 5 fields");
    std::size_t idx = 0;
    try {
      idx = text::parse_number<std::size_t>(f[0], ErrorKind::Persistence, "condition index");
    } catch (const Error&) {
      corrupt("conditions.tsv: bad index");
    }
    if (idx != expected) corrupt("conditions.tsv: indices not ascending from 0");
    ConditionInfo info;
    if (f[1] != "unknown") info.rpm = text::parse_number<double>(f[1], ErrorKind::Persistence, "rpm");
    info.load = f[2];
    info.sensor = f[3];
    info.source = f[4];
    if (out.registry.register_condition(info) != idx) corrupt("conditions.tsv: duplicate condition");
    ++expected;
  }

  for (const auto& line : text::lines(io::read_text(dir / "refs" / "index.tsv"))) {
    auto f = text::split(line, '\t');
    if (f.size() != 4) corrupt("refs/index.tsv: expected 4 fields");
    auto id = text::parse_number<std::uint32_t>(f[0], ErrorKind::Persistence, "condition id");
    auto k = text::parse_number<std::size_t>(f[1], ErrorKind::Persistence, "reference index");
    if (id >= out.registry.size()) corrupt("reference for unregistered condition " + f[0]);
    if (k != out.store.count(id)) corrupt("reference indices out of order for condition " + f[0]);
    auto path = dir / "refs" / f[0] / (f[1] + ".vfreq");
    if (!fs::is_regular_file(path)) corrupt("missing " + path.string());
    auto bytes = io::read_file(path);
    if (io::hex64(io::fnv1a(bytes)) != f[3]) corrupt("checksum mismatch for " + path.string());
    FrequencyRep rep;
    try {
      rep = decode_vfrq(bytes, path.string());
    } catch (const Error& e) {
      corrupt(e.what());
    }
    if (std::to_string(rep.n_f()) != f[2]) corrupt("n_f mismatch for " + path.string());
    out.store.insert_reference(id, std::move(rep), 0, Split::Train);
  }
  return out;
}

}  // namespace bdx
