#pragma once

// Weight checkpoint: "BDXW", u32 tensor count, then per tensor
// u16 name length, UTF-8 name, u8 rank, rank x u32 dims, f64 values (little-endian).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bdx/binary_io.hpp"
#include "bdx/nn/tensor.hpp"

namespace bdx::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline std::vector<char> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  io::ByteWriter w;
  w.bytes("BDXW");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    require(name.size() <= 0xFFFF, ErrorKind::Config, "tensor name too long");
    require(t.rank() <= 0xFF, ErrorKind::Config, "tensor rank too large");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.put<double>(v);
  }
  return w.data();
}

inline std::vector<NamedTensor> decode_checkpoint(std::span<const char> data, const std::string& origin = "BDXW") {
  io::ByteReader r(data, origin);
  if (data.size() < 4 || r.bytes(4) != "BDXW") fail(ErrorKind::Io, origin + ": bad magic, expected BDXW");
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = std::string(r.bytes(r.get<std::uint16_t>()));
    Shape shape(r.get<std::uint8_t>());
    for (auto& d : shape) d = r.get<std::uint32_t>();
    const std::size_t n = shape_size(shape);
    if (r.remaining() / 8 < n) fail(ErrorKind::Io, origin + ": truncated payload");
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    nt.tensor = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  if (r.remaining() != 0) fail(ErrorKind::Io, origin + ": trailing bytes after last tensor");
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  io::write_file(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

/// Copies checkpoint values into `params` by name; every param must be present with a matching shape.
inline void assign_params(const std::vector<NamedTensor>& tensors, std::span<Param* const> params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;
  for (Param* p : params) {
    auto it = by_name.find(p->name);
    require(it != by_name.end(), ErrorKind::Io, "checkpoint lacks tensor '" + p->name + "'");
    require(it->second->shape() == p->value.shape(), ErrorKind::Io,
            "checkpoint tensor '" + p->name + "' has shape " + shape_str(it->second->shape()) + ", expected " +
                shape_str(p->value.shape()));
    p->value = *it->second;
  }
}

}  // namespace bdx::nn
