#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "cdisent/core/bytes.hpp"
#include "cdisent/core/error.hpp"
#include "cdisent/ndiff/tensor.hpp"

namespace cdisent::ndiff {

/// Named trainable tensors with a gradient buffer of identical shape.
/// Insertion order is preserved; it fixes checkpoint and optimizer layout.
template <class T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  void add(const std::string& name, Tensor<T> value) {
    if (index_.contains(name)) throw Error("ParamSet: duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    Tensor<T> grad(value.shape(), T(0));
    entries_.push_back(Entry{name, std::move(value), std::move(grad)});
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("ParamSet: unknown parameter '" + name + "'");
    return it->second;
  }

  Tensor<T>& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor<T>& value(const std::string& name) const { return entries_[index_of(name)].value; }
  Tensor<T>& grad(const std::string& name) { return entries_[index_of(name)].grad; }
  const Tensor<T>& grad(const std::string& name) const { return entries_[index_of(name)].grad; }

  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(T(0));
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  /// Values only; gradients are scratch state.
  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name) return false;
      if (!(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// CDPT checkpoint: "CDPT", u32 version, then records until EOF:
//   u32 name_len, name bytes, u32 rank, u32 extents[rank], f32 payload.
// All integers and floats little-endian.

inline constexpr char kCheckpointMagic[4] = {'C', 'D', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;


template <class T>
std::string encode_checkpoint(const ParamSet<T>& params) {
  std::string out(kCheckpointMagic, 4);
  bytes::put_u32(out, kCheckpointVersion);
  for (const auto& e : params) {
    bytes::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    bytes::put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t ext : e.value.shape()) bytes::put_u32(out, static_cast<std::uint32_t>(ext));
    for (T v : e.value.data()) bytes::put_f32(out, static_cast<float>(v));
  }
  return out;
}

template <class T>
ParamSet<T> decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  bytes::ByteReader rd(bytes, what);
  if (rd.str(4) != std::string(kCheckpointMagic, 4)) throw FormatError(what + ": bad magic");
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  ParamSet<T> params;
  while (!rd.at_end()) {
    const std::uint32_t name_len = rd.u32();
    std::string name = rd.str(name_len);
    const std::uint32_t rank = rd.u32();
    Shape shape(rank);
    for (auto& ext : shape) ext = rd.u32();
    const std::size_t n = shape_numel(shape);
    rd.need(4 * n);
    std::vector<T> data(n);
    for (auto& v : data) v = static_cast<T>(rd.f32());
    params.add(name, Tensor<T>(std::move(shape), std::move(data)));
  }
  return params;
}

template <class T>
void save_checkpoint(const ParamSet<T>& params, const std::filesystem::path& path) {
  bytes::write_file_atomic(path, encode_checkpoint(params));
}

template <class T>
ParamSet<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(bytes::read_file_bytes(path), path.string());
}

}  // namespace cdisent::ndiff
