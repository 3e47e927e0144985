#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cdisent/core/bytes.hpp"
#include "cdisent/core/error.hpp"
#include "cdisent/datagen/dataset.hpp"

namespace cdisent::datagen {

inline constexpr char kDatasetMagic[4] = {'C', 'D', 'S', 'T'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// data.cdst layout (little endian):
///   "CDST" | u32 version | u32 N | u32 rank | u32 extents[rank] | u32 K |
///   N x ( f32 obs[prod extents] | u16 factors[K] | u16 confounder )
inline std::string encode_dataset(const LabeledDataset& ds) {
  ds.validate();
  std::string out(kDatasetMagic, 4);
  bytes::put_u32(out, kDatasetVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.obs_shape.size()));
  for (std::size_t e : ds.obs_shape) bytes::put_u32(out, static_cast<std::uint32_t>(e));
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.n_factors()));
  out.reserve(out.size() + ds.size() * (4 * ds.obs_dim() + 2 * ds.n_factors() + 2));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (float v : ds.obs(i)) bytes::put_f32(out, v);
    for (std::uint16_t f : ds.factors(i)) bytes::put_u16(out, f);
    bytes::put_u16(out, ds.c[i]);
  }
  return out;
}

/// Decodes the payload only. Factor names and cardinalities come from
/// meta.json; without it they are inferred from the labels.
inline LabeledDataset decode_dataset(const std::string& data, const std::string& what = "dataset") {
  bytes::ByteReader rd(data, what);
  if (rd.str(4) != std::string(kDatasetMagic, 4)) throw FormatError(what + ": bad magic (not a CDST file)");
  const std::uint32_t version = rd.u32();
  if (version != kDatasetVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kDatasetVersion) + ")");
  const std::uint32_t n = rd.u32();
  if (n == 0) throw FormatError(what + ": zero samples");
  const std::uint32_t rank = rd.u32();
  if (rank == 0 || rank > 4) throw FormatError(what + ": bad observation rank " + std::to_string(rank));
  LabeledDataset ds;
  for (std::uint32_t r = 0; r < rank; ++r) {
    const std::uint32_t e = rd.u32();
    if (e == 0) throw FormatError(what + ": zero observation extent");
    ds.obs_shape.push_back(e);
  }
  const std::uint32_t k = rd.u32();
  const std::size_t d = ds.obs_dim();
  const std::size_t record = 4 * d + 2 * static_cast<std::size_t>(k) + 2;
  rd.need(record * n);
  if (rd.remaining() != record * n) throw FormatError(what + ": trailing bytes after payload");
  ds.x.resize(static_cast<std::size_t>(n) * d);
  ds.g.resize(static_cast<std::size_t>(n) * k);
  ds.c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) ds.x[i * d + j] = rd.f32();
    for (std::size_t f = 0; f < k; ++f) ds.g[i * k + f] = rd.u16();
    ds.c[i] = rd.u16();
  }
  ds.factor_cards.assign(k, 2);
  for (std::size_t f = 0; f < k; ++f) {
    ds.factor_names.push_back("g" + std::to_string(f));
    for (std::size_t i = 0; i < n; ++i)
      ds.factor_cards[f] = std::max<std::size_t>(ds.factor_cards[f], ds.g[i * k + f] + 1u);
  }
  for (std::uint16_t c : ds.c) ds.conf_card = std::max<std::size_t>(ds.conf_card, c + 1u);
  return ds;
}

inline nlohmann::json dataset_meta(const LabeledDataset& ds) {
  nlohmann::json j;
  j["n"] = ds.size();
  j["obs_shape"] = ds.obs_shape;
  j["factors"] = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.n_factors(); ++k)
    j["factors"].push_back({{"name", ds.factor_names[k]}, {"cardinality", ds.factor_cards[k]}});
  j["confounder_cardinality"] = ds.conf_card;
  return j;
}

/// Writes <dir>/data.cdst and <dir>/meta.json. `extra` is merged into the
/// metadata (GenSpec echo, seed, severity, ...).
inline void write_dataset(const LabeledDataset& ds, const std::filesystem::path& dir,
                          const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta = dataset_meta(ds);
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  bytes::write_file_atomic(dir / "data.cdst", encode_dataset(ds));
  bytes::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

inline LabeledDataset read_dataset(const std::filesystem::path& dir) {
  const auto data_path = dir / "data.cdst";
  LabeledDataset ds = decode_dataset(bytes::read_file_bytes(data_path), data_path.string());
  const auto meta_path = dir / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = nlohmann::json::parse(bytes::read_file_bytes(meta_path));
      const auto& factors = meta.at("factors");
      if (factors.size() != ds.n_factors())
        throw FormatError(meta_path.string() + ": factor count disagrees with data.cdst");
      for (std::size_t k = 0; k < ds.n_factors(); ++k) {
        ds.factor_names[k] = factors[k].at("name").get<std::string>();
        ds.factor_cards[k] = factors[k].at("cardinality").get<std::size_t>();
      }
      ds.conf_card = meta.at("confounder_cardinality").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what());
    }
  }
  ds.validate();
  return ds;
}

}  // namespace cdisent::datagen
