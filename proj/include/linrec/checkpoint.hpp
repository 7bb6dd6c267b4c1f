#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "linrec/training.hpp"

namespace linrec {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <class S>
std::vector<std::pair<std::string, Tensor2<S>*>> named_tensors(Model<S>& m) {
  std::vector<std::pair<std::string, Tensor2<S>*>> out;
  for (size_t i = 0; i < m.gl.size(); ++i) {
    const std::string base = "layer" + std::to_string(i) + ".";
    auto ts = m.gl[i].tensors();
    const char* names[] = {"surrogate.U", "surrogate.V", "surrogate.b_g",
                           "surrogate.b_z", "U", "V", "bias"};
    for (size_t j = 0; j < ts.size(); ++j)
      out.emplace_back(base + names[j], ts[j]);
  }
  for (size_t i = 0; i < m.ls.size(); ++i) {
    const std::string base = "layer" + std::to_string(i) + ".";
    auto ts = m.ls[i].tensors();
    const char* names[] = {"U", "V", "bias"};
    for (size_t j = 0; j < ts.size(); ++j)
      out.emplace_back(base + names[j], ts[j]);
  }
  out.emplace_back("readout.W", &m.W_out);
  out.emplace_back("readout.b", &m.b_out);
  return out;
}

// floats cross the file boundary as little-endian bytes regardless of host
template <class S>
void append_le(std::vector<unsigned char>& out, const std::vector<S>& vals) {
  using U = std::conditional_t<sizeof(S) == 4, uint32_t, uint64_t>;
  for (S v : vals) {
    U bits = std::bit_cast<U>(v);
    if constexpr (std::endian::native == std::endian::big)
      bits = sizeof(S) == 4 ? U(__builtin_bswap32(uint32_t(bits)))
                            : U(__builtin_bswap64(uint64_t(bits)));
    unsigned char b[sizeof(S)];
    std::memcpy(b, &bits, sizeof(S));
    out.insert(out.end(), b, b + sizeof(S));
  }
}

template <class S>
void read_le(const unsigned char* in, size_t count, std::vector<S>& vals) {
  using U = std::conditional_t<sizeof(S) == 4, uint32_t, uint64_t>;
  vals.resize(count);
  for (size_t i = 0; i < count; ++i) {
    U bits;
    std::memcpy(&bits, in + i * sizeof(S), sizeof(S));
    if constexpr (std::endian::native == std::endian::big)
      bits = sizeof(S) == 4 ? U(__builtin_bswap32(uint32_t(bits)))
                            : U(__builtin_bswap64(uint64_t(bits)));
    vals[i] = std::bit_cast<S>(bits);
  }
}

inline uint64_t fnv1a_bytes(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

[[noreturn]] inline void load_fail(const std::string& why) {
  contract_fail("load_checkpoint: " + why);
}

}  // namespace detail

/// Writes `path` (structured-text manifest) and `path + ".bin"` (raw
/// little-endian float blob). The manifest carries its own checksum so any
/// header corruption is detectable at load time.
template <class S>
void save_checkpoint(Model<S>& model, const TrainConfig& cfg,
                     const std::string& path) {
  auto named = detail::named_tensors(model);
  std::vector<unsigned char> blob;
  nlohmann::json table = nlohmann::json::array();
  size_t offset = 0;
  for (auto& [name, t] : named) {
    const size_t bytes = t->data.size() * sizeof(S);
    table.push_back({{"name", name},
                     {"shape", {t->rows, t->cols}},
                     {"offset", offset},
                     {"bytes", bytes}});
    detail::append_le(blob, t->data);
    offset += bytes;
  }

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["element_type"] = sizeof(S) == 4 ? "f32" : "f64";
  manifest["arch"] = model.arch;
  manifest["config"] = config_to_json(cfg);
  manifest["tensors"] = table;
  manifest["blob"] = {
      {"file", std::filesystem::path(path).filename().string() + ".bin"},
      {"length", blob.size()},
      {"fnv1a64", detail::hex64(detail::fnv1a_bytes(blob.data(), blob.size()))}};
  manifest["manifest_fnv1a64"] = detail::hex64(
      detail::fnv1a_bytes(manifest.dump().data(), manifest.dump().size()));

  std::ofstream header(path, std::ios::trunc);
  require(header.good(), "save_checkpoint: cannot open manifest path");
  header << manifest.dump(2) << "\n";
  header.close();
  std::ofstream bin(path + ".bin", std::ios::binary | std::ios::trunc);
  require(bin.good(), "save_checkpoint: cannot open blob path");
  bin.write(reinterpret_cast<const char*>(blob.data()),
            std::streamsize(blob.size()));
  bin.close();
  require(header.good() && bin.good(), "save_checkpoint: write failed");
}

/// Rebuilds the model saved at `path`. Every validation failure is an
/// explicit error; nothing is partially loaded or silently cast.
template <class S>
Model<S> load_checkpoint(const std::string& path, TrainConfig* cfg_out = nullptr) {
  std::ifstream header(path);
  if (!header.good()) detail::load_fail("cannot open manifest " + path);
  nlohmann::json manifest;
  try {
    header >> manifest;
  } catch (const nlohmann::json::exception& e) {
    detail::load_fail(std::string("manifest is not valid structured text: ") +
                      e.what());
  }

  // integrity of the header itself
  if (!manifest.contains("manifest_fnv1a64"))
    detail::load_fail("manifest checksum missing");
  const std::string stored_sum = manifest["manifest_fnv1a64"];
  manifest.erase("manifest_fnv1a64");
  const std::string recomputed = detail::hex64(
      detail::fnv1a_bytes(manifest.dump().data(), manifest.dump().size()));
  if (recomputed != stored_sum)
    detail::load_fail("manifest checksum mismatch (header corrupted)");

  if (!manifest.contains("format_version") ||
      manifest["format_version"] != kCheckpointVersion)
    detail::load_fail("unsupported format version");

  const std::string elem = manifest.value("element_type", "");
  const std::string want = sizeof(S) == 4 ? "f32" : "f64";
  if (elem != "f32" && elem != "f64")
    detail::load_fail("unknown element type \"" + elem + "\"");
  if (elem != want)
    detail::load_fail("checkpoint element type " + elem +
                      " does not match requested " + want +
                      "; refusing to cast");

  TrainConfig cfg;
  try {
    const auto& j = manifest.at("config");
    cfg.arch = j.at("arch");
    cfg.seq_len = j.at("seq_len");
    cfg.input_dim = j.at("input_dim");
    cfg.hidden = j.at("hidden");
    cfg.layers = j.at("layers");
    cfg.batch = j.at("batch");
    cfg.learning_rate = j.at("learning_rate");
    cfg.optimizer = j.at("optimizer");
    cfg.max_iters = j.at("max_iters");
    cfg.seed = j.at("seed");
    cfg.window = j.at("window");
    cfg.gate_bias = j.at("gate_bias");
    cfg.clip_norm = j.at("clip_norm");
    if (j.contains("time_data_gen")) cfg.time_data_gen = j.at("time_data_gen");
  } catch (const nlohmann::json::exception& e) {
    detail::load_fail(std::string("config echo incomplete: ") + e.what());
  }
  if (manifest.value("arch", "") != cfg.arch)
    detail::load_fail("arch tag disagrees with config echo");

  // build the skeleton, then require the tensor table to match it exactly
  Rng scratch(0);
  Model<S> model = build_model<S>(cfg, scratch);
  auto named = detail::named_tensors(model);

  if (!manifest.contains("tensors") || !manifest["tensors"].is_array() ||
      manifest["tensors"].size() != named.size())
    detail::load_fail("tensor table size does not match architecture");

  size_t expected_offset = 0;
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& entry = manifest["tensors"][i];
    auto& [name, t] = named[i];
    if (entry.value("name", "") != name)
      detail::load_fail("tensor " + std::to_string(i) + " is named \"" +
                        entry.value("name", "") + "\", expected \"" + name +
                        "\"");
    const auto& shape = entry.at("shape");
    if (shape.size() != 2 || index_t(shape[0]) != t->rows ||
        index_t(shape[1]) != t->cols)
      detail::load_fail("tensor " + name + " shape mismatch");
    if (size_t(entry.at("offset")) != expected_offset)
      detail::load_fail("tensor " + name + " offset is not contiguous");
    const size_t bytes = entry.at("bytes");
    if (bytes != t->data.size() * sizeof(S))
      detail::load_fail("tensor " + name + " byte span mismatch");
    expected_offset += bytes;
  }

  const auto& blob_info = manifest.at("blob");
  const size_t blob_len = blob_info.at("length");
  if (blob_len != expected_offset)
    detail::load_fail("blob length disagrees with tensor table");

  const std::string blob_path = path + ".bin";
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin.good()) detail::load_fail("cannot open blob " + blob_path);
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)),
                                  std::istreambuf_iterator<char>());
  if (blob.size() != blob_len)
    detail::load_fail("blob is " + std::to_string(blob.size()) +
                      " bytes, manifest declares " + std::to_string(blob_len) +
                      " (truncated?)");
  if (detail::hex64(detail::fnv1a_bytes(blob.data(), blob.size())) !=
      blob_info.value("fnv1a64", ""))
    detail::load_fail("blob checksum mismatch");

  size_t offset = 0;
  for (auto& [name, t] : named) {
    detail::read_le(blob.data() + offset, t->data.size(), t->data);
    offset += t->data.size() * sizeof(S);
  }
  if (cfg_out) *cfg_out = cfg;
  return model;
}

}  // namespace linrec
