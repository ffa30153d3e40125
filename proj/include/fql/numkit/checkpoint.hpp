#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fql/numkit/mlp.hpp"
#include "fql/numkit/tensor.hpp"

namespace fql::numkit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

/// Checkpoint layout: an 8-byte little-endian manifest length, the JSON
/// manifest (name, shape, byte offset per array), then one payload of
/// little-endian 64-bit floats. Offsets are relative to the payload start.
inline void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const ParamStore*>>& groups) {
  nlohmann::json manifest;
  manifest["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [prefix, store] : groups) {
    for (std::size_t i = 0; i < store->size(); ++i) {
      const Tensor& t = store->tensor(i);
      nlohmann::json entry;
      entry["name"] = prefix + "/" + store->name(i);
      entry["shape"] = t.shape();
      entry["offset"] = offset;
      manifest["params"].push_back(entry);
      offset += t.size() * sizeof(double);
    }
  }
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& [prefix, store] : groups) {
    for (std::size_t i = 0; i < store->size(); ++i) {
      const Tensor& t = store->tensor(i);
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error("load_checkpoint: truncated manifest");
  const nlohmann::json manifest = nlohmann::json::parse(mtext);

  const std::streampos payload_start = in.tellg();
  std::map<std::string, Tensor> out;
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<std::size_t> shape =
        entry.at("shape").get<std::vector<std::size_t>>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload");
    out.emplace(name, std::move(t));
  }
  return out;
}

/// Write checkpointed tensors back into a store; throws on any mismatch.
inline void restore_params(const std::map<std::string, Tensor>& ckpt,
                           const std::string& prefix, ParamStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string key = prefix + "/" + store.name(i);
    auto it = ckpt.find(key);
    if (it == ckpt.end()) {
      throw std::runtime_error("restore_params: missing " + key);
    }
    if (!(it->second.same_shape(store.tensor(i)))) {
      throw std::runtime_error("restore_params: shape mismatch at " + key);
    }
    store.tensor(i) = it->second;
  }
}

}  // namespace fql::numkit
