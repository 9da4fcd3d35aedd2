#pragma once

// Weight container layout (all integers little-endian):
//   "WSNN" | u32 version | u32 manifest length | manifest (UTF-8 JSON) | float32 data
// The manifest carries the network spec, seed and the name/shape of every stored tensor,
// parameters first then buffers, in the order their data follows.

#include <string>

#include "json.hpp"
#include "wastesite/core/binary_io.hpp"
#include "wastesite/nn/network.hpp"

namespace wastesite::nn {

inline constexpr std::string_view kWeightsMagic = "WSNN";
inline constexpr std::uint32_t kWeightsVersion = 1;

template <class T>
std::string encode_weights(const Network<T>& net) {
  nlohmann::json manifest;
  manifest["spec"] = net.spec();
  manifest["seed"] = net.seed();
  auto names = net.state_names();
  std::vector<const Tensor<T>*> tensors = net.parameters();
  for (const auto* b : net.buffers()) tensors.push_back(b);
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    list.push_back({{"name", names[i]}, {"shape", tensors[i]->shape()}});
  }
  manifest["tensors"] = list;
  const std::string meta = manifest.dump();

  io::ByteWriter w;
  w.bytes(kWeightsMagic);
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  for (const auto* t : tensors) w.f32s(t->values());
  return w.take();
}

template <class T = float>
Network<T> decode_weights(std::string_view bytes) {
  io::ByteReader r(bytes, "weights");
  if (r.bytes(4) != kWeightsMagic) throw FormatError("weights: bad magic");
  const auto version = r.u32();
  if (version != kWeightsVersion) {
    throw FormatError("weights: unsupported version " + std::to_string(version));
  }
  const auto meta_len = r.u32();
  const auto manifest = nlohmann::json::parse(r.bytes(meta_len));
  Network<T> net(manifest.at("spec").get<NetworkSpec>(), manifest.at("seed").get<std::uint64_t>());
  std::vector<Tensor<T>*> tensors = net.parameters();
  for (auto* b : net.buffers()) tensors.push_back(b);
  const auto& listed = manifest.at("tensors");
  if (listed.size() != tensors.size()) throw FormatError("weights: tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (listed[i].at("shape").get<Shape>() != tensors[i]->shape()) {
      throw FormatError("weights: shape mismatch for " + listed[i].at("name").get<std::string>());
    }
    r.f32s(tensors[i]->values());
  }
  if (!r.at_end()) throw FormatError("weights: trailing bytes");
  return net;
}

template <class T>
void save_weights(const Network<T>& net, const std::string& path) {
  io::write_file(path, encode_weights(net));
}

template <class T = float>
Network<T> load_weights(const std::string& path) {
  return decode_weights<T>(io::read_file(path));
}

}  // namespace wastesite::nn
