#pragma once

// Weight archive: one binary file holding the parameter state of a network,
// keyed by layer index.
//
//   magic      8 bytes  "FCDDWTS1"
//   entries    u32      number of layer entries
//   per entry:
//     layer    u32      index into the layer list
//     tensors  u32      number of named tensors
//     per tensor:
//       name   u16 length + bytes   ("weight", "bias", "running_mean", "running_var")
//       count  u64      number of values
//       data   f64[count]
//
// All integers and doubles are little-endian. Layers without state are omitted.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcdd/backbone.hpp"

namespace fcdd {

static_assert(std::endian::native == std::endian::little, "weight archives assume a little-endian host");

inline constexpr char kWeightMagic[8] = {'F', 'C', 'D', 'D', 'W', 'T', 'S', '1'};

/// layer index -> tensor name -> values
using WeightArchive = std::map<std::uint32_t, std::map<std::string, std::vector<double>>>;

namespace detail {

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("weight archive truncated");
  return v;
}

}  // namespace detail

inline void write_archive(const std::filesystem::path& path, const WeightArchive& archive) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write weight archive " + path.string());
  os.write(kWeightMagic, sizeof kWeightMagic);
  detail::write_pod<std::uint32_t>(os, std::uint32_t(archive.size()));
  for (const auto& [layer, tensors] : archive) {
    detail::write_pod<std::uint32_t>(os, layer);
    detail::write_pod<std::uint32_t>(os, std::uint32_t(tensors.size()));
    for (const auto& [name, values] : tensors) {
      detail::write_pod<std::uint16_t>(os, std::uint16_t(name.size()));
      os.write(name.data(), std::streamsize(name.size()));
      detail::write_pod<std::uint64_t>(os, values.size());
      os.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * sizeof(double)));
    }
  }
  if (!os) throw RuntimeFailure("failed writing weight archive " + path.string());
}

inline WeightArchive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("weight file not found: " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kWeightMagic, sizeof magic) != 0)
    throw ValidationError("not a weight archive: " + path.string());
  WeightArchive archive;
  const auto entries = detail::read_pod<std::uint32_t>(is);
  for (std::uint32_t e = 0; e < entries; ++e) {
    const auto layer = detail::read_pod<std::uint32_t>(is);
    const auto count = detail::read_pod<std::uint32_t>(is);
    auto& tensors = archive[layer];
    for (std::uint32_t t = 0; t < count; ++t) {
      const auto len = detail::read_pod<std::uint16_t>(is);
      std::string name(len, '\0');
      is.read(name.data(), len);
      const auto n = detail::read_pod<std::uint64_t>(is);
      if (n > (std::uint64_t(1) << 34)) throw ValidationError("weight archive tensor too large");
      std::vector<double> values(n);
      is.read(reinterpret_cast<char*>(values.data()), std::streamsize(n * sizeof(double)));
      if (!is) throw ValidationError("weight archive truncated");
      tensors.emplace(std::move(name), std::move(values));
    }
  }
  return archive;
}

inline WeightArchive to_archive(const Network& net) {
  WeightArchive a;
  const auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    std::map<std::string, std::vector<double>> t;
    if (!p.weight.empty()) t["weight"] = p.weight;
    if (!p.bias.empty()) t["bias"] = p.bias;
    if (!p.running_mean.empty()) t["running_mean"] = p.running_mean;
    if (!p.running_var.empty()) t["running_var"] = p.running_var;
    if (!t.empty()) a[std::uint32_t(i)] = std::move(t);
  }
  return a;
}

/// Copies archive tensors into `net`. With `layer_limit`, only layers below it are loaded
/// (used to ingest a pretrained prefix). Every stateful layer in range must be present.
inline void load_into(Network& net, const WeightArchive& archive, std::size_t layer_limit = SIZE_MAX) {
  auto& params = net.params();
  const std::size_t end = std::min(layer_limit, params.size());
  if (layer_limit == SIZE_MAX)
    for (const auto& [layer, _] : archive)
      if (layer >= params.size()) throw ValidationError("weight archive references layer " + std::to_string(layer) + " beyond the network");
  for (std::size_t i = 0; i < end; ++i) {
    auto& p = params[i];
    const auto it = archive.find(std::uint32_t(i));
    const bool stateful = !p.weight.empty() || !p.bias.empty() || !p.running_mean.empty();
    if (it == archive.end()) {
      if (stateful) throw ValidationError("weight archive lacks layer " + std::to_string(i));
      continue;
    }
    auto assign = [&](const char* name, std::vector<double>& dst) {
      const auto t = it->second.find(name);
      if (t == it->second.end()) {
        if (!dst.empty()) throw ValidationError("weight archive lacks " + std::string(name) + " of layer " + std::to_string(i));
        return;
      }
      if (t->second.size() != dst.size())
        throw ValidationError("shape mismatch for " + std::string(name) + " of layer " + std::to_string(i) + ": expected " +
                              std::to_string(dst.size()) + " values, archive has " + std::to_string(t->second.size()));
      dst = t->second;
    };
    assign("weight", p.weight);
    assign("bias", p.bias);
    assign("running_mean", p.running_mean);
    assign("running_var", p.running_var);
  }
}

inline void save_weights(const Network& net, const std::filesystem::path& path) { write_archive(path, to_archive(net)); }

inline void load_weights(Network& net, const std::filesystem::path& path) { load_into(net, read_archive(path)); }

// ---------------------------------------------------------------------------

struct BuildOptions {
  ArchOptions arch;
  std::optional<std::filesystem::path> pretrained_weights;
  /// VGG11_FCDD without a weight file: random frozen prefix, marked in the spec.
  bool no_pretrain = false;
  std::uint64_t seed = 0;
  /// Required for CUSTOM.
  std::vector<LayerSpec> custom_layers;
  int custom_frozen_prefix = 0;
};

inline Network build_backbone(ArchId arch, Shape3 input, const BuildOptions& opt = {}) {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0)
    throw ValidationError("input shape must be positive");
  BackboneSpec spec;
  switch (arch) {
    case ArchId::FMNIST_CNN: spec = fmnist_cnn(input, opt.arch); break;
    case ArchId::CIFAR_CNN: spec = cifar_cnn(input, opt.arch); break;
    case ArchId::VGG11_FCDD: spec = vgg11_fcdd(input, opt.arch); break;
    case ArchId::CUSTOM:
      spec.arch = ArchId::CUSTOM;
      spec.input_shape = input;
      spec.layers = opt.custom_layers;
      spec.frozen_prefix_len = opt.custom_frozen_prefix;
      break;
  }
  if (arch == ArchId::VGG11_FCDD && !opt.pretrained_weights && !opt.no_pretrain)
    throw ValidationError("VGG11_FCDD requires a pretrained weight file (or explicit --no-pretrain)");
  spec.pretrained = opt.pretrained_weights.has_value();
  Network net(std::move(spec), opt.seed);
  if (opt.pretrained_weights) {
    const std::size_t limit = arch == ArchId::VGG11_FCDD ? std::size_t(kVggFrozenLayers) : SIZE_MAX;
    load_into(net, read_archive(*opt.pretrained_weights), limit);
  }
  return net;
}

}  // namespace fcdd
