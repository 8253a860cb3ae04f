#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "vdna/error.hpp"

namespace vdna {

struct LayerInfo {
  std::string name;
  std::uint32_t neurons = 0;

  friend bool operator==(const LayerInfo&, const LayerInfo&) = default;
};

using LayerTable = std::vector<LayerInfo>;

/// Position of one neuron, both as (layer, neuron-in-layer) and as its index
/// in the flattened layer-major neuron order.
struct NeuronId {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  std::size_t flat = 0;

  friend bool operator==(const NeuronId&, const NeuronId&) = default;
};

inline std::size_t total_neurons(const LayerTable& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.neurons;
  return n;
}

/// offsets[l] is the flat index of neuron 0 of layer l; offsets.back() is the total.
inline std::vector<std::size_t> layer_offsets(const LayerTable& layers) {
  std::vector<std::size_t> offsets(layers.size() + 1, 0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l + 1] = offsets[l] + layers[l].neurons;
  }
  return offsets;
}

inline NeuronId neuron_at(const LayerTable& layers, std::size_t flat) {
  std::size_t base = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (flat < base + layers[l].neurons) return {l, flat - base, flat};
    base += layers[l].neurons;
  }
  throw ArgumentError("neuron index " + std::to_string(flat) +
                      " out of range (" + std::to_string(base) + " neurons)");
}

inline void validate_layers(const LayerTable& layers) {
  std::unordered_set<std::string> seen;
  for (const auto& l : layers) {
    if (l.neurons < 1) {
      throw FormatError("layer '" + l.name + "' has no neurons");
    }
    if (!seen.insert(l.name).second) {
      throw FormatError("duplicate layer name '" + l.name + "'");
    }
  }
}

inline nlohmann::json layers_to_json(const LayerTable& layers) {
  auto arr = nlohmann::json::array();
  for (const auto& l : layers) {
    arr.push_back({{"name", l.name}, {"neurons", l.neurons}});
  }
  return arr;
}

inline LayerTable layers_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw FormatError("'layers' must be an array");
  LayerTable layers;
  for (const auto& item : arr) {
    try {
      const auto neurons = item.at("neurons").get<std::int64_t>();
      if (neurons < 1 || neurons > UINT32_MAX) {
        throw FormatError("layer '" + item.at("name").get<std::string>() +
                          "' must have a positive neuron count");
      }
      layers.push_back({item.at("name").get<std::string>(),
                        static_cast<std::uint32_t>(neurons)});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed layer entry: ") + e.what());
    }
  }
  validate_layers(layers);
  return layers;
}

}  // namespace vdna
