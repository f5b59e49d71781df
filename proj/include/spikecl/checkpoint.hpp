#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spikecl/model.hpp"
#include "spikecl/snn.hpp"

namespace spikecl {

// Checkpoint container, version 1 (all integers little-endian):
//   8 bytes  magic "SPKCLCKP"
//   u32      format version (1)
//   u32      header length H
//   H bytes  UTF-8 JSON header: kind, spec, input, seed, loss_log, tensors
//            [{name, shape}], and for spiking networks a conversion object
//   payload  every tensor in header order as IEEE-754 binary64 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<ConversionParams> conversion;
};

std::vector<std::uint8_t> serialize_checkpoint(const Model& model,
                                               const ConversionParams* conversion = nullptr);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// A spiking network is stored as its source model plus conversion parameters.
void save_network(const SpikingNetwork& net, const std::filesystem::path& path);
SpikingNetwork load_network(const std::filesystem::path& path);

}  // namespace spikecl
