#pragma once

// VSNN checkpoint format, little-endian:
//   "VSNN" | u16 version=1 | u32 in_channels | u32 in_height | u32 in_width |
//   f32 pixel_mean | f32 pixel_std | u32 layer_count |
//   layer table: u8 kind, then kind-specific fields
//     conv    u32 in, out, kernel_h, kernel_w, stride, pad
//     dense   u32 in, out
//     dropout f32 p
//     relu, flatten: no fields
//   raw f32 parameters, per parametric layer: weights then biases.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vflock/nn/network.hpp"

namespace vflock::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Network& net);
/// Throws FormatError with BadMagic, Version, Shape or Truncated.
Network decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace vflock::nn
