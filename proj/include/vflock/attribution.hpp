#pragma once

// Gradient-weighted class activation maps over the last strided convolution.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vflock/nn/network.hpp"
#include "vflock/render.hpp"

namespace vflock {

enum class SaliencyTarget { Norm, X, Y, Z };

struct SaliencyMap {
  int raw_height = 0;
  int raw_width = 0;
  std::vector<double> raw;  // raw_height x raw_width, non-negative
  int height = 0;
  int width = 0;
  std::vector<double> upsampled;  // height x width, max-normalised to [0, 1]
};

/// `image` is one standardised sample (1 x C x H x W). The scalar being
/// attributed is the Euclidean norm of the output or one of its components.
SaliencyMap grad_cam(const nn::Network& net, const nn::Tensor& image,
                     SaliencyTarget target = SaliencyTarget::Norm);

/// Convenience overload that standardises with the network's statistics.
SaliencyMap grad_cam(const nn::Network& net, const CubeImage& image,
                     SaliencyTarget target = SaliencyTarget::Norm);

/// Bilinear resize with cell-centre alignment and edge clamping.
std::vector<double> upsample_bilinear(const std::vector<double>& src, int src_h, int src_w, int dst_h,
                                      int dst_w);

/// Red-blue colour of a map value in [0, 1]: 1 is red, 0 is blue.
std::array<std::uint8_t, 3> saliency_color(double value);

/// Per-pixel blend (1 - alpha) * gray + alpha * colormap, as interleaved RGB.
std::vector<std::uint8_t> blend_overlay(const SaliencyMap& map, std::span<const std::uint8_t> gray,
                                        double alpha);

void write_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace vflock
