#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vflock/flocking.hpp"

namespace vflock {

inline constexpr int kFaceSize = 64;
inline constexpr int kFaceCount = 6;
inline constexpr int kImageHeight = kFaceSize;
inline constexpr int kImageWidth = kFaceSize * kFaceCount;
inline constexpr std::size_t kImageBytes = std::size_t{kImageWidth} * kImageHeight;

/// Concatenation order, left to right. Part of the dataset format.
enum class Face : int { Front = 0, Right = 1, Back = 2, Left = 3, Top = 4, Bottom = 5 };

struct CameraFace {
  Vec3 axis;   // optical axis, body frame
  Vec3 right;  // image +u direction
  Vec3 down;   // image +v direction
};

struct CameraRig {
  std::array<CameraFace, kFaceCount> faces;
  double mount_offset = 0.15;  // m along each optical axis
  double fov_deg = 100.0;      // horizontal and vertical

  static CameraRig standard();
  double half_extent() const;  // tan(fov/2)
};

enum class Shading { Flat, DistanceAttenuated };

struct RenderStyle {
  double agent_radius = 0.25;
  double agent_intensity = 0.2;
  double background_intensity = 0.8;
  Shading shading = Shading::Flat;
  // Distance over which attenuated shading fades an agent into the background.
  double attenuation_range = 10.0;
  bool horizon_gradient = false;

  void validate() const;
};

/// 64 x 384 grayscale visual field, row-major.
struct CubeImage {
  std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kImageBytes, 0);

  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * kImageWidth + col];
  }
  std::uint8_t& at(int row, int col) {
    return pixels[static_cast<std::size_t>(row) * kImageWidth + col];
  }
  friend bool operator==(const CubeImage&, const CubeImage&) = default;
};

/// Unit ray through face-local pixel coordinates. Pixel index i has its centre
/// at coordinate i; the optical axis passes through (31.5, 31.5).
Vec3 pixel_ray(const CameraRig& rig, int face, double u, double v);

CubeImage render_view(const AgentState& observer, std::span<const AgentState> others,
                      const CameraRig& rig, const RenderStyle& style);

/// Renders agent `self_idx` seeing every other agent of the flock.
CubeImage render_agent_view(std::size_t self_idx, std::span<const AgentState> agents,
                            const CameraRig& rig, const RenderStyle& style);

/// 8-bit quantisation of an intensity in [0, 1], rounding half away from zero.
std::uint8_t quantize(double intensity);

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, int width,
               int height);
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height);
void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width,
               int height);

}  // namespace vflock
