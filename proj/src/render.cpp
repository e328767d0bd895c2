#include "vflock/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "vflock/error.hpp"

namespace vflock {

CameraRig CameraRig::standard() {
  // Body frame: x forward, y left, z up. right x down == axis for every face.
  CameraRig rig;
  rig.faces = {{
      {{1, 0, 0}, {0, -1, 0}, {0, 0, -1}},   // front
      {{0, -1, 0}, {-1, 0, 0}, {0, 0, -1}},  // right
      {{-1, 0, 0}, {0, 1, 0}, {0, 0, -1}},   // back
      {{0, 1, 0}, {1, 0, 0}, {0, 0, -1}},    // left
      {{0, 0, 1}, {0, 1, 0}, {-1, 0, 0}},    // top, image up = forward
      {{0, 0, -1}, {0, -1, 0}, {-1, 0, 0}},  // bottom, image up = forward
  }};
  return rig;
}

double CameraRig::half_extent() const {
  return std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
}

void RenderStyle::validate() const {
  if (!(agent_radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "agent_radius must be positive");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(agent_intensity) || !in_unit(background_intensity))
    throw Error(ErrorKind::InvalidArgument, "render intensities must lie in [0, 1]");
  if (!(attenuation_range > 0.0))
    throw Error(ErrorKind::InvalidArgument, "attenuation_range must be positive");
}

Vec3 pixel_ray(const CameraRig& rig, int face, double u, double v) {
  if (face < 0 || face >= kFaceCount)
    throw Error(ErrorKind::InvalidArgument, "face index out of range");
  if (!(u >= 0.0 && u < kFaceSize && v >= 0.0 && v < kFaceSize))
    throw Error(ErrorKind::InvalidArgument, "pixel coordinate out of range");
  constexpr double centre = 0.5 * (kFaceSize - 1);
  constexpr double half = 0.5 * kFaceSize;
  const double t = rig.half_extent();
  const CameraFace& f = rig.faces[static_cast<std::size_t>(face)];
  const Vec3 d = f.axis + f.right * ((u - centre) / half * t) + f.down * ((v - centre) / half * t);
  return d / norm(d);
}

std::uint8_t quantize(double intensity) {
  const double clamped = std::clamp(intensity, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

namespace {

struct Sphere {
  Vec3 centre;  // body frame, relative to the observer's centre of gravity
};

bool finite_state(const AgentState& a) {
  return is_finite(a.position) && is_finite(a.velocity) && std::isfinite(a.yaw);
}

}  // namespace

CubeImage render_view(const AgentState& observer, std::span<const AgentState> others,
                      const CameraRig& rig, const RenderStyle& style) {
  if (!finite_state(observer)) throw Error(ErrorKind::InvalidArgument, "non-finite observer state");

  std::vector<Sphere> spheres;
  spheres.reserve(others.size());
  for (const auto& o : others) {
    if (!finite_state(o)) throw Error(ErrorKind::InvalidArgument, "non-finite agent state");
    spheres.push_back({world_to_body(observer.yaw, o.position - observer.position)});
  }

  const double r2 = style.agent_radius * style.agent_radius;
  CubeImage img;
  for (int face = 0; face < kFaceCount; ++face) {
    const Vec3 cam = rig.faces[static_cast<std::size_t>(face)].axis * rig.mount_offset;

    // Per-face sphere data relative to this camera centre.
    std::vector<Vec3> rel(spheres.size());
    std::vector<double> c_term(spheres.size());
    for (std::size_t s = 0; s < spheres.size(); ++s) {
      rel[s] = spheres[s].centre - cam;
      c_term[s] = squared_norm(rel[s]) - r2;
    }

    for (int v = 0; v < kFaceSize; ++v) {
      for (int u = 0; u < kFaceSize; ++u) {
        const Vec3 d = pixel_ray(rig, face, u, v);
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < rel.size(); ++s) {
          if (c_term[s] <= 0.0) {
            // Camera centre inside the sphere.
            nearest = 0.0;
            break;
          }
          const double b = dot(d, rel[s]);
          if (b <= 0.0) continue;
          const double disc = b * b - c_term[s];
          if (disc < 0.0) continue;
          const double t = b - std::sqrt(disc);
          if (t < nearest) nearest = t;
        }

        double bg = style.background_intensity;
        if (style.horizon_gradient) bg = std::clamp(bg + 0.15 * d.z, 0.0, 1.0);

        double value = bg;
        if (std::isfinite(nearest)) {
          value = style.agent_intensity;
          if (style.shading == Shading::DistanceAttenuated) {
            const double w = std::min(1.0, nearest / style.attenuation_range);
            value = style.agent_intensity + (bg - style.agent_intensity) * w;
          }
        }
        img.at(v, face * kFaceSize + u) = quantize(value);
      }
    }
  }
  return img;
}

CubeImage render_agent_view(std::size_t self_idx, std::span<const AgentState> agents,
                            const CameraRig& rig, const RenderStyle& style) {
  std::vector<AgentState> others;
  others.reserve(agents.size());
  for (std::size_t j = 0; j < agents.size(); ++j)
    if (j != self_idx) others.push_back(agents[j]);
  return render_view(agents[self_idx], others, rig, style);
}

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, int width,
               int height) {
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error(ErrorKind::InvalidArgument, "PGM pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255 || width <= 0 || height <= 0)
    throw FormatError(FormatIssue::BadMagic, path.string() + ": not an 8-bit binary PGM");
  in.get();  // single whitespace before the raster
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(pixels.size()))
    throw FormatError(FormatIssue::Truncated, path.string() + ": truncated PGM raster");
  return pixels;
}

void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width,
               int height) {
  if (rgb.size() != 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error(ErrorKind::InvalidArgument, "PPM byte count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace vflock
