#pragma once

// Supervised sample generation along randomized linear trajectories and the
// VSFD binary dataset format.
//
// VSFD layout, all multi-byte fields little-endian:
//   header  magic "VSFD" | u16 version=1 | u32 sample_count | u16 width=384 |
//           u16 height=64 | f32 pixel_mean | f32 pixel_std          (22 bytes)
//   record  u32 run_id | u32 step | u16 agent_id | f32 target[3] |
//           f32 position[3] | f32 yaw | u8 image[64*384]        (24614 bytes)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vflock/flocking.hpp"
#include "vflock/render.hpp"
#include "vflock/rng.hpp"
#include "vflock/world.hpp"

namespace vflock {

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 22;
inline constexpr std::size_t kSampleRecordBytes = 4 + 4 + 2 + 12 + 12 + 4 + kImageBytes;

/// Targets, positions and yaw are held at 32-bit precision so that an
/// in-memory sample and its stored record are identical.
struct Sample {
  CubeImage image;
  Vec3 target_v_rey_body;
  std::uint32_t run_id = 0;
  std::uint32_t step = 0;
  std::uint16_t agent_id = 0;
  Vec3 position;
  double yaw = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetHeader {
  std::uint16_t version = kDatasetVersion;
  std::uint32_t sample_count = 0;
  std::uint16_t width = kImageWidth;
  std::uint16_t height = kImageHeight;
  float pixel_mean = 0.0f;
  float pixel_std = 1.0f;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct ConeSampler {
  Vec3 axis{1.0, 0.0, 0.0};
  double half_angle = 15.0 * 3.14159265358979323846 / 180.0;
  double speed = 2.0;
};

/// Velocity of norm `speed` drawn uniformly over the spherical cap around
/// `axis` (cos(theta) uniform in [cos(half_angle), 1], azimuth uniform).
Vec3 sample_cone(const ConeSampler& sampler, Rng& rng);

struct GenerationConfig {
  WorldConfig world;
  FlockParams flock;
  CameraRig rig = CameraRig::standard();
  RenderStyle style;
  double goal_distance = 15.0;  // m along +x
  double cone_half_angle_deg = 15.0;
  double cone_speed = 2.0;  // m/s

  Vec3 goal() const { return {goal_distance, 0.0, 0.0}; }
};

/// Builds the training sample of agent `self_idx` from the current true
/// state: its rendered view and its body-frame Reynolds command.
Sample make_sample(std::size_t self_idx, std::span<const AgentState> agents,
                   const GenerationConfig& config, std::uint32_t run_id, std::uint32_t step);

struct RunResult {
  std::vector<Sample> samples;
  RunOutcome outcome;
};

/// One randomized-trajectory run. Agents follow constant cone-sampled
/// velocities; samples are recorded at every step before the move.
RunResult generate_run(std::uint32_t run_id, const GenerationConfig& config, Rng& rng);

/// Same as generate_run but starting from caller-provided agents and
/// per-agent constant velocities.
RunResult generate_run_from(std::uint32_t run_id, std::vector<AgentState> agents,
                            std::span<const Vec3> velocities, const GenerationConfig& config);

/// Rounds a sample's real fields to 32-bit precision.
Sample to_storage_precision(Sample s);

class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, DatasetHeader header);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const Sample& s);
  /// Patches the header (count and statistics) and closes the file.
  void finish(float pixel_mean, float pixel_std);
  std::uint32_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  DatasetHeader header_;
  std::uint32_t count_ = 0;
  bool finished_ = false;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);

  const DatasetHeader& header() const { return header_; }
  /// Next sample in stored order, or nullopt after the last one.
  std::optional<Sample> next();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  DatasetHeader header_;
  std::uint32_t read_ = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   std::span<const Sample> samples);

struct DatasetPaths {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
};

struct SplitCounts {
  std::uint32_t train = 20'000;
  std::uint32_t val = 2'000;
  std::uint32_t test = 2'000;
};

struct BuildSummary {
  DatasetHeader train_header;
  std::uint32_t runs[3] = {0, 0, 0};
};

/// Generates the three splits from disjoint runs. Pixel statistics of the
/// training split are written into all three headers.
BuildSummary build_dataset(const SplitCounts& counts, const GenerationConfig& config,
                           std::uint64_t seed, const DatasetPaths& paths);

/// Mean and population standard deviation over every pixel of `samples`.
std::pair<double, double> pixel_statistics(std::span<const Sample> samples);

}  // namespace vflock
