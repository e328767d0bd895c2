#include "vflock/dataset.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "vflock/binary_io.hpp"
#include "vflock/error.hpp"

namespace vflock {

namespace {

constexpr std::array<char, 4> kMagic = {'V', 'S', 'F', 'D'};

// The volatile store keeps some vectorising optimisers from folding the
// narrowing and widening conversions into a no-op.
double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return f;
}
Vec3 to_f32(const Vec3& v) { return {to_f32(v.x), to_f32(v.y), to_f32(v.z)}; }

void round_state(std::vector<AgentState>& agents) {
  for (auto& a : agents) {
    a.position = to_f32(a.position);
    a.velocity = to_f32(a.velocity);
    a.yaw = to_f32(a.yaw);
  }
}

std::vector<std::uint8_t> encode_header(const DatasetHeader& h) {
  std::vector<std::uint8_t> out;
  out.reserve(kDatasetHeaderBytes);
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  le::put_u16(out, h.version);
  le::put_u32(out, h.sample_count);
  le::put_u16(out, h.width);
  le::put_u16(out, h.height);
  le::put_f32(out, h.pixel_mean);
  le::put_f32(out, h.pixel_std);
  return out;
}

std::vector<std::uint8_t> encode_record(const Sample& s) {
  std::vector<std::uint8_t> out;
  out.reserve(kSampleRecordBytes);
  le::put_u32(out, s.run_id);
  le::put_u32(out, s.step);
  le::put_u16(out, s.agent_id);
  for (double v : {s.target_v_rey_body.x, s.target_v_rey_body.y, s.target_v_rey_body.z})
    le::put_f32(out, static_cast<float>(v));
  for (double v : {s.position.x, s.position.y, s.position.z}) le::put_f32(out, static_cast<float>(v));
  le::put_f32(out, static_cast<float>(s.yaw));
  out.insert(out.end(), s.image.pixels.begin(), s.image.pixels.end());
  return out;
}

Sample decode_record(std::span<const std::uint8_t> bytes) {
  le::Cursor c(bytes);
  Sample s;
  s.run_id = c.u32();
  s.step = c.u32();
  s.agent_id = c.u16();
  s.target_v_rey_body.x = c.f32();
  s.target_v_rey_body.y = c.f32();
  s.target_v_rey_body.z = c.f32();
  s.position.x = c.f32();
  s.position.y = c.f32();
  s.position.z = c.f32();
  s.yaw = c.f32();
  c.bytes(s.image.pixels);
  return s;
}

}  // namespace

Vec3 sample_cone(const ConeSampler& sampler, Rng& rng) {
  const Vec3 axis = sampler.axis / norm(sampler.axis);
  // Any vector not parallel to the axis seeds the orthonormal frame.
  const Vec3 helper = std::abs(axis.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  Vec3 e1 = cross(axis, helper);
  e1 = e1 / norm(e1);
  const Vec3 e2 = cross(axis, e1);

  const double cos_min = std::cos(sampler.half_angle);
  const double cos_theta = rng.uniform(cos_min, 1.0);
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec3 dir =
      axis * cos_theta + e1 * (sin_theta * std::cos(phi)) + e2 * (sin_theta * std::sin(phi));
  return dir * sampler.speed;
}

Sample to_storage_precision(Sample s) {
  s.target_v_rey_body = to_f32(s.target_v_rey_body);
  s.position = to_f32(s.position);
  s.yaw = to_f32(s.yaw);
  return s;
}

Sample make_sample(std::size_t self_idx, std::span<const AgentState> agents,
                   const GenerationConfig& config, std::uint32_t run_id, std::uint32_t step) {
  const auto cmd = full_command(self_idx, agents, nullptr, config.flock);
  const AgentState& self = agents[self_idx];
  Sample s;
  s.image = render_agent_view(self_idx, agents, config.rig, config.style);
  s.target_v_rey_body = world_to_body(self.yaw, cmd.v_rey);
  s.run_id = run_id;
  s.step = step;
  s.agent_id = static_cast<std::uint16_t>(self.id);
  s.position = self.position;
  s.yaw = self.yaw;
  return to_storage_precision(std::move(s));
}

RunResult generate_run_from(std::uint32_t run_id, std::vector<AgentState> agents,
                            std::span<const Vec3> velocities, const GenerationConfig& config) {
  if (velocities.size() != agents.size())
    throw Error(ErrorKind::InvalidArgument, "one trajectory velocity per agent required");

  const std::vector<std::optional<Vec3>> goals(agents.size(), config.goal());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    agents[i].velocity = velocities[i];
    agents[i].yaw = heading_from_velocity(velocities[i], agents[i].yaw);
  }
  // Poses are kept at storage precision so stored records re-render exactly.
  round_state(agents);

  RunResult result;
  for (int t = 0;; ++t) {
    const auto step_idx = static_cast<std::uint32_t>(t);
    for (std::size_t i = 0; i < agents.size(); ++i)
      result.samples.push_back(make_sample(i, agents, config, run_id, step_idx));

    if (const auto end = check_termination(agents, goals, config.world)) {
      result.outcome = {*end, t};
      break;
    }
    if (t >= config.world.max_steps) {
      result.outcome = {Outcome::MaxSteps, t};
      break;
    }
    agents = step(agents, velocities, config.world);
    round_state(agents);
  }
  return result;
}

RunResult generate_run(std::uint32_t run_id, const GenerationConfig& config, Rng& rng) {
  auto agents = spawn_agents(config.world, config.flock.n_agents, rng);
  const Vec3 goal = config.goal();
  ConeSampler cone;
  cone.axis = norm(goal) > 0.0 ? goal / norm(goal) : Vec3{1, 0, 0};
  cone.half_angle = config.cone_half_angle_deg * std::numbers::pi / 180.0;
  cone.speed = config.cone_speed;

  std::vector<Vec3> velocities;
  velocities.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) velocities.push_back(to_f32(sample_cone(cone, rng)));
  return generate_run_from(run_id, std::move(agents), velocities, config);
}

// ---------------------------------------------------------------------------

DatasetWriter::DatasetWriter(const std::filesystem::path& path, DatasetHeader header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), header_(header) {
  if (!out_) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  header_.sample_count = 0;
  const auto bytes = encode_header(header_);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DatasetWriter::~DatasetWriter() {
  if (!finished_) {
    try {
      finish(header_.pixel_mean, header_.pixel_std);
    } catch (...) {
    }
  }
}

void DatasetWriter::append(const Sample& s) {
  const auto bytes = encode_record(s);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw Error(ErrorKind::Io, "write failed: " + path_.string());
  ++count_;
}

void DatasetWriter::finish(float pixel_mean, float pixel_std) {
  finished_ = true;
  header_.sample_count = count_;
  header_.pixel_mean = pixel_mean;
  header_.pixel_std = pixel_std;
  const auto bytes = encode_header(header_);
  out_.seekp(0);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out_.close();
  if (!out_) throw Error(ErrorKind::Io, "failed to finalize " + path_.string());
}

DatasetReader::DatasetReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorKind::Io, "cannot open " + path.string());

  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot stat " + path.string());

  std::array<std::uint8_t, kDatasetHeaderBytes> raw{};
  in_.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (in_.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError(FormatIssue::Truncated,
                      path.string() + ": truncated header: expected " +
                          std::to_string(kDatasetHeaderBytes) + " bytes, found " +
                          std::to_string(file_size));
  for (std::size_t i = 0; i < kMagic.size(); ++i)
    if (raw[i] != static_cast<std::uint8_t>(kMagic[i]))
      throw FormatError(FormatIssue::BadMagic, path.string() + ": not a VSFD dataset (bad magic)");

  le::Cursor c(std::span<const std::uint8_t>(raw).subspan(4));
  header_.version = c.u16();
  if (header_.version != kDatasetVersion)
    throw FormatError(FormatIssue::Version, path.string() + ": unsupported VSFD version " +
                                                std::to_string(header_.version));
  header_.sample_count = c.u32();
  header_.width = c.u16();
  header_.height = c.u16();
  header_.pixel_mean = c.f32();
  header_.pixel_std = c.f32();
  if (header_.width != kImageWidth || header_.height != kImageHeight)
    throw FormatError(FormatIssue::Shape, path.string() + ": unexpected image dimensions " +
                                              std::to_string(header_.width) + "x" +
                                              std::to_string(header_.height));
  if (!(header_.pixel_std > 0.0f))
    throw FormatError(FormatIssue::Shape, path.string() + ": pixel_std must be positive");

  const std::uint64_t expected =
      kDatasetHeaderBytes + std::uint64_t{header_.sample_count} * kSampleRecordBytes;
  if (file_size != expected)
    throw FormatError(FormatIssue::Truncated, path.string() + ": expected " +
                                                  std::to_string(expected) + " bytes, found " +
                                                  std::to_string(file_size));
}

std::optional<Sample> DatasetReader::next() {
  if (read_ >= header_.sample_count) return std::nullopt;
  std::vector<std::uint8_t> buf(kSampleRecordBytes);
  in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in_.gcount() != static_cast<std::streamsize>(buf.size()))
    throw FormatError(FormatIssue::Truncated, path_.string() + ": truncated record " +
                                                  std::to_string(read_));
  ++read_;
  return decode_record(buf);
}

Dataset read_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  Dataset ds;
  ds.header = reader.header();
  ds.samples.reserve(ds.header.sample_count);
  while (auto s = reader.next()) ds.samples.push_back(std::move(*s));
  return ds;
}

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   std::span<const Sample> samples) {
  DatasetWriter writer(path, header);
  for (const auto& s : samples) writer.append(s);
  writer.finish(header.pixel_mean, header.pixel_std);
}

namespace {

struct PixelHistogram {
  std::array<std::uint64_t, 256> bins{};

  void add(const CubeImage& img) {
    for (auto p : img.pixels) ++bins[p];
  }
  std::pair<double, double> stats() const {
    std::uint64_t n = 0;
    long double sum = 0.0L;
    for (std::size_t v = 0; v < bins.size(); ++v) {
      n += bins[v];
      sum += static_cast<long double>(bins[v]) * v;
    }
    if (n == 0) return {0.0, 1.0};
    const long double mean = sum / n;
    long double var = 0.0L;
    for (std::size_t v = 0; v < bins.size(); ++v) {
      const long double d = static_cast<long double>(v) - mean;
      var += static_cast<long double>(bins[v]) * d * d;
    }
    return {static_cast<double>(mean), static_cast<double>(std::sqrt(var / n))};
  }
};

}  // namespace

std::pair<double, double> pixel_statistics(std::span<const Sample> samples) {
  PixelHistogram h;
  for (const auto& s : samples) h.add(s.image);
  return h.stats();
}

BuildSummary build_dataset(const SplitCounts& counts, const GenerationConfig& config,
                           std::uint64_t seed, const DatasetPaths& paths) {
  if (counts.train < 1 || counts.val < 1 || counts.test < 1)
    throw Error(ErrorKind::InvalidArgument, "every split needs at least one sample");
  config.world.validate();
  config.flock.validate();
  config.style.validate();

  const std::array<std::uint32_t, 3> quota = {counts.train, counts.val, counts.test};
  const std::array<const std::filesystem::path*, 3> out = {&paths.train, &paths.val, &paths.test};

  BuildSummary summary;
  std::uint32_t run_id = 0;
  float mean = 0.0f;
  float stddev = 1.0f;
  for (std::size_t split = 0; split < 3; ++split) {
    DatasetWriter writer(*out[split], DatasetHeader{});
    PixelHistogram hist;
    std::uint64_t run_in_split = 0;
    while (writer.count() < quota[split]) {
      Rng rng(derive_seed(seed, (static_cast<std::uint64_t>(split) << 32) | run_in_split));
      const auto run = generate_run(run_id, config, rng);
      for (const auto& s : run.samples) {
        if (writer.count() >= quota[split]) break;
        writer.append(s);
        if (split == 0) hist.add(s.image);
      }
      ++run_id;
      ++run_in_split;
    }
    summary.runs[split] = static_cast<std::uint32_t>(run_in_split);
    if (split == 0) {
      const auto [m, sd] = hist.stats();
      mean = static_cast<float>(m);
      stddev = static_cast<float>(sd > 0.0 ? sd : 1.0);
    }
    writer.finish(mean, stddev);
    if (split == 0) {
      summary.train_header.sample_count = writer.count();
      summary.train_header.pixel_mean = mean;
      summary.train_header.pixel_std = stddev;
    }
  }
  return summary;
}

}  // namespace vflock
