#include "vflock/nn/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "vflock/binary_io.hpp"
#include "vflock/error.hpp"

namespace vflock::nn {

namespace {

enum class LayerKind : std::uint8_t { Conv = 1, Relu = 2, Flatten = 3, Dropout = 4, Dense = 5 };

constexpr char kMagic[4] = {'V', 'S', 'N', 'N'};
constexpr std::size_t kFixedHeader = 4 + 2 + 12 + 8 + 4;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  std::vector<std::uint8_t> out;
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  le::put_u16(out, kCheckpointVersion);
  const Shape& in = net.input_shape();
  le::put_u32(out, static_cast<std::uint32_t>(in.channels));
  le::put_u32(out, static_cast<std::uint32_t>(in.height));
  le::put_u32(out, static_cast<std::uint32_t>(in.width));
  le::put_f32(out, net.pixel_mean);
  le::put_f32(out, net.pixel_std);
  le::put_u32(out, static_cast<std::uint32_t>(net.layers().size()));

  for (const auto& layer : net.layers()) {
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      le::put_u8(out, static_cast<std::uint8_t>(LayerKind::Conv));
      for (int v : {c->in_channels, c->out_channels, c->kernel_h, c->kernel_w, c->stride, c->pad})
        le::put_u32(out, static_cast<std::uint32_t>(v));
    } else if (std::holds_alternative<Relu>(layer)) {
      le::put_u8(out, static_cast<std::uint8_t>(LayerKind::Relu));
    } else if (std::holds_alternative<Flatten>(layer)) {
      le::put_u8(out, static_cast<std::uint8_t>(LayerKind::Flatten));
    } else if (const auto* d = std::get_if<Dropout>(&layer)) {
      le::put_u8(out, static_cast<std::uint8_t>(LayerKind::Dropout));
      le::put_f32(out, static_cast<float>(d->p));
    } else if (const auto* f = std::get_if<Dense>(&layer)) {
      le::put_u8(out, static_cast<std::uint8_t>(LayerKind::Dense));
      le::put_u32(out, static_cast<std::uint32_t>(f->in_features));
      le::put_u32(out, static_cast<std::uint32_t>(f->out_features));
    }
  }
  for (const auto& p : net.parameters())
    for (Real v : p.value->values()) le::put_f32(out, static_cast<float>(v));
  return out;
}

Network decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFixedHeader)
    throw FormatError(FormatIssue::Truncated, "checkpoint shorter than its fixed header");
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i]))
      throw FormatError(FormatIssue::BadMagic, "not a VSNN checkpoint (bad magic)");

  le::Cursor c(bytes.subspan(4));
  const std::uint16_t version = c.u16();
  if (version != kCheckpointVersion)
    throw FormatError(FormatIssue::Version,
                      "unsupported VSNN version " + std::to_string(version) + " (reader supports " +
                          std::to_string(kCheckpointVersion) + ")");

  // Dimensions beyond this bound cannot come from a valid network.
  constexpr std::uint32_t kMaxExtent = 1u << 20;
  constexpr std::uint64_t kMaxParams = std::uint64_t{1} << 28;
  auto extent = [&](const char* what) {
    const std::uint32_t v = c.u32();
    if (v == 0 || v > kMaxExtent)
      throw FormatError(FormatIssue::Shape, std::string("implausible ") + what + " in layer table");
    return static_cast<int>(v);
  };
  auto need = [&](std::size_t n) {
    if (c.remaining() < n) throw FormatError(FormatIssue::Truncated, "checkpoint layer table truncated");
  };

  Shape in;
  in.channels = extent("input channels");
  in.height = extent("input height");
  in.width = extent("input width");
  const float mean = c.f32();
  const float stddev = c.f32();
  const std::uint32_t layer_count = c.u32();
  if (layer_count > 4096) throw FormatError(FormatIssue::Shape, "implausible layer count");

  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    need(1);
    const auto kind = static_cast<LayerKind>(c.u8());
    switch (kind) {
      case LayerKind::Conv: {
        need(24);
        const int ci = extent("conv in_channels");
        const int co = extent("conv out_channels");
        const int kh = extent("conv kernel_h");
        const int kw = extent("conv kernel_w");
        const int stride = extent("conv stride");
        const std::uint32_t pad = c.u32();
        if (pad > kMaxExtent) throw FormatError(FormatIssue::Shape, "implausible conv padding");
        if (1.0 * ci * co * kh * kw > static_cast<double>(kMaxParams))
          throw FormatError(FormatIssue::Shape, "implausible conv parameter count");
        layers.emplace_back(Conv2d(ci, co, kh, kw, stride, static_cast<int>(pad)));
        break;
      }
      case LayerKind::Relu: layers.emplace_back(Relu{}); break;
      case LayerKind::Flatten: layers.emplace_back(Flatten{}); break;
      case LayerKind::Dropout: {
        need(4);
        layers.emplace_back(Dropout{static_cast<Real>(c.f32())});
        break;
      }
      case LayerKind::Dense: {
        need(8);
        const int fi = extent("dense in_features");
        const int fo = extent("dense out_features");
        if (1.0 * fi * fo > static_cast<double>(kMaxParams))
          throw FormatError(FormatIssue::Shape, "implausible dense parameter count");
        layers.emplace_back(Dense(fi, fo));
        break;
      }
      default:
        throw FormatError(FormatIssue::Shape, "unknown layer kind " +
                                                  std::to_string(static_cast<int>(kind)) +
                                                  " at layer " + std::to_string(i));
    }
  }

  Network net;
  try {
    net = Network(in, std::move(layers));
  } catch (const Error& e) {
    throw FormatError(FormatIssue::Shape, std::string("inconsistent layer table: ") + e.what());
  }
  net.pixel_mean = mean;
  net.pixel_std = stddev;

  const std::size_t expected = net.parameter_count() * 4;
  if (c.remaining() < expected)
    throw FormatError(FormatIssue::Truncated, "parameter block holds " + std::to_string(c.remaining()) +
                                                  " bytes, layer table implies " + std::to_string(expected));
  if (c.remaining() > expected)
    throw FormatError(FormatIssue::Shape, "parameter block holds " + std::to_string(c.remaining()) +
                                              " bytes, layer table implies " + std::to_string(expected));
  for (auto& p : net.parameters())
    for (auto& v : p.value->values()) v = static_cast<Real>(c.f32());
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.issue(), path.string() + ": " + e.what());
  }
}

}  // namespace vflock::nn
