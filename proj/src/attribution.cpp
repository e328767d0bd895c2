#include "vflock/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vflock/error.hpp"
#include "vflock/format.hpp"
#include "vflock/nn/train.hpp"

namespace vflock {

SaliencyMap grad_cam(const nn::Network& net, const nn::Tensor& image, SaliencyTarget target) {
  if (image.rank() != 4 || image.dim(0) != 1)
    throw Error(ErrorKind::InvalidArgument, "grad_cam expects a single 1xCxHxW sample");

  const std::size_t conv = nn::attribution_layer(net);
  // Feature maps are taken after the block's activation when it has one.
  std::size_t act = conv + 1;
  if (act < net.layers().size() && std::holds_alternative<nn::Relu>(net.layers()[act])) ++act;

  nn::Trace trace;
  const nn::Tensor y = nn::forward(net, image, nn::Mode::Eval, nullptr, &trace);

  nn::Tensor dy(y.shape());
  switch (target) {
    case SaliencyTarget::Norm: {
      double n2 = 0.0;
      for (auto v : y.values()) n2 += static_cast<double>(v) * static_cast<double>(v);
      const double n = std::sqrt(n2);
      if (n > 0.0)
        for (std::size_t k = 0; k < y.size(); ++k) dy[k] = static_cast<nn::Real>(y[k] / n);
      break;
    }
    case SaliencyTarget::X: dy[0] = 1; break;
    case SaliencyTarget::Y: dy[1] = 1; break;
    case SaliencyTarget::Z: dy[2] = 1; break;
  }

  const nn::Tensor grad = *nn::backward(net, trace, dy, nullptr, act, true);
  const nn::Tensor& maps = trace.activations[act];
  const nn::Shape shape = net.output_shape(act - 1);
  const std::size_t cells = static_cast<std::size_t>(shape.height) * shape.width;

  SaliencyMap out;
  out.raw_height = shape.height;
  out.raw_width = shape.width;
  out.raw.assign(cells, 0.0);
  for (int k = 0; k < shape.channels; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * cells;
    double weight = 0.0;
    for (std::size_t c = 0; c < cells; ++c) weight += grad[base + c];
    weight /= static_cast<double>(cells);
    for (std::size_t c = 0; c < cells; ++c) out.raw[c] += weight * maps[base + c];
  }
  for (double& v : out.raw) v = std::max(v, 0.0);

  const auto& in = net.input_shape();
  out.height = in.height;
  out.width = in.width;
  out.upsampled = upsample_bilinear(out.raw, out.raw_height, out.raw_width, in.height, in.width);
  const double peak = *std::max_element(out.upsampled.begin(), out.upsampled.end());
  if (peak > 0.0)
    for (double& v : out.upsampled) v /= peak;
  return out;
}

SaliencyMap grad_cam(const nn::Network& net, const CubeImage& image, SaliencyTarget target) {
  if (!(net.pixel_std > 0.0f))
    throw Error(ErrorKind::Config, "network carries no standardisation statistics");
  nn::Tensor x({1, 1, kImageHeight, kImageWidth});
  nn::standardize(image.pixels, net.pixel_mean, net.pixel_std, x.values());
  return grad_cam(net, x, target);
}

std::vector<double> upsample_bilinear(const std::vector<double>& src, int src_h, int src_w, int dst_h,
                                      int dst_w) {
  std::vector<double> dst(static_cast<std::size_t>(dst_h) * dst_w);
  const double sy_scale = static_cast<double>(src_h) / dst_h;
  const double sx_scale = static_cast<double>(src_w) / dst_w;
  for (int r = 0; r < dst_h; ++r) {
    const double sy = std::clamp((r + 0.5) * sy_scale - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double fy = sy - y0;
    for (int c = 0; c < dst_w; ++c) {
      const double sx = std::clamp((c + 0.5) * sx_scale - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double fx = sx - x0;
      auto at = [&](int y, int x) { return src[static_cast<std::size_t>(y) * src_w + x]; };
      const double top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
      const double bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
      dst[static_cast<std::size_t>(r) * dst_w + c] = top * (1.0 - fy) + bottom * fy;
    }
  }
  return dst;
}

std::array<std::uint8_t, 3> saliency_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return {quantize(v), 0, quantize(1.0 - v)};
}

std::vector<std::uint8_t> blend_overlay(const SaliencyMap& map, std::span<const std::uint8_t> gray,
                                        double alpha) {
  if (gray.size() != map.upsampled.size())
    throw Error(ErrorKind::InvalidArgument, "overlay image and saliency map differ in size");
  const double a = std::clamp(alpha, 0.0, 1.0);
  std::vector<std::uint8_t> rgb(3 * gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const auto color = saliency_color(map.upsampled[i]);
    for (int ch = 0; ch < 3; ++ch) {
      const double mixed = (1.0 - a) * gray[i] + a * color[static_cast<std::size_t>(ch)];
      rgb[3 * i + static_cast<std::size_t>(ch)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(mixed, 0.0, 255.0)));
    }
  }
  return rgb;
}

void write_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  for (int r = 0; r < map.raw_height; ++r) {
    for (int c = 0; c < map.raw_width; ++c) {
      if (c > 0) out << ',';
      out << fmt_real(map.raw[static_cast<std::size_t>(r) * map.raw_width + c]);
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace vflock
