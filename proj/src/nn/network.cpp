#include "vflock/nn/network.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "vflock/error.hpp"

namespace vflock::nn {

namespace {

using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Error shape_error(const std::string& what) { return Error(ErrorKind::InvalidArgument, what); }

// Unrolls the receptive fields of one sample into a (C*kh*kw) x (Ho*Wo) matrix.
void im2col(const Real* x, const Shape& in, const Conv2d& conv, const Shape& out, Real* cols) {
  const int hw_out = out.height * out.width;
  for (int c = 0; c < in.channels; ++c) {
    const Real* plane = x + static_cast<std::size_t>(c) * in.height * in.width;
    for (int ki = 0; ki < conv.kernel_h; ++ki) {
      for (int kj = 0; kj < conv.kernel_w; ++kj) {
        Real* row = cols + static_cast<std::size_t>((c * conv.kernel_h + ki) * conv.kernel_w + kj) * hw_out;
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * conv.stride - conv.pad + ki;
          Real* dst = row + static_cast<std::size_t>(oy) * out.width;
          if (iy < 0 || iy >= in.height) {
            std::fill(dst, dst + out.width, Real{0});
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * in.width;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * conv.stride - conv.pad + kj;
            dst[ox] = (ix >= 0 && ix < in.width) ? src[ix] : Real{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
void col2im(const Real* cols, const Shape& in, const Conv2d& conv, const Shape& out, Real* dx) {
  const int hw_out = out.height * out.width;
  for (int c = 0; c < in.channels; ++c) {
    Real* plane = dx + static_cast<std::size_t>(c) * in.height * in.width;
    for (int ki = 0; ki < conv.kernel_h; ++ki) {
      for (int kj = 0; kj < conv.kernel_w; ++kj) {
        const Real* row =
            cols + static_cast<std::size_t>((c * conv.kernel_h + ki) * conv.kernel_w + kj) * hw_out;
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * conv.stride - conv.pad + ki;
          if (iy < 0 || iy >= in.height) continue;
          const Real* src = row + static_cast<std::size_t>(oy) * out.width;
          Real* dst = plane + static_cast<std::size_t>(iy) * in.width;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * conv.stride - conv.pad + kj;
            if (ix >= 0 && ix < in.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Conv2d& conv, const Tensor& x, const Shape& in, const Shape& out) {
  const int n = x.dim(0);
  const int k = conv.fan_in();
  const int hw = out.height * out.width;
  Tensor y({n, out.channels, out.height, out.width});
  AlignedVector<Real> cols(static_cast<std::size_t>(k) * hw);
  const ConstMatrixMap w(conv.weight.data(), conv.out_channels, k);
  const Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> b(conv.bias.data(), conv.out_channels);
  for (int s = 0; s < n; ++s) {
    im2col(x.data() + static_cast<std::size_t>(s) * in.size(), in, conv, out, cols.data());
    MatrixMap ys(y.data() + static_cast<std::size_t>(s) * out.size(), conv.out_channels, hw);
    ys.noalias() = w * ConstMatrixMap(cols.data(), k, hw);
    ys.colwise() += b;
  }
  return y;
}

Tensor conv_backward(const Conv2d& conv, const Tensor& x, const Tensor& dy, const Shape& in,
                     const Shape& out, Tensor* dw, Tensor* db, bool want_dx) {
  const int n = x.dim(0);
  const int k = conv.fan_in();
  const int hw = out.height * out.width;
  Tensor dx;
  if (want_dx) dx = Tensor({n, in.channels, in.height, in.width});
  AlignedVector<Real> cols(static_cast<std::size_t>(k) * hw);
  AlignedVector<Real> dcols(want_dx ? cols.size() : 0);
  const ConstMatrixMap w(conv.weight.data(), conv.out_channels, k);
  for (int s = 0; s < n; ++s) {
    const ConstMatrixMap dys(dy.data() + static_cast<std::size_t>(s) * out.size(), conv.out_channels, hw);
    if (dw != nullptr) {
      im2col(x.data() + static_cast<std::size_t>(s) * in.size(), in, conv, out, cols.data());
      MatrixMap(dw->data(), conv.out_channels, k).noalias() +=
          dys * ConstMatrixMap(cols.data(), k, hw).transpose();
      Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>(db->data(), conv.out_channels) +=
          dys.rowwise().sum();
    }
    if (want_dx) {
      MatrixMap(dcols.data(), k, hw).noalias() = w.transpose() * dys;
      col2im(dcols.data(), in, conv, out, dx.data() + static_cast<std::size_t>(s) * in.size());
    }
  }
  return dx;
}

}  // namespace

// ---------------------------------------------------------------------------

void Tensor::reshape(std::vector<int> shape) {
  if (count(shape) != data_.size()) throw shape_error("reshape changes element count");
  shape_ = std::move(shape);
}

bool Tensor::all_finite() const {
  for (Real v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Conv2d::Conv2d(int in, int out, int kh, int kw, int stride_, int pad_)
    : in_channels(in),
      out_channels(out),
      kernel_h(kh),
      kernel_w(kw),
      stride(stride_),
      pad(pad_),
      weight({out, in * kh * kw}),
      bias({out}) {}

Shape Conv2d::output_shape(const Shape& in) const {
  return {out_channels, (in.height + 2 * pad - kernel_h) / stride + 1,
          (in.width + 2 * pad - kernel_w) / stride + 1};
}

Dense::Dense(int in, int out) : in_features(in), out_features(out), weight({out, in}), bias({out}) {}

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2d& c) {
                          return "conv" + std::to_string(c.kernel_h) + "x" +
                                 std::to_string(c.kernel_w) + "/s" + std::to_string(c.stride) +
                                 "(" + std::to_string(c.in_channels) + "->" +
                                 std::to_string(c.out_channels) + ")";
                        },
                        [](const Relu&) { return std::string("relu"); },
                        [](const Flatten&) { return std::string("flatten"); },
                        [](const Dropout&) { return std::string("dropout"); },
                        [](const Dense& d) {
                          return "dense(" + std::to_string(d.in_features) + "->" +
                                 std::to_string(d.out_features) + ")";
                        },
                    },
                    layer);
}

Network::Network(Shape input, std::vector<Layer> layers) : input_(input), layers_(std::move(layers)) {
  if (input_.channels < 1 || input_.height < 1 || input_.width < 1)
    throw shape_error("input shape must be positive");
  Shape cur = input_;
  bool flat = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + " (" + layer_name(layers_[i]) + "): ";
    std::visit(Overloaded{
                   [&](const Conv2d& c) {
                     if (flat) throw shape_error(where + "convolution after flatten");
                     if (c.in_channels != cur.channels)
                       throw shape_error(where + "expects " + std::to_string(c.in_channels) +
                                         " channels, got " + std::to_string(cur.channels));
                     if (c.kernel_h < 1 || c.kernel_w < 1 || c.stride < 1 || c.pad < 0 ||
                         c.out_channels < 1)
                       throw shape_error(where + "invalid convolution geometry");
                     if (c.weight.size() != static_cast<std::size_t>(c.out_channels) * c.fan_in() ||
                         c.bias.size() != static_cast<std::size_t>(c.out_channels))
                       throw shape_error(where + "parameter tensor size mismatch");
                     cur = c.output_shape(cur);
                     if (cur.height < 1 || cur.width < 1) throw shape_error(where + "empty output");
                   },
                   [&](const Relu&) {},
                   [&](const Flatten&) {
                     cur = {static_cast<int>(cur.size()), 1, 1};
                     flat = true;
                   },
                   [&](const Dropout& d) {
                     if (!(d.p >= 0 && d.p < 1)) throw shape_error(where + "dropout p must be in [0,1)");
                   },
                   [&](const Dense& d) {
                     if (!flat) throw shape_error(where + "dense layer requires flatten first");
                     if (d.in_features != cur.channels)
                       throw shape_error(where + "expects " + std::to_string(d.in_features) +
                                         " features, got " + std::to_string(cur.channels));
                     if (d.weight.size() !=
                             static_cast<std::size_t>(d.out_features) * d.in_features ||
                         d.bias.size() != static_cast<std::size_t>(d.out_features))
                       throw shape_error(where + "parameter tensor size mismatch");
                     cur = {d.out_features, 1, 1};
                   },
               },
               layers_[i]);
    shapes_.push_back(cur);
  }
}

int Network::output_size() const {
  return static_cast<int>(shapes_.empty() ? input_.size() : shapes_.back().size());
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* c = std::get_if<Conv2d>(&layers_[i])) {
      out.push_back({&c->weight, i, false});
      out.push_back({&c->bias, i, true});
    } else if (auto* d = std::get_if<Dense>(&layers_[i])) {
      out.push_back({&d->weight, i, false});
      out.push_back({&d->bias, i, true});
    }
  }
  return out;
}

std::vector<ConstParamRef> Network::parameters() const {
  std::vector<ConstParamRef> out;
  for (const auto& p : const_cast<Network*>(this)->parameters())
    out.push_back({p.value, p.layer, p.is_bias});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value->size();
  return n;
}

bool operator==(const Network& a, const Network& b) {
  return a.input_ == b.input_ && a.layers_ == b.layers_ && a.pixel_mean == b.pixel_mean &&
         a.pixel_std == b.pixel_std;
}

Network default_network(double dropout) {
  std::vector<Layer> layers;
  layers.emplace_back(Conv2d(1, 8, 5, 5, 2, 2));
  layers.emplace_back(Relu{});
  layers.emplace_back(Conv2d(8, 16, 3, 3, 2, 1));
  layers.emplace_back(Relu{});
  layers.emplace_back(Conv2d(16, 16, 3, 3, 2, 1));
  layers.emplace_back(Relu{});
  layers.emplace_back(Conv2d(16, 32, 3, 3, 2, 1));
  layers.emplace_back(Relu{});
  layers.emplace_back(Conv2d(32, 32, 3, 3, 1, 1));
  layers.emplace_back(Relu{});
  layers.emplace_back(Flatten{});
  layers.emplace_back(Dropout{static_cast<Real>(dropout)});
  layers.emplace_back(Dense(32 * 4 * 24, 3));
  Network net({1, 64, 384}, std::move(layers));

  const Shape maps = net.output_shape(attribution_layer(net));
  if (maps.height != 4 || maps.width != 24)
    throw Error(ErrorKind::Config, "attribution layer output is " + std::to_string(maps.height) +
                                       "x" + std::to_string(maps.width) + ", expected 4x24");
  if (net.output_size() != 3) throw Error(ErrorKind::Config, "network output must be 3-dimensional");
  return net;
}

std::size_t attribution_layer(const Network& net) {
  const auto& layers = net.layers();
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (const auto* c = std::get_if<Conv2d>(&layers[i]); c && c->stride > 1) return i;
  }
  throw Error(ErrorKind::Config, "network has no strided convolution to attribute");
}

void init_weights(Network& net, Rng& rng) {
  for (auto& layer : net.layers()) {
    Tensor* w = nullptr;
    Tensor* b = nullptr;
    int fan_in = 0;
    if (auto* c = std::get_if<Conv2d>(&layer)) {
      w = &c->weight;
      b = &c->bias;
      fan_in = c->fan_in();
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      w = &d->weight;
      b = &d->bias;
      fan_in = d->in_features;
    } else {
      continue;
    }
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : w->values()) {
      double z;
      do {
        z = rng.normal();
      } while (std::abs(z) > 2.0);
      v = static_cast<Real>(z * stddev);
    }
    b->fill(Real{0});
  }
}

Tensor forward(const Network& net, const Tensor& images, Mode mode, Rng* rng, Trace* trace) {
  const Shape& in = net.input_shape();
  if (images.rank() != 4 || images.dim(1) != in.channels || images.dim(2) != in.height ||
      images.dim(3) != in.width)
    throw shape_error("forward: input batch does not match network input shape");
  if (mode == Mode::Train && rng == nullptr) {
    for (const auto& l : net.layers())
      if (std::holds_alternative<Dropout>(l)) throw shape_error("train-mode dropout needs an rng");
  }

  const int n = images.dim(0);
  if (trace != nullptr) {
    trace->activations.clear();
    trace->masks.clear();
    trace->activations.push_back(images);
  }

  Tensor cur = images;
  Shape cur_shape = in;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Tensor mask;
    const Shape& next_shape = net.output_shape(i);
    Tensor next = std::visit(
        Overloaded{
            [&](const Conv2d& c) { return conv_forward(c, cur, cur_shape, next_shape); },
            [&](const Relu&) {
              Tensor y = cur;
              for (auto& v : y.values()) v = v > Real{0} ? v : Real{0};
              return y;
            },
            [&](const Flatten&) {
              Tensor y = cur;
              y.reshape({n, static_cast<int>(next_shape.size())});
              return y;
            },
            [&](const Dropout& d) {
              if (mode == Mode::Eval || d.p == Real{0}) return cur;
              mask = Tensor(cur.shape());
              const Real keep_scale = Real{1} / (Real{1} - d.p);
              for (auto& m : mask.values()) m = rng->uniform() < d.p ? Real{0} : keep_scale;
              Tensor y = cur;
              for (std::size_t k = 0; k < y.size(); ++k) y[k] *= mask[k];
              return y;
            },
            [&](const Dense& d) {
              Tensor y({n, d.out_features});
              const ConstMatrixMap x(cur.data(), n, d.in_features);
              const ConstMatrixMap w(d.weight.data(), d.out_features, d.in_features);
              MatrixMap ym(y.data(), n, d.out_features);
              ym.noalias() = x * w.transpose();
              ym.rowwise() +=
                  Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(d.bias.data(), d.out_features);
              return y;
            },
        },
        layers[i]);

    if (!next.all_finite())
      throw Error(ErrorKind::Divergence, "non-finite activation at layer " + std::to_string(i) +
                                             " (" + layer_name(layers[i]) + ")");
    cur = std::move(next);
    cur_shape = next_shape;
    if (trace != nullptr) {
      trace->activations.push_back(cur);
      trace->masks.push_back(std::move(mask));
    }
  }
  return cur;
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const auto& p : net.parameters()) g.emplace_back(p.value->shape());
  return g;
}

std::optional<Tensor> backward(const Network& net, const Trace& trace, const Tensor& grad_output,
                               Gradients* grads, std::size_t first_layer, bool want_input_grad) {
  const auto& layers = net.layers();
  if (trace.activations.size() != layers.size() + 1)
    throw shape_error("backward: trace does not match network");

  // Parameter slot of each layer's weight within Gradients.
  std::vector<int> slot(layers.size(), -1);
  {
    int next = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (std::holds_alternative<Conv2d>(layers[i]) || std::holds_alternative<Dense>(layers[i])) {
        slot[i] = next;
        next += 2;
      }
    }
  }

  Tensor grad = grad_output;
  for (std::size_t i = layers.size(); i-- > first_layer;) {
    const Tensor& x = trace.activations[i];
    const Tensor& y = trace.activations[i + 1];
    const bool need_dx = i > first_layer || want_input_grad;
    const Shape in_shape = i == 0 ? net.input_shape() : net.output_shape(i - 1);

    std::visit(Overloaded{
                   [&](const Conv2d& c) {
                     Tensor* dw = grads ? &(*grads)[static_cast<std::size_t>(slot[i])] : nullptr;
                     Tensor* db = grads ? &(*grads)[static_cast<std::size_t>(slot[i]) + 1] : nullptr;
                     grad = conv_backward(c, x, grad, in_shape, net.output_shape(i), dw, db, need_dx);
                   },
                   [&](const Relu&) {
                     for (std::size_t k = 0; k < grad.size(); ++k)
                       if (!(y[k] > Real{0})) grad[k] = Real{0};
                   },
                   [&](const Flatten&) { grad.reshape(x.shape()); },
                   [&](const Dropout&) {
                     const Tensor& mask = trace.masks[i];
                     if (mask.size() == 0) return;
                     for (std::size_t k = 0; k < grad.size(); ++k) grad[k] *= mask[k];
                   },
                   [&](const Dense& d) {
                     const int n = x.dim(0);
                     const ConstMatrixMap dy(grad.data(), n, d.out_features);
                     if (grads != nullptr) {
                       auto& dw = (*grads)[static_cast<std::size_t>(slot[i])];
                       auto& db = (*grads)[static_cast<std::size_t>(slot[i]) + 1];
                       MatrixMap(dw.data(), d.out_features, d.in_features).noalias() +=
                           dy.transpose() * ConstMatrixMap(x.data(), n, d.in_features);
                       Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(db.data(), d.out_features) +=
                           dy.colwise().sum();
                     }
                     if (need_dx) {
                       Tensor dx({n, d.in_features});
                       MatrixMap(dx.data(), n, d.in_features).noalias() =
                           dy * ConstMatrixMap(d.weight.data(), d.out_features, d.in_features);
                       grad = std::move(dx);
                     }
                   },
               },
               layers[i]);
  }
  if (!want_input_grad) return std::nullopt;
  return grad;
}

LossResult loss_and_grads(const Network& net, const Tensor& images, const Tensor& targets,
                          double weight_decay, Mode mode, Rng* rng) {
  const int n = images.dim(0);
  if (n < 1) throw shape_error("loss_and_grads: empty batch");
  const int out = net.output_size();
  if (targets.size() != static_cast<std::size_t>(n) * out)
    throw shape_error("loss_and_grads: target count does not match batch");

  Trace trace;
  const Tensor pred = forward(net, images, mode, rng, &trace);

  LossResult r;
  Tensor grad(pred.shape());
  double sse = 0.0;
  const Real scale = Real{2} / static_cast<Real>(n);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Real diff = pred[k] - targets[k];
    sse += static_cast<double>(diff) * static_cast<double>(diff);
    grad[k] = scale * diff;
  }
  r.data_loss = sse / n;

  r.grads = zero_gradients(net);
  backward(net, trace, grad, &r.grads, 0, false);

  double penalty = 0.0;
  const auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].is_bias) continue;
    const Tensor& w = *params[p].value;
    Tensor& g = r.grads[p];
    for (std::size_t k = 0; k < w.size(); ++k) {
      penalty += static_cast<double>(w[k]) * static_cast<double>(w[k]);
      g[k] += static_cast<Real>(weight_decay) * w[k];
    }
  }
  r.loss = r.data_loss + 0.5 * weight_decay * penalty;

  if (!std::isfinite(r.loss)) throw Error(ErrorKind::Divergence, "non-finite loss");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!r.grads[p].all_finite())
      throw Error(ErrorKind::Divergence, "non-finite gradient at layer " +
                                             std::to_string(params[p].layer) + " (" +
                                             layer_name(net.layers()[params[p].layer]) + ")");
  }
  return r;
}

SgdMomentum::SgdMomentum(const Network& net, double momentum) : momentum_(momentum) {
  for (const auto& p : net.parameters()) buffers_.emplace_back(p.value->shape());
}

void SgdMomentum::step(Network& net, const Gradients& grads, double lr) {
  auto params = net.parameters();
  const Real mu = static_cast<Real>(momentum_);
  const Real eta = static_cast<Real>(lr);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].value;
    Tensor& buf = buffers_[p];
    const Tensor& g = grads[p];
    for (std::size_t k = 0; k < w.size(); ++k) {
      buf[k] = mu * buf[k] + g[k];
      w[k] -= eta * buf[k];
    }
  }
}

}  // namespace vflock::nn
