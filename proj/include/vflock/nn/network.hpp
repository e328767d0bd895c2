#pragma once

// Convolutional regressor with hand-written forward and backward passes.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vflock/nn/tensor.hpp"
#include "vflock/rng.hpp"

namespace vflock::nn {

/// Channels x height x width of one sample.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int pad = 0;
  Tensor weight;  // out x (in * kh * kw)
  Tensor bias;    // out

  Conv2d() = default;
  Conv2d(int in, int out, int kh, int kw, int stride_, int pad_);
  int fan_in() const { return in_channels * kernel_h * kernel_w; }
  Shape output_shape(const Shape& in) const;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

/// Inverted dropout: train mode zeroes units with probability p and scales
/// the survivors by 1/(1-p); eval mode is the identity.
struct Dropout {
  Real p = 0.5;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};

struct Dense {
  int in_features = 0;
  int out_features = 0;
  Tensor weight;  // out x in
  Tensor bias;    // out

  Dense() = default;
  Dense(int in, int out);
  friend bool operator==(const Dense&, const Dense&) = default;
};

using Layer = std::variant<Conv2d, Relu, Flatten, Dropout, Dense>;

std::string layer_name(const Layer& layer);

enum class Mode { Train, Eval };

/// A trainable parameter tensor and where it lives.
struct ParamRef {
  Tensor* value = nullptr;
  std::size_t layer = 0;
  bool is_bias = false;
};
struct ConstParamRef {
  const Tensor* value = nullptr;
  std::size_t layer = 0;
  bool is_bias = false;
};

class Network {
 public:
  Network() = default;
  /// Validates the layer chain against `input`; throws Error{InvalidArgument}
  /// on inconsistent channel counts, feature counts or empty spatial output.
  Network(Shape input, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  /// Per-sample output shape of layer i (flattened layers report {features,1,1}).
  const Shape& output_shape(std::size_t i) const { return shapes_[i]; }
  int output_size() const;

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  std::size_t parameter_count() const;

  /// Standardisation statistics of the data the network was trained on.
  float pixel_mean = 0.0f;
  float pixel_std = 0.0f;

  friend bool operator==(const Network& a, const Network& b);

 private:
  Shape input_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Default architecture for a 64 x 384 single-channel input:
/// conv5x5/2 x8, conv3x3/2 x16, conv3x3/2 x16, conv3x3/2 x32 (-> 4x24),
/// conv3x3/1 x32, flatten, dropout, dense -> 3. ReLU after each conv.
Network default_network(double dropout = 0.5);

/// Index of the last convolution with stride > 1, whose feature maps are
/// used for saliency. Throws Error{Config} when there is none.
std::size_t attribution_layer(const Network& net);

/// He initialisation: weights ~ N(0, 2/fan_in) truncated to +-2 std by
/// redrawing; biases zero.
void init_weights(Network& net, Rng& rng);

/// Intermediate values kept for the backward pass.
struct Trace {
  std::vector<Tensor> activations;  // [0] = input, [i + 1] = output of layer i
  std::vector<Tensor> masks;        // dropout masks, empty for other layers
};

/// Batch forward pass. `images` is N x C x H x W. Train mode draws dropout
/// masks from `rng`, which must then be non-null. Throws Error{Divergence}
/// naming the first layer whose output is non-finite.
Tensor forward(const Network& net, const Tensor& images, Mode mode, Rng* rng = nullptr,
               Trace* trace = nullptr);

using Gradients = std::vector<Tensor>;  // aligned with Network::parameters()

Gradients zero_gradients(const Network& net);

/// Back-propagates `grad_output` through layers [first_layer, end). Parameter
/// gradients accumulate into `grads` when non-null. Returns the gradient with
/// respect to trace.activations[first_layer] when `want_input_grad` is set.
std::optional<Tensor> backward(const Network& net, const Trace& trace, const Tensor& grad_output,
                               Gradients* grads, std::size_t first_layer = 0,
                               bool want_input_grad = false);

struct LossResult {
  double loss = 0.0;       // data term + weight decay
  double data_loss = 0.0;  // mean over the batch of the squared error norm
  Gradients grads;
};

/// Loss (1/B) sum ||pred - target||^2 + (lambda/2) ||w||^2, biases excluded.
LossResult loss_and_grads(const Network& net, const Tensor& images, const Tensor& targets,
                          double weight_decay, Mode mode = Mode::Train, Rng* rng = nullptr);

/// Classic heavy-ball momentum: buf = mu * buf + g; p -= lr * buf.
class SgdMomentum {
 public:
  SgdMomentum(const Network& net, double momentum);
  void step(Network& net, const Gradients& grads, double lr);
  const std::vector<Tensor>& buffers() const { return buffers_; }

 private:
  double momentum_;
  std::vector<Tensor> buffers_;
};

}  // namespace vflock::nn
