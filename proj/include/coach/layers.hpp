#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "coach/rng.hpp"
#include "coach/tensor.hpp"

namespace coach {

/// Fully connected: y = W·flatten(x) + b, W is {out, in}.
struct Dense {
  Tensor weight;
  Tensor bias;
};

/// 2-D cross-correlation over a {C, H, W} input, weight {out, in, k, k}.
struct Conv2d {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct Relu {};
struct Sigmoid {};

/// Nearest-neighbour resize of a {C, H, W} input to {C, height, width}.
struct Upsample {
  std::size_t height = 0;
  std::size_t width = 0;
};

struct Reshape {
  Shape shape;
};

using Layer = std::variant<Dense, Conv2d, Relu, Sigmoid, Upsample, Reshape>;

/// Tags used by the parameter snapshot format.
enum class LayerKind : std::uint8_t { dense = 1, conv2d = 2, relu = 3, sigmoid = 4, upsample = 5, reshape = 6 };

LayerKind layer_kind(const Layer& layer);
const char* layer_name(const Layer& layer);

/// Throws ConfigError when `input` is not accepted by the layer.
Shape output_shape(const Layer& layer, const Shape& input);

Tensor forward(const Layer& layer, const Tensor& input);

/// Back-propagates `grad_output` through one layer. When `param_grads` is
/// non-null it receives the gradients of the layer's parameters in the order
/// of `parameters()`. When `want_input_grad` is false the returned tensor is empty.
Tensor backward(const Layer& layer, const Tensor& input, const Tensor& output, const Tensor& grad_output,
                std::vector<Tensor>* param_grads, bool want_input_grad = true);

/// Trainable tensors of a layer (weight then bias); empty for parameter-free layers.
std::vector<const Tensor*> parameters(const Layer& layer);
std::vector<Tensor*> mutable_parameters(Layer& layer);

// Layer construction recipes, resolved against the running input shape.
struct DenseSpec {
  std::size_t units;
};
struct ConvSpec {
  std::size_t filters;
  std::size_t kernel;
  std::size_t stride = 1;
  std::size_t padding = 0;
};
struct UpsampleSpec {
  std::size_t height;
  std::size_t width;
};
struct ReshapeSpec {
  Shape shape;
};
using LayerSpec = std::variant<DenseSpec, ConvSpec, Relu, Sigmoid, UpsampleSpec, ReshapeSpec>;

/// Builds a layer for `input`; weights uniform in ±1/sqrt(fan_in), biases zero.
Layer make_layer(const LayerSpec& spec, const Shape& input, Rng& rng);

}  // namespace coach
