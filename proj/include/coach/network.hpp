#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "coach/layers.hpp"

namespace coach {

/// An immutable stack of layers. The first `frozen_count()` layers are never
/// touched by an optimizer; copies share layer storage.
class NetworkParams {
 public:
  NetworkParams() = default;
  NetworkParams(Shape input_shape, std::vector<Layer> layers, std::size_t frozen_count = 0);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t frozen_count() const noexcept { return frozen_; }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  /// Input shape of layer `i`; `shape_at(layer_count())` is the output shape.
  const Shape& shape_at(std::size_t i) const { return shapes_.at(i); }
  const Shape& output_shape() const { return shapes_.back(); }

  /// Same layers with a different frozen prefix.
  NetworkParams with_frozen(std::size_t frozen_count) const;
  /// Returns a copy where layer `i` is replaced. Only trainable layers may be replaced.
  NetworkParams with_layer(std::size_t i, Layer layer) const;
  /// Layers [first, last) as a standalone network (frozen prefix clipped).
  NetworkParams slice(std::size_t first, std::size_t last) const;
  /// Appends `tail` after this network's layers.
  NetworkParams concat(const NetworkParams& tail, std::size_t frozen_count) const;

  /// True when layer `i` in both networks is the same shared object.
  bool shares_layer(const NetworkParams& other, std::size_t i) const;

  friend bool operator==(const NetworkParams& a, const NetworkParams& b);

 private:
  Shape input_shape_;
  std::vector<std::shared_ptr<const Layer>> layers_;
  std::vector<Shape> shapes_;
  std::size_t frozen_ = 0;

  void validate();
};

/// Builds a network from recipes with seeded initialization.
NetworkParams build_network(const Shape& input_shape, std::span<const LayerSpec> specs, Rng& rng,
                            std::size_t frozen_count = 0);

/// Gradient w.r.t. the trainable layers [first_layer, layer_count).
struct Gradient {
  std::size_t first_layer = 0;
  std::vector<std::vector<Tensor>> layers;

  static Gradient zeros_like(const NetworkParams& params);

  /// this += scale * other
  void add_scaled(const Gradient& other, double scale);
  void scale(double factor);
  std::size_t parameter_count() const;
  bool all_finite() const;
  /// Flattened copy, layer by layer, weight before bias.
  std::vector<double> flatten() const;
};

/// Activations of a forward pass started at layer `from`: activations[0] is the
/// input to layer `from`, activations.back() is the network output.
struct ForwardTrace {
  std::size_t from = 0;
  std::vector<Tensor> activations;
  const Tensor& output() const { return activations.back(); }
};

Tensor forward(const NetworkParams& params, const Tensor& input, std::size_t from = 0);
/// Output of layer `to - 1` (i.e. the input of layer `to`).
Tensor forward_until(const NetworkParams& params, const Tensor& input, std::size_t to);
ForwardTrace forward_trace(const NetworkParams& params, const Tensor& input, std::size_t from = 0);

/// Parameter gradient of <grad_output, network output> for all trainable
/// layers; trainable layers before `trace.from` receive zeros.
Gradient backward(const NetworkParams& params, const ForwardTrace& trace, const Tensor& grad_output);

/// Gradient for every layer from `trace.from` (ignoring the frozen prefix), plus
/// the gradient w.r.t. the trace input when `grad_input` is non-null. Used by
/// autoencoder training and gradient checks.
Gradient backward_all(const NetworkParams& params, const ForwardTrace& trace, const Tensor& grad_output,
                      Tensor* grad_input = nullptr);

/// Snapshot container: "COACHNN1", frozen count (u8), input rank (u8) + dims
/// (u32), layer count (u32), then per layer its kind tag (u8) followed by the
/// layer's tensors as rank (u8), dims (u32), values (f64), all little-endian.
void save_network(std::ostream& out, const NetworkParams& params);
NetworkParams load_network(std::istream& in);
void save_network_file(const std::string& path, const NetworkParams& params);
NetworkParams load_network_file(const std::string& path);

}  // namespace coach
