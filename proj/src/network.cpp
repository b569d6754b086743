#include "coach/network.hpp"

#include <fstream>

#include "coach/binary_io.hpp"
#include "coach/errors.hpp"

namespace coach {

NetworkParams::NetworkParams(Shape input_shape, std::vector<Layer> layers, std::size_t frozen_count)
    : input_shape_(std::move(input_shape)), frozen_(frozen_count) {
  layers_.reserve(layers.size());
  for (auto& l : layers) layers_.push_back(std::make_shared<const Layer>(std::move(l)));
  validate();
}

void NetworkParams::validate() {
  if (frozen_ > layers_.size()) {
    throw ConfigError("frozen prefix " + std::to_string(frozen_) + " exceeds layer count " +
                      std::to_string(layers_.size()));
  }
  shapes_.clear();
  shapes_.push_back(input_shape_);
  for (const auto& l : layers_) shapes_.push_back(coach::output_shape(*l, shapes_.back()));
}

NetworkParams NetworkParams::with_frozen(std::size_t frozen_count) const {
  NetworkParams copy = *this;
  copy.frozen_ = frozen_count;
  copy.validate();
  return copy;
}

NetworkParams NetworkParams::with_layer(std::size_t i, Layer layer) const {
  if (i < frozen_) throw UsageError("layer " + std::to_string(i) + " is frozen");
  if (coach::output_shape(layer, shapes_.at(i)) != shapes_.at(i + 1)) {
    throw ConfigError("replacement layer changes the output shape of layer " + std::to_string(i));
  }
  NetworkParams copy = *this;
  copy.layers_[i] = std::make_shared<const Layer>(std::move(layer));
  return copy;
}

NetworkParams NetworkParams::slice(std::size_t first, std::size_t last) const {
  if (first > last || last > layers_.size()) throw ConfigError("invalid layer slice");
  NetworkParams out;
  out.input_shape_ = shapes_[first];
  out.layers_.assign(layers_.begin() + static_cast<long>(first), layers_.begin() + static_cast<long>(last));
  out.frozen_ = frozen_ > first ? std::min(frozen_ - first, last - first) : 0;
  out.validate();
  return out;
}

NetworkParams NetworkParams::concat(const NetworkParams& tail, std::size_t frozen_count) const {
  if (tail.input_shape_ != output_shape() && shape_size(tail.input_shape_) != shape_size(output_shape())) {
    throw ConfigError("cannot append a network expecting " + shape_string(tail.input_shape_) + " after output " +
                      shape_string(output_shape()));
  }
  NetworkParams out = *this;
  out.layers_.insert(out.layers_.end(), tail.layers_.begin(), tail.layers_.end());
  out.frozen_ = frozen_count;
  out.validate();
  return out;
}

bool NetworkParams::shares_layer(const NetworkParams& other, std::size_t i) const {
  return i < layers_.size() && i < other.layers_.size() && layers_[i] == other.layers_[i];
}

namespace {

bool same_layer(const Layer& a, const Layer& b) {
  if (a.index() != b.index()) return false;
  if (const auto* d = std::get_if<Dense>(&a)) {
    const auto& e = std::get<Dense>(b);
    return d->weight == e.weight && d->bias == e.bias;
  }
  if (const auto* c = std::get_if<Conv2d>(&a)) {
    const auto& e = std::get<Conv2d>(b);
    return c->weight == e.weight && c->bias == e.bias && c->stride == e.stride && c->padding == e.padding;
  }
  if (const auto* u = std::get_if<Upsample>(&a)) {
    const auto& e = std::get<Upsample>(b);
    return u->height == e.height && u->width == e.width;
  }
  if (const auto* r = std::get_if<Reshape>(&a)) return r->shape == std::get<Reshape>(b).shape;
  return true;
}

}  // namespace

bool operator==(const NetworkParams& a, const NetworkParams& b) {
  if (a.input_shape_ != b.input_shape_ || a.frozen_ != b.frozen_ || a.layers_.size() != b.layers_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i] != b.layers_[i] && !same_layer(*a.layers_[i], *b.layers_[i])) return false;
  }
  return true;
}

NetworkParams build_network(const Shape& input_shape, std::span<const LayerSpec> specs, Rng& rng,
                            std::size_t frozen_count) {
  std::vector<Layer> layers;
  Shape shape = input_shape;
  for (const auto& spec : specs) {
    layers.push_back(make_layer(spec, shape, rng));
    shape = output_shape(layers.back(), shape);
  }
  return NetworkParams(input_shape, std::move(layers), frozen_count);
}

Gradient Gradient::zeros_like(const NetworkParams& params) {
  Gradient g;
  g.first_layer = params.frozen_count();
  for (std::size_t i = g.first_layer; i < params.layer_count(); ++i) {
    std::vector<Tensor> tensors;
    for (const Tensor* p : parameters(params.layer(i))) tensors.emplace_back(p->shape());
    g.layers.push_back(std::move(tensors));
  }
  return g;
}

void Gradient::add_scaled(const Gradient& other, double scale) {
  if (other.first_layer != first_layer || other.layers.size() != layers.size()) {
    throw ConfigError("gradient layouts differ");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != other.layers[l].size()) throw ConfigError("gradient layouts differ");
    for (std::size_t t = 0; t < layers[l].size(); ++t) {
      auto dst = layers[l][t].values();
      auto src = other.layers[l][t].values();
      if (dst.size() != src.size()) throw ConfigError("gradient layouts differ");
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    }
  }
}

void Gradient::scale(double factor) {
  for (auto& layer : layers) {
    for (auto& t : layer) {
      for (double& v : t.values()) v *= factor;
    }
  }
}

std::size_t Gradient::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (const auto& t : layer) n += t.size();
  }
  return n;
}

bool Gradient::all_finite() const {
  for (const auto& layer : layers) {
    for (const auto& t : layer) {
      if (!t.all_finite()) return false;
    }
  }
  return true;
}

std::vector<double> Gradient::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers) {
    for (const auto& t : layer) out.insert(out.end(), t.values().begin(), t.values().end());
  }
  return out;
}

Tensor forward(const NetworkParams& params, const Tensor& input, std::size_t from) {
  const Shape& expected = params.shape_at(from);
  if (input.shape() != expected && !(from > 0 && input.size() == shape_size(expected))) {
    throw ConfigError("network input shape " + shape_string(input.shape()) + " does not match expected " +
                      shape_string(expected));
  }
  Tensor x = input.shape() == expected ? input : input.reshaped(expected);
  for (std::size_t i = from; i < params.layer_count(); ++i) x = coach::forward(params.layer(i), x);
  return x;
}

Tensor forward_until(const NetworkParams& params, const Tensor& input, std::size_t to) {
  if (input.shape() != params.input_shape()) {
    throw ConfigError("network input shape " + shape_string(input.shape()) + " does not match expected " +
                      shape_string(params.input_shape()));
  }
  Tensor x = input;
  for (std::size_t i = 0; i < to; ++i) x = coach::forward(params.layer(i), x);
  return x;
}

ForwardTrace forward_trace(const NetworkParams& params, const Tensor& input, std::size_t from) {
  const Shape& expected = params.shape_at(from);
  if (input.shape() != expected && !(from > 0 && input.size() == shape_size(expected))) {
    throw ConfigError("network input shape " + shape_string(input.shape()) + " does not match expected " +
                      shape_string(expected));
  }
  ForwardTrace trace;
  trace.from = from;
  trace.activations.reserve(params.layer_count() - from + 1);
  trace.activations.push_back(input.shape() == expected ? input : input.reshaped(expected));
  for (std::size_t i = from; i < params.layer_count(); ++i) {
    trace.activations.push_back(coach::forward(params.layer(i), trace.activations.back()));
  }
  return trace;
}

namespace {

Gradient backward_impl(const NetworkParams& params, const ForwardTrace& trace, const Tensor& grad_output,
                       std::size_t first_trainable, Tensor* grad_input) {
  if (grad_output.size() != trace.output().size()) {
    throw ConfigError("output gradient size " + std::to_string(grad_output.size()) + " does not match output " +
                      shape_string(trace.output().shape()));
  }
  Gradient g;
  g.first_layer = first_trainable;
  g.layers.resize(params.layer_count() - first_trainable);
  Tensor grad = grad_output.reshaped(trace.output().shape());
  const std::size_t stop = std::max(trace.from, first_trainable);
  for (std::size_t i = params.layer_count(); i-- > trace.from;) {
    const std::size_t a = i - trace.from;
    const bool trainable = i >= first_trainable;
    const bool need_input_grad = i > stop || grad_input != nullptr;
    if (!trainable && !need_input_grad) break;
    std::vector<Tensor> pg;
    grad = coach::backward(params.layer(i), trace.activations[a], trace.activations[a + 1], grad,
                           trainable ? &pg : nullptr, need_input_grad);
    if (trainable) g.layers[i - first_trainable] = std::move(pg);
    if (!need_input_grad) break;
  }
  for (std::size_t i = first_trainable; i < params.layer_count(); ++i) {
    auto& slot = g.layers[i - first_trainable];
    if (slot.empty()) {
      for (const Tensor* p : parameters(params.layer(i))) slot.emplace_back(p->shape());
    }
  }
  if (grad_input) *grad_input = std::move(grad);
  return g;
}

}  // namespace

Gradient backward(const NetworkParams& params, const ForwardTrace& trace, const Tensor& grad_output) {
  return backward_impl(params, trace, grad_output, params.frozen_count(), nullptr);
}

Gradient backward_all(const NetworkParams& params, const ForwardTrace& trace, const Tensor& grad_output,
                      Tensor* grad_input) {
  return backward_impl(params, trace, grad_output, trace.from, grad_input);
}

void save_network(std::ostream& out, const NetworkParams& params) {
  io::write_magic(out, "COACHNN1");
  io::write_u8(out, static_cast<std::uint8_t>(params.frozen_count()));
  io::write_u8(out, static_cast<std::uint8_t>(params.input_shape().size()));
  for (auto d : params.input_shape()) io::write_u32(out, static_cast<std::uint32_t>(d));
  io::write_u32(out, static_cast<std::uint32_t>(params.layer_count()));
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    const Layer& layer = params.layer(i);
    io::write_u8(out, static_cast<std::uint8_t>(layer_kind(layer)));
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      io::write_tensor(out, c->weight);
      io::write_tensor(out, c->bias);
      io::write_tensor(out, Tensor({2}, {static_cast<double>(c->stride), static_cast<double>(c->padding)}));
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      io::write_tensor(out, d->weight);
      io::write_tensor(out, d->bias);
    } else if (const auto* u = std::get_if<Upsample>(&layer)) {
      io::write_tensor(out, Tensor({2}, {static_cast<double>(u->height), static_cast<double>(u->width)}));
    } else if (const auto* r = std::get_if<Reshape>(&layer)) {
      std::vector<double> dims(r->shape.begin(), r->shape.end());
      io::write_tensor(out, Tensor({dims.size()}, dims));
    }
  }
}

NetworkParams load_network(std::istream& in) {
  io::expect_magic(in, "COACHNN1", "network snapshot");
  const auto frozen = io::read_u8(in);
  Shape input(io::read_u8(in));
  for (auto& d : input) d = io::read_u32(in);
  const auto n_layers = io::read_u32(in);
  if (n_layers > 4096) throw FormatError("network snapshot: implausible layer count");
  std::vector<Layer> layers;
  auto as_size = [](double v) { return static_cast<std::size_t>(v); };
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto kind = static_cast<LayerKind>(io::read_u8(in));
    switch (kind) {
      case LayerKind::dense: {
        auto w = io::read_tensor(in);
        auto b = io::read_tensor(in);
        if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) throw FormatError("network snapshot: bad dense layer");
        layers.emplace_back(Dense{std::move(w), std::move(b)});
        break;
      }
      case LayerKind::conv2d: {
        auto w = io::read_tensor(in);
        auto b = io::read_tensor(in);
        auto cfg = io::read_tensor(in);
        if (w.rank() != 4 || b.rank() != 1 || cfg.size() != 2 || b.dim(0) != w.dim(0) || w.dim(2) != w.dim(3)) {
          throw FormatError("network snapshot: bad conv2d layer");
        }
        layers.emplace_back(Conv2d{std::move(w), std::move(b), as_size(cfg[0]), as_size(cfg[1])});
        break;
      }
      case LayerKind::relu: layers.emplace_back(Relu{}); break;
      case LayerKind::sigmoid: layers.emplace_back(Sigmoid{}); break;
      case LayerKind::upsample: {
        auto cfg = io::read_tensor(in);
        if (cfg.size() != 2) throw FormatError("network snapshot: bad upsample layer");
        layers.emplace_back(Upsample{as_size(cfg[0]), as_size(cfg[1])});
        break;
      }
      case LayerKind::reshape: {
        auto cfg = io::read_tensor(in);
        Shape s;
        for (double v : cfg.values()) s.push_back(as_size(v));
        layers.emplace_back(Reshape{std::move(s)});
        break;
      }
      default: throw FormatError("network snapshot: unknown layer tag " + std::to_string(static_cast<int>(kind)));
    }
  }
  try {
    return NetworkParams(std::move(input), std::move(layers), frozen);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("network snapshot: inconsistent layers: ") + e.what());
  }
}

void save_network_file(const std::string& path, const NetworkParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  save_network(out, params);
  if (!out.flush()) throw IoError("failed writing " + path);
}

NetworkParams load_network_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return load_network(in);
}

}  // namespace coach
