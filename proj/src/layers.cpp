#include "coach/layers.hpp"

#include <algorithm>
#include <cmath>

#include "coach/errors.hpp"

namespace coach {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct ConvGeometry {
  std::size_t in_c, in_h, in_w, out_c, k, stride, pad, out_h, out_w;
};

ConvGeometry conv_geometry(const Conv2d& conv, const Shape& input) {
  if (input.size() != 3) throw ConfigError("conv2d expects a {C,H,W} input, got " + shape_string(input));
  const auto& w = conv.weight.shape();
  ConvGeometry g{input[0], input[1], input[2], w[0], w[2], conv.stride, conv.padding, 0, 0};
  if (w[1] != g.in_c) {
    throw ConfigError("conv2d expects " + std::to_string(w[1]) + " input channels, got " + shape_string(input));
  }
  if (g.in_h + 2 * g.pad < g.k || g.in_w + 2 * g.pad < g.k) {
    throw ConfigError("conv2d kernel larger than padded input " + shape_string(input));
  }
  g.out_h = (g.in_h + 2 * g.pad - g.k) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

// Output index range [lo, hi) for which out*stride + offset - pad lands inside [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t stride, std::size_t offset,
                                                std::size_t pad, std::size_t extent) {
  const auto lo_num = static_cast<long>(pad) - static_cast<long>(offset);
  const long lo = lo_num <= 0 ? 0 : (lo_num + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  const long hi_num = static_cast<long>(extent) + static_cast<long>(pad) - static_cast<long>(offset);
  long hi = hi_num <= 0 ? 0 : (hi_num + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  hi = std::min(hi, static_cast<long>(out_extent));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

Tensor conv_forward(const Conv2d& conv, const Tensor& input) {
  const auto g = conv_geometry(conv, input.shape());
  Tensor out({g.out_c, g.out_h, g.out_w});
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t o = 0; o < g.out_c; ++o) {
    double* dst = out.data() + o * plane;
    std::fill(dst, dst + plane, conv.bias[o]);
    for (std::size_t c = 0; c < g.in_c; ++c) {
      const double* src = input.data() + c * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto [oy0, oy1] = valid_range(g.out_h, g.stride, ky, g.pad, g.in_h);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const double w = conv.weight[((o * g.in_c + c) * g.k + ky) * g.k + kx];
          const auto [ox0, ox1] = valid_range(g.out_w, g.stride, kx, g.pad, g.in_w);
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const double* row = src + (oy * g.stride + ky - g.pad) * g.in_w;
            double* out_row = dst + oy * g.out_w;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              out_row[ox] += w * row[ox * g.stride + kx - g.pad];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_backward(const Conv2d& conv, const Tensor& input, const Tensor& grad_out,
                     std::vector<Tensor>* param_grads, bool want_input_grad) {
  const auto g = conv_geometry(conv, input.shape());
  Tensor grad_in;
  if (want_input_grad) grad_in = Tensor(input.shape());
  Tensor grad_w, grad_b;
  if (param_grads) {
    grad_w = Tensor(conv.weight.shape());
    grad_b = Tensor(conv.bias.shape());
  }
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t o = 0; o < g.out_c; ++o) {
    const double* go = grad_out.data() + o * plane;
    if (param_grads) {
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += go[i];
      grad_b[o] = sum;
    }
    for (std::size_t c = 0; c < g.in_c; ++c) {
      const double* src = input.data() + c * g.in_h * g.in_w;
      double* gsrc = want_input_grad ? grad_in.data() + c * g.in_h * g.in_w : nullptr;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto [oy0, oy1] = valid_range(g.out_h, g.stride, ky, g.pad, g.in_h);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::size_t widx = ((o * g.in_c + c) * g.k + ky) * g.k + kx;
          const double w = conv.weight[widx];
          const auto [ox0, ox1] = valid_range(g.out_w, g.stride, kx, g.pad, g.in_w);
          double acc = 0.0;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const std::size_t in_off = (oy * g.stride + ky - g.pad) * g.in_w;
            const double* go_row = go + oy * g.out_w;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              const std::size_t ix = ox * g.stride + kx - g.pad;
              acc += go_row[ox] * src[in_off + ix];
              if (gsrc) gsrc[in_off + ix] += w * go_row[ox];
            }
          }
          if (param_grads) grad_w[widx] = acc;
        }
      }
    }
  }
  if (param_grads) {
    param_grads->clear();
    param_grads->push_back(std::move(grad_w));
    param_grads->push_back(std::move(grad_b));
  }
  return grad_in;
}

std::size_t dense_inputs(const Dense& d) { return d.weight.dim(1); }

Tensor dense_forward(const Dense& d, const Tensor& input) {
  const std::size_t n_out = d.weight.dim(0), n_in = dense_inputs(d);
  if (input.size() != n_in) {
    throw ConfigError("dense expects " + std::to_string(n_in) + " inputs, got " + shape_string(input.shape()));
  }
  Tensor out({n_out});
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* w = d.weight.data() + o * n_in;
    double sum = d.bias[o];
    for (std::size_t i = 0; i < n_in; ++i) sum += w[i] * input[i];
    out[o] = sum;
  }
  return out;
}

Tensor dense_backward(const Dense& d, const Tensor& input, const Tensor& grad_out, std::vector<Tensor>* param_grads,
                      bool want_input_grad) {
  const std::size_t n_out = d.weight.dim(0), n_in = dense_inputs(d);
  Tensor grad_in;
  if (want_input_grad) {
    grad_in = Tensor(input.shape());
    for (std::size_t o = 0; o < n_out; ++o) {
      const double go = grad_out[o];
      if (go == 0.0) continue;
      const double* w = d.weight.data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += w[i] * go;
    }
  }
  if (param_grads) {
    Tensor gw(d.weight.shape());
    for (std::size_t o = 0; o < n_out; ++o) {
      const double go = grad_out[o];
      if (go == 0.0) continue;
      double* row = gw.data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) row[i] = go * input[i];
    }
    param_grads->clear();
    param_grads->push_back(std::move(gw));
    param_grads->push_back(Tensor(d.bias.shape(), std::vector<double>(grad_out.values().begin(), grad_out.values().end())));
  }
  return grad_in;
}

Shape upsample_shape(const Upsample& u, const Shape& input) {
  if (input.size() != 3) throw ConfigError("upsample expects a {C,H,W} input, got " + shape_string(input));
  if (u.height < input[1] || u.width < input[2]) {
    throw ConfigError("upsample target smaller than input " + shape_string(input));
  }
  return {input[0], u.height, u.width};
}

}  // namespace

LayerKind layer_kind(const Layer& layer) {
  return std::visit(overloaded{[](const Dense&) { return LayerKind::dense; },
                               [](const Conv2d&) { return LayerKind::conv2d; },
                               [](const Relu&) { return LayerKind::relu; },
                               [](const Sigmoid&) { return LayerKind::sigmoid; },
                               [](const Upsample&) { return LayerKind::upsample; },
                               [](const Reshape&) { return LayerKind::reshape; }},
                    layer);
}

const char* layer_name(const Layer& layer) {
  switch (layer_kind(layer)) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::upsample: return "upsample";
    case LayerKind::reshape: return "reshape";
  }
  return "?";
}

Shape output_shape(const Layer& layer, const Shape& input) {
  return std::visit(
      overloaded{[&](const Dense& d) -> Shape {
                   if (shape_size(input) != dense_inputs(d)) {
                     throw ConfigError("dense expects " + std::to_string(dense_inputs(d)) + " inputs, got " +
                                       shape_string(input));
                   }
                   return {d.weight.dim(0)};
                 },
                 [&](const Conv2d& c) -> Shape {
                   const auto g = conv_geometry(c, input);
                   return {g.out_c, g.out_h, g.out_w};
                 },
                 [&](const Relu&) { return input; }, [&](const Sigmoid&) { return input; },
                 [&](const Upsample& u) { return upsample_shape(u, input); },
                 [&](const Reshape& r) -> Shape {
                   if (shape_size(r.shape) != shape_size(input)) {
                     throw ConfigError("cannot reshape " + shape_string(input) + " to " + shape_string(r.shape));
                   }
                   return r.shape;
                 }},
      layer);
}

Tensor forward(const Layer& layer, const Tensor& input) {
  return std::visit(overloaded{[&](const Dense& d) { return dense_forward(d, input); },
                               [&](const Conv2d& c) { return conv_forward(c, input); },
                               [&](const Relu&) {
                                 Tensor out = input;
                                 for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
                                 return out;
                               },
                               [&](const Sigmoid&) {
                                 Tensor out = input;
                                 for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
                                 return out;
                               },
                               [&](const Upsample& u) {
                                 const auto shape = upsample_shape(u, input.shape());
                                 const std::size_t c = shape[0], h = input.dim(1), w = input.dim(2);
                                 Tensor out(shape);
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   for (std::size_t y = 0; y < u.height; ++y) {
                                     const std::size_t sy = y * h / u.height;
                                     for (std::size_t x = 0; x < u.width; ++x) {
                                       out[(ch * u.height + y) * u.width + x] = input[(ch * h + sy) * w + x * w / u.width];
                                     }
                                   }
                                 }
                                 return out;
                               },
                               [&](const Reshape& r) { return input.reshaped(output_shape(r, input.shape())); }},
                    layer);
}

Tensor backward(const Layer& layer, const Tensor& input, const Tensor& output, const Tensor& grad_output,
                std::vector<Tensor>* param_grads, bool want_input_grad) {
  if (param_grads) param_grads->clear();
  return std::visit(
      overloaded{[&](const Dense& d) { return dense_backward(d, input, grad_output, param_grads, want_input_grad); },
                 [&](const Conv2d& c) { return conv_backward(c, input, grad_output, param_grads, want_input_grad); },
                 [&](const Relu&) {
                   if (!want_input_grad) return Tensor();
                   Tensor g = grad_output;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (!(input[i] > 0.0)) g[i] = 0.0;
                   }
                   return g;
                 },
                 [&](const Sigmoid&) {
                   if (!want_input_grad) return Tensor();
                   Tensor g = grad_output;
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (1.0 - output[i]);
                   return g;
                 },
                 [&](const Upsample& u) {
                   if (!want_input_grad) return Tensor();
                   const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
                   Tensor g(input.shape());
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     for (std::size_t y = 0; y < u.height; ++y) {
                       const std::size_t sy = y * h / u.height;
                       for (std::size_t x = 0; x < u.width; ++x) {
                         g[(ch * h + sy) * w + x * w / u.width] += grad_output[(ch * u.height + y) * u.width + x];
                       }
                     }
                   }
                   return g;
                 },
                 [&](const Reshape&) {
                   if (!want_input_grad) return Tensor();
                   return grad_output.reshaped(input.shape());
                 }},
      layer);
}

std::vector<const Tensor*> parameters(const Layer& layer) {
  if (const auto* d = std::get_if<Dense>(&layer)) return {&d->weight, &d->bias};
  if (const auto* c = std::get_if<Conv2d>(&layer)) return {&c->weight, &c->bias};
  return {};
}

std::vector<Tensor*> mutable_parameters(Layer& layer) {
  if (auto* d = std::get_if<Dense>(&layer)) return {&d->weight, &d->bias};
  if (auto* c = std::get_if<Conv2d>(&layer)) return {&c->weight, &c->bias};
  return {};
}

Layer make_layer(const LayerSpec& spec, const Shape& input, Rng& rng) {
  auto uniform_tensor = [&](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  };
  Layer layer = std::visit(
      overloaded{[&](const DenseSpec& s) -> Layer {
                   const auto n_in = shape_size(input);
                   return Dense{uniform_tensor({s.units, n_in}, n_in), Tensor({s.units})};
                 },
                 [&](const ConvSpec& s) -> Layer {
                   if (input.size() != 3) throw ConfigError("conv2d expects a {C,H,W} input, got " + shape_string(input));
                   const auto fan_in = input[0] * s.kernel * s.kernel;
                   return Conv2d{uniform_tensor({s.filters, input[0], s.kernel, s.kernel}, fan_in), Tensor({s.filters}),
                                 s.stride, s.padding};
                 },
                 [](const Relu& r) -> Layer { return r; }, [](const Sigmoid& s) -> Layer { return s; },
                 [](const UpsampleSpec& s) -> Layer { return Upsample{s.height, s.width}; },
                 [](const ReshapeSpec& s) -> Layer { return Reshape{s.shape}; }},
      spec);
  output_shape(layer, input);  // validates the chain
  return layer;
}

}  // namespace coach
