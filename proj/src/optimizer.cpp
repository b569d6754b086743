#include "coach/optimizer.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "coach/binary_io.hpp"
#include "coach/errors.hpp"

namespace coach {

OptimizerState make_optimizer(const OptimizerConfig& config, const NetworkParams& params) {
  OptimizerState state;
  state.config = config;
  state.first_layer = params.frozen_count();
  const auto zeros = Gradient::zeros_like(params);
  if (config.kind == OptimizerKind::adam) state.first_moment = zeros.layers;
  if (config.kind != OptimizerKind::sgd) state.second_moment = zeros.layers;
  return state;
}

void apply_optimizer(OptimizerState& state, NetworkParams& params, const Gradient& grad) {
  if (grad.first_layer != params.frozen_count() || grad.layers.size() != params.layer_count() - params.frozen_count() ||
      state.first_layer != params.frozen_count()) {
    throw ConfigError("gradient does not cover the trainable layers of the network");
  }
  const auto& cfg = state.config;
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    const std::size_t index = grad.first_layer + l;
    if (grad.layers[l].empty()) continue;
    Layer layer = params.layer(index);
    auto tensors = mutable_parameters(layer);
    if (tensors.size() != grad.layers[l].size()) throw ConfigError("gradient layout mismatch at layer " + std::to_string(index));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      auto theta = tensors[k]->values();
      auto g = grad.layers[l][k].values();
      if (g.size() != theta.size()) throw ConfigError("gradient shape mismatch at layer " + std::to_string(index));
      switch (cfg.kind) {
        case OptimizerKind::sgd:
          for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += cfg.learning_rate * g[i];
          break;
        case OptimizerKind::rmsprop: {
          auto v = state.second_moment[l][k].values();
          for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = cfg.rms_decay * v[i] + (1.0 - cfg.rms_decay) * g[i] * g[i];
            theta[i] += cfg.learning_rate * g[i] / (std::sqrt(v[i]) + cfg.epsilon);
          }
          break;
        }
        case OptimizerKind::adam: {
          auto m = state.first_moment[l][k].values();
          auto v = state.second_moment[l][k].values();
          for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            theta[i] += cfg.learning_rate * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg.epsilon);
          }
          break;
        }
      }
    }
    params = params.with_layer(index, std::move(layer));
  }
}

std::pair<NetworkParams, OptimizerState> optimizer_step(const OptimizerState& state, const NetworkParams& params,
                                                        const Gradient& grad) {
  OptimizerState next_state = state;
  NetworkParams next = params;
  apply_optimizer(next_state, next, grad);
  return {std::move(next), std::move(next_state)};
}

namespace {

void write_moments(std::ostream& out, const std::vector<std::vector<Tensor>>& m) {
  io::write_u32(out, static_cast<std::uint32_t>(m.size()));
  for (const auto& layer : m) {
    io::write_u32(out, static_cast<std::uint32_t>(layer.size()));
    for (const auto& t : layer) io::write_tensor(out, t);
  }
}

std::vector<std::vector<Tensor>> read_moments(std::istream& in) {
  std::vector<std::vector<Tensor>> m(io::read_u32(in));
  for (auto& layer : m) {
    layer.resize(io::read_u32(in));
    for (auto& t : layer) t = io::read_tensor(in);
  }
  return m;
}

}  // namespace

void save_optimizer(std::ostream& out, const OptimizerState& state) {
  io::write_u8(out, static_cast<std::uint8_t>(state.config.kind));
  io::write_f64(out, state.config.learning_rate);
  io::write_f64(out, state.config.rms_decay);
  io::write_f64(out, state.config.beta1);
  io::write_f64(out, state.config.beta2);
  io::write_f64(out, state.config.epsilon);
  io::write_u32(out, static_cast<std::uint32_t>(state.first_layer));
  io::write_u64(out, state.steps);
  write_moments(out, state.first_moment);
  write_moments(out, state.second_moment);
}

OptimizerState load_optimizer(std::istream& in) {
  OptimizerState s;
  const auto kind = io::read_u8(in);
  if (kind > 2) throw FormatError("unknown optimizer kind");
  s.config.kind = static_cast<OptimizerKind>(kind);
  s.config.learning_rate = io::read_f64(in);
  s.config.rms_decay = io::read_f64(in);
  s.config.beta1 = io::read_f64(in);
  s.config.beta2 = io::read_f64(in);
  s.config.epsilon = io::read_f64(in);
  s.first_layer = io::read_u32(in);
  s.steps = io::read_u64(in);
  s.first_moment = read_moments(in);
  s.second_moment = read_moments(in);
  return s;
}

}  // namespace coach
