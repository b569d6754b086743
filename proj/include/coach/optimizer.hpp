#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>

#include "coach/network.hpp"

namespace coach {

enum class OptimizerKind : std::uint8_t { sgd = 0, rmsprop = 1, adam = 2 };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double learning_rate = 0.00025;
  double rms_decay = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Accumulators for the trainable layers of one network. All optimizers
/// ascend: θ ← θ + α·step(g). Minimizers pass the negated gradient.
struct OptimizerState {
  OptimizerConfig config;
  std::size_t first_layer = 0;
  std::vector<std::vector<Tensor>> first_moment;   // adam
  std::vector<std::vector<Tensor>> second_moment;  // rmsprop, adam
  std::uint64_t steps = 0;
};

OptimizerState make_optimizer(const OptimizerConfig& config, const NetworkParams& params);

/// Pure form: returns the updated parameters and state.
std::pair<NetworkParams, OptimizerState> optimizer_step(const OptimizerState& state, const NetworkParams& params,
                                                        const Gradient& grad);

/// In-place form used by the training loops.
void apply_optimizer(OptimizerState& state, NetworkParams& params, const Gradient& grad);

void save_optimizer(std::ostream& out, const OptimizerState& state);
OptimizerState load_optimizer(std::istream& in);

}  // namespace coach
