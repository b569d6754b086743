#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

#include "coach/network.hpp"

namespace coach {

inline constexpr std::size_t kActionCount = 3;

enum class Action : std::uint8_t { forward = 0, rotate_left = 1, rotate_right = 2 };

inline std::size_t index_of(Action a) noexcept { return static_cast<std::size_t>(a); }
/// Throws InputError for indices outside {0, 1, 2}.
Action action_from_index(long index);
const char* action_name(Action a) noexcept;

/// π(·|s) over the three actions.
struct ActionDistribution {
  std::array<double, kActionCount> probs{};

  double operator[](Action a) const noexcept { return probs[index_of(a)]; }
  double entropy() const noexcept;
  /// Highest-probability action; ties go to the lowest index.
  Action argmax() const noexcept;
};

/// Max-subtracted softmax.
ActionDistribution softmax(std::span<const double> logits);

// The policy functions accept either a raw observation (from = 0) or the
// activation entering layer `from`, typically the cached encoder output
// at `params.frozen_count()`.

ActionDistribution policy_forward(const NetworkParams& params, const Tensor& input, std::size_t from = 0);

/// ∇θ log π(action | s) over the trainable layers.
Gradient policy_grad_logprob(const NetworkParams& params, const Tensor& input, Action action, std::size_t from = 0);
/// Same, also returning π(·|s) from the shared forward pass.
std::pair<ActionDistribution, Gradient> policy_logprob_and_grad(const NetworkParams& params, const Tensor& input,
                                                                Action action, std::size_t from = 0);

/// H(π(·|s)) and ∇θ H.
std::pair<double, Gradient> policy_entropy_and_grad(const NetworkParams& params, const Tensor& input,
                                                    std::size_t from = 0);

/// Logit-space derivatives, exposed for tests and the linear learner.
std::array<double, kActionCount> logprob_logit_grad(const ActionDistribution& dist, Action action);
std::array<double, kActionCount> entropy_logit_grad(const ActionDistribution& dist);

}  // namespace coach
