#include "coach/policy.hpp"

#include <algorithm>
#include <cmath>

#include "coach/errors.hpp"

namespace coach {

Action action_from_index(long index) {
  if (index < 0 || index >= static_cast<long>(kActionCount)) {
    throw InputError("action index " + std::to_string(index) + " outside {0,1,2}");
  }
  return static_cast<Action>(index);
}

const char* action_name(Action a) noexcept {
  switch (a) {
    case Action::forward: return "forward";
    case Action::rotate_left: return "rotate_left";
    case Action::rotate_right: return "rotate_right";
  }
  return "?";
}

double ActionDistribution::entropy() const noexcept {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Action ActionDistribution::argmax() const noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kActionCount; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<Action>(best);
}

ActionDistribution softmax(std::span<const double> logits) {
  if (logits.size() != kActionCount) {
    throw ConfigError("policy output has " + std::to_string(logits.size()) + " logits, expected 3");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  ActionDistribution d;
  double total = 0.0;
  for (std::size_t i = 0; i < kActionCount; ++i) {
    d.probs[i] = std::exp(logits[i] - top);
    total += d.probs[i];
  }
  for (double& p : d.probs) p /= total;
  return d;
}

std::array<double, kActionCount> logprob_logit_grad(const ActionDistribution& dist, Action action) {
  std::array<double, kActionCount> g{};
  for (std::size_t i = 0; i < kActionCount; ++i) g[i] = (i == index_of(action) ? 1.0 : 0.0) - dist.probs[i];
  return g;
}

std::array<double, kActionCount> entropy_logit_grad(const ActionDistribution& dist) {
  // dH/dz_k = -p_k (ln p_k + H)
  const double h = dist.entropy();
  std::array<double, kActionCount> g{};
  for (std::size_t i = 0; i < kActionCount; ++i) {
    const double p = dist.probs[i];
    g[i] = p > 0.0 ? -p * (std::log(p) + h) : 0.0;
  }
  return g;
}

ActionDistribution policy_forward(const NetworkParams& params, const Tensor& input, std::size_t from) {
  const Tensor logits = forward(params, input, from);
  return softmax(logits.values());
}

std::pair<ActionDistribution, Gradient> policy_logprob_and_grad(const NetworkParams& params, const Tensor& input,
                                                                Action action, std::size_t from) {
  const Action checked = action_from_index(static_cast<long>(index_of(action)));
  const auto trace = forward_trace(params, input, from);
  const auto dist = softmax(trace.output().values());
  const auto g = logprob_logit_grad(dist, checked);
  return {dist, backward(params, trace, Tensor({kActionCount}, {g.begin(), g.end()}))};
}

Gradient policy_grad_logprob(const NetworkParams& params, const Tensor& input, Action action, std::size_t from) {
  return policy_logprob_and_grad(params, input, action, from).second;
}

std::pair<double, Gradient> policy_entropy_and_grad(const NetworkParams& params, const Tensor& input,
                                                    std::size_t from) {
  const auto trace = forward_trace(params, input, from);
  const auto dist = softmax(trace.output().values());
  const auto g = entropy_logit_grad(dist);
  return {dist.entropy(), backward(params, trace, Tensor({kActionCount}, {g.begin(), g.end()}))};
}

}  // namespace coach
