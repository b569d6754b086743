#pragma once

#include <iosfwd>

#include "coach/deep_coach.hpp"

namespace coach {

/// Real-time COACH baseline: softmax-linear policy on the frozen encoding,
/// one continuous eligibility trace, plain gradient ascent on nonzero feedback.
class LinearCoachLearner {
 public:
  /// `policy` must be an encoder prefix followed by a single dense(3) layer.
  LinearCoachLearner(NetworkParams policy, HyperParams hp);

  using Decision = DeepCoachLearner::Decision;

  Decision act(const Observation& obs);
  /// Extends the trace with ∇log π of step t-d and, if f_t ≠ 0, applies θ ← θ + α f e.
  int learn(int feedback);

  const NetworkParams& params() const noexcept { return params_; }
  const Gradient& trace() const noexcept { return trace_; }
  std::int64_t timestep() const noexcept { return t_; }

  void save(std::ostream& out) const;
  static LinearCoachLearner load(std::istream& in);

 private:
  LinearCoachLearner() = default;

  NetworkParams params_;
  HyperParams hp_;
  OptimizerState opt_;
  Gradient trace_;
  StepHistory history_;
  std::int64_t t_ = -1;
};

}  // namespace coach
