#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "coach/optimizer.hpp"
#include "coach/policy.hpp"
#include "coach/rng.hpp"

namespace coach {

struct HyperParams {
  int delay = 1;                     // d
  double learning_rate = 0.00025;    // α
  double trace_decay = 0.35;         // λ
  std::size_t window_size = 10;      // L
  std::size_t minibatch_size = 16;   // m
  double entropy_coef = 1.5;         // β
  double ratio_clamp = 10.0;         // importance ratios are clamped to [0, ratio_clamp]

  /// Throws InputError naming the first invalid field.
  void validate() const;
};

/// One recorded step. `features` is the frozen-encoder output for the state.
struct Transition {
  Tensor features;
  Action action = Action::forward;
  double behavior_prob = 1.0;
  int feedback = 0;
};

/// At most L transitions; only the last one carries nonzero feedback.
struct ExperienceWindow {
  std::vector<Transition> transitions;
  int final_feedback = 0;
  std::uint64_t id = 0;
};

/// Unbounded FIFO of committed windows.
class EligibilityBuffer {
 public:
  void push(ExperienceWindow window);
  std::size_t size() const noexcept { return windows_.size(); }
  bool empty() const noexcept { return windows_.empty(); }
  const ExperienceWindow& at(std::size_t i) const { return windows_.at(i); }
  const std::vector<ExperienceWindow>& windows() const noexcept { return windows_; }
  std::uint64_t insertions() const noexcept { return insertions_; }
  /// Replaces the contents, keeping stored window ids (snapshot restore).
  void restore(std::vector<ExperienceWindow> windows, std::uint64_t insertions);

 private:
  std::vector<ExperienceWindow> windows_;
  std::uint64_t insertions_ = 0;
};

/// Throws UsageError if `window` violates the window invariants for size L.
void check_window(const ExperienceWindow& window, std::size_t max_length);

/// Recent (features, action, prob) records keyed by timestep, enough to look d steps back.
struct StepRecord {
  std::int64_t t = 0;
  Tensor features;
  Action action = Action::forward;
  double prob = 1.0;
};

class StepHistory {
 public:
  explicit StepHistory(std::size_t capacity = 2) : capacity_(capacity) {}
  void record(StepRecord r);
  /// Record for timestep t, if still held.
  const StepRecord* find(std::int64_t t) const;
  const std::deque<StepRecord>& records() const noexcept { return records_; }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<StepRecord> records_;
};

/// Window under construction; holds only the L most recent transitions since
/// older ones would be truncated at commit anyway.
struct WindowInProgress {
  std::deque<Transition> transitions;
  std::size_t capacity = 10;
};

/// Pairs feedback arriving at `t` with the step from `t - delay`. Returns false
/// (window unchanged) when t < delay.
bool append_delayed(WindowInProgress& window, const StepHistory& history, int feedback, int delay, std::int64_t t);

/// Stores the L most recent transitions as a window and empties `window`.
/// Throws UsageError if the tail transition carries no feedback.
void commit_window(EligibilityBuffer& buffer, WindowInProgress& window, std::size_t max_length);

/// e ← λe + clamp(π(a|s)/p)·∇log π(a|s) over the window in stored order.
/// Throws NumericError (naming the window id) on a non-finite ratio.
Gradient window_trace(const ExperienceWindow& window, const NetworkParams& params, double trace_decay,
                      double ratio_clamp = 10.0);

/// Greedy action and its probability. Ties go to the lowest action index.
struct ActionChoice {
  Action action;
  double prob;
  ActionDistribution dist;
};
ActionChoice select_action(const NetworkParams& params, const Tensor& input, std::size_t from = 0);

/// The two parts of the update direction ē before the optimizer.
struct UpdateDirection {
  Gradient feedback_part;  // (1/m) Σ F·trace
  Gradient entropy_part;   // β ∇H(π(·|s_t))
  std::vector<std::size_t> sampled;  // buffer indices of the minibatch
};

UpdateDirection update_direction(const EligibilityBuffer& buffer, const NetworkParams& params, const HyperParams& hp,
                                 const Tensor& current_features, Rng& rng);

/// One learning step. An empty buffer leaves parameters and optimizer untouched.
/// Returns true when an update was applied.
bool minibatch_update(const EligibilityBuffer& buffer, NetworkParams& params, OptimizerState& opt,
                      const HyperParams& hp, const Tensor& current_features, Rng& rng);

/// Algorithm state for one Deep COACH agent: policy, optimizer, replay
/// buffer, window in progress and step history. The caller drives it with
/// act() then learn() once per environment step.
class DeepCoachLearner {
 public:
  DeepCoachLearner(NetworkParams policy, HyperParams hp, std::uint64_t seed);

  struct Decision {
    Action action;
    double prob;
    double entropy;
  };

  /// Observes s_t, records (features, a_t, p_t) and returns the greedy action.
  Decision act(const Observation& obs);
  /// Consumes f_t for the current step and performs the per-step update.
  /// Returns the feedback value actually paired with a past step (0 if none).
  int learn(int feedback);

  const NetworkParams& params() const noexcept { return params_; }
  const OptimizerState& optimizer() const noexcept { return opt_; }
  const EligibilityBuffer& buffer() const noexcept { return buffer_; }
  const WindowInProgress& window() const noexcept { return window_; }
  const HyperParams& hyper_params() const noexcept { return hp_; }
  std::int64_t timestep() const noexcept { return t_; }
  std::uint64_t updates_applied() const noexcept { return updates_; }

  void save(std::ostream& out) const;
  static DeepCoachLearner load(std::istream& in);

 private:
  DeepCoachLearner() = default;

  NetworkParams params_;
  HyperParams hp_;
  OptimizerState opt_;
  EligibilityBuffer buffer_;
  WindowInProgress window_;
  StepHistory history_;
  Rng rng_;
  std::int64_t t_ = -1;  // timestep of the last act()
  Tensor current_features_;
  std::uint64_t updates_ = 0;
};

void save_hyper_params(std::ostream& out, const HyperParams& hp);
HyperParams load_hyper_params(std::istream& in);
void save_transition(std::ostream& out, const Transition& tr);
Transition load_transition(std::istream& in);

}  // namespace coach
