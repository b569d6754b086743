#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "coach/gridworld.hpp"
#include "coach/network.hpp"
#include "coach/policy.hpp"
#include "coach/rng.hpp"

namespace coach {

enum class OracleMode : std::uint8_t { target_argmax = 0, policy_advantage = 1, patrol_script = 2 };

const char* oracle_mode_name(OracleMode mode) noexcept;
/// Throws InputError for unknown names.
OracleMode parse_oracle_mode(const std::string& name);
/// target_argmax for goal_nav, patrol_script for patrol.
OracleMode default_oracle_mode(TaskId task) noexcept;

/// Synthetic trainer settings. The emission model (sparsity, sign errors,
/// diminishing returns) is a stand-in for human feedback habits.
struct OracleConfig {
  OracleMode mode = OracleMode::target_argmax;
  double gamma = 0.95;           // discount for the tabular values
  double feedback_prob = 0.25;   // p_fb
  double error_rate = 0.02;      // ε_err
  int delay = 1;                 // d
  bool diminishing_returns = true;
  std::uint64_t seed = 0;

  /// Throws InputError naming the first invalid field.
  void validate() const;
};

/// Trailing window and thresholds for diminishing returns.
inline constexpr std::size_t kAgreementWindow = 20;
inline constexpr double kAgreementHigh = 0.9;
inline constexpr double kAgreementLow = 0.7;

/// Advantages smaller than this are treated as zero by policy_advantage.
inline constexpr double kAdvantageTolerance = 1e-6;

/// Q and V over all 400 (cell, heading) states of goal_nav. Gold cells are
/// never occupied and hold zeros. Values use Q(s,a) = R(s,a) + γ V(s') with
/// V = 0 after reaching the goal, and ignore the 200-step episode cap, so the
/// step into the gold from an adjacent cell is worth exactly 199.
struct TabularValues {
  double gamma = 0.95;
  std::vector<double> q;  // [state * 3 + action]
  std::vector<double> v;  // [state]

  double at(int state, Action a) const { return q.at(static_cast<std::size_t>(state) * kActionCount + index_of(a)); }
  double advantage(int state, Action a) const { return at(state, a) - v.at(static_cast<std::size_t>(state)); }
};

/// Deterministic one-step model of goal_nav, shared by the solvers.
struct TransitionModel {
  std::vector<int> next;          // [state * 3 + action], -1 when the step reaches the goal
  std::vector<double> reward;     // [state * 3 + action]
};
const TransitionModel& goal_nav_model();

/// Occupiable goal_nav states (non-gold cells), in index order.
const std::vector<int>& goal_nav_states();

/// Q* by value iteration to a sup-norm residual < 1e-10.
/// Throws NumericError after 10^5 sweeps without convergence.
TabularValues solve_task_values(double gamma);

/// One distribution per state index (gold entries ignored).
using TabularPolicy = std::vector<ActionDistribution>;

/// π evaluated at each state's rendered frame (resolution taken from the input shape).
TabularPolicy tabulate_policy(const NetworkParams& policy);
/// Same, from cached encoder features per state (entries for gold states unused).
TabularPolicy tabulate_policy(const NetworkParams& policy, const std::vector<Tensor>& state_features);
/// Frozen-encoder output for every goal_nav state, for repeated tabulation.
std::vector<Tensor> encode_all_states(const NetworkParams& policy);

/// Q^π by iterative policy evaluation; same convergence rule as solve_task_values.
TabularValues evaluate_policy_tabular(const TabularPolicy& policy, double gamma);
TabularValues evaluate_policy_tabular(const NetworkParams& policy, double gamma);

/// The scripted trainer intent for patrol: walk the perimeter clockwise.
Action patrol_script_action(const WorldState& state);

/// Feedback before emission noise: +1 / -1 (0 only for a null advantage).
int base_signal(OracleMode mode, const WorldState& state, Action action, const TabularValues* values);

/// `x,z,heading,action,q` for every occupiable state.
void write_values_csv(std::ostream& out, const TabularValues& values);

/// Seeded synthetic trainer. Each query consumes exactly two uniform draws
/// (emission, then sign error) so the stream is independent of outcomes.
class Oracle {
 public:
  explicit Oracle(OracleConfig cfg);

  /// Judges `action` taken in `state` (the step from d ticks ago).
  /// `values` is Q* for target_argmax, Q^π for policy_advantage, unused for patrol_script.
  int feedback(const WorldState& state, Action action, const TabularValues* values);

  const OracleConfig& config() const noexcept { return cfg_; }
  double positive_scale() const noexcept { return positive_scale_; }
  double agreement_rate() const noexcept;

  void save(std::ostream& out) const;
  static Oracle load(std::istream& in);

 private:
  OracleConfig cfg_;
  Rng rng_;
  double positive_scale_ = 1.0;
  std::deque<bool> agreement_;
};

void save_oracle_config(std::ostream& out, const OracleConfig& cfg);
OracleConfig load_oracle_config(std::istream& in);

}  // namespace coach
