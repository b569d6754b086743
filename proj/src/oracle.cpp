#include "coach/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "coach/binary_io.hpp"
#include "coach/cae.hpp"
#include "coach/errors.hpp"

namespace coach {

namespace {

constexpr double kResidualTarget = 1e-10;
constexpr int kMaxSweeps = 100000;

std::size_t qi(int state, std::size_t action) { return static_cast<std::size_t>(state) * kActionCount + action; }

// Gauss-Seidel style sweeps would converge faster but Jacobi keeps the
// fixed point independent of state ordering.
template <typename Backup>
TabularValues iterate(double gamma, Backup&& backup_v) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("discount gamma must be in [0, 1)");
  const auto& model = goal_nav_model();
  TabularValues values;
  values.gamma = gamma;
  values.q.assign(static_cast<std::size_t>(kStateCount) * kActionCount, 0.0);
  values.v.assign(kStateCount, 0.0);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double residual = 0.0;
    for (int s : goal_nav_states()) {
      for (std::size_t a = 0; a < kActionCount; ++a) {
        const int n = model.next[qi(s, a)];
        const double q = model.reward[qi(s, a)] + (n < 0 ? 0.0 : gamma * values.v[static_cast<std::size_t>(n)]);
        residual = std::max(residual, std::abs(q - values.q[qi(s, a)]));
        values.q[qi(s, a)] = q;
      }
    }
    for (int s : goal_nav_states()) values.v[static_cast<std::size_t>(s)] = backup_v(s, values);
    if (!std::isfinite(residual)) throw NumericError("value iteration diverged");
    if (residual < kResidualTarget) {
      // One more Q backup so Q and V are mutually consistent to the final V.
      for (int s : goal_nav_states()) {
        for (std::size_t a = 0; a < kActionCount; ++a) {
          const int n = model.next[qi(s, a)];
          values.q[qi(s, a)] = model.reward[qi(s, a)] + (n < 0 ? 0.0 : gamma * values.v[static_cast<std::size_t>(n)]);
        }
      }
      for (int s : goal_nav_states()) values.v[static_cast<std::size_t>(s)] = backup_v(s, values);
      return values;
    }
  }
  throw NumericError("value iteration did not converge within 100000 sweeps");
}

Heading patrol_target(int cx, int cz) {
  constexpr int last = kRoomCells - 1;
  if (cz == 0 && cx < last) return Heading::east;
  if (cx == last && cz < last) return Heading::south;
  if (cz == last && cx > 0) return Heading::west;
  if (cx == 0 && cz > 0) return Heading::north;
  // Interior: head for the nearest wall (ties in N, E, S, W order).
  const int dist[4] = {cz, last - cx, last - cz, cx};
  return static_cast<Heading>(std::min_element(dist, dist + 4) - dist);
}

}  // namespace

const char* oracle_mode_name(OracleMode mode) noexcept {
  switch (mode) {
    case OracleMode::target_argmax: return "target_argmax";
    case OracleMode::policy_advantage: return "policy_advantage";
    case OracleMode::patrol_script: return "patrol_script";
  }
  return "?";
}

OracleMode parse_oracle_mode(const std::string& name) {
  for (OracleMode m : {OracleMode::target_argmax, OracleMode::policy_advantage, OracleMode::patrol_script}) {
    if (name == oracle_mode_name(m)) return m;
  }
  throw InputError("unknown oracle mode '" + name + "'");
}

OracleMode default_oracle_mode(TaskId task) noexcept {
  return task == TaskId::patrol ? OracleMode::patrol_script : OracleMode::target_argmax;
}

void OracleConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("oracle gamma must be in [0, 1)");
  if (!(feedback_prob >= 0.0 && feedback_prob <= 1.0)) throw InputError("feedback probability must be in [0, 1]");
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) throw InputError("error rate must be in [0, 1]");
  if (delay < 0) throw InputError("oracle delay must be >= 0");
}

const TransitionModel& goal_nav_model() {
  static const TransitionModel model = [] {
    TransitionModel m;
    m.next.assign(static_cast<std::size_t>(kStateCount) * kActionCount, -1);
    m.reward.assign(static_cast<std::size_t>(kStateCount) * kActionCount, 0.0);
    for (int s : goal_nav_states()) {
      const WorldState ws = state_from_index(TaskId::goal_nav, s);
      for (std::size_t a = 0; a < kActionCount; ++a) {
        const auto [next, metrics] = step(ws, static_cast<Action>(a));
        m.reward[qi(s, a)] = next.last_reward;
        m.next[qi(s, a)] = next.reached_goal ? -1 : state_index(next);
      }
    }
    return m;
  }();
  return model;
}

const std::vector<int>& goal_nav_states() {
  static const std::vector<int> states = [] {
    std::vector<int> out;
    for (int s = 0; s < kStateCount; ++s) {
      const int cell = s / 4;
      if (!is_gold_cell(cell % kRoomCells, cell / kRoomCells)) out.push_back(s);
    }
    return out;
  }();
  return states;
}

TabularValues solve_task_values(double gamma) {
  return iterate(gamma, [](int s, const TabularValues& v) {
    return std::max({v.at(s, Action::forward), v.at(s, Action::rotate_left), v.at(s, Action::rotate_right)});
  });
}

std::vector<Tensor> encode_all_states(const NetworkParams& policy) {
  const int resolution = encoder_preset(preset_for_input(policy.input_shape())).resolution;
  std::vector<Tensor> features(kStateCount);
  for (int s : goal_nav_states()) {
    features[static_cast<std::size_t>(s)] =
        forward_until(policy, render(state_from_index(TaskId::goal_nav, s), resolution), policy.frozen_count());
  }
  return features;
}

TabularPolicy tabulate_policy(const NetworkParams& policy, const std::vector<Tensor>& state_features) {
  if (state_features.size() != static_cast<std::size_t>(kStateCount)) {
    throw UsageError("expected features for all 400 states");
  }
  TabularPolicy table(kStateCount);
  for (int s : goal_nav_states()) {
    table[static_cast<std::size_t>(s)] =
        policy_forward(policy, state_features[static_cast<std::size_t>(s)], policy.frozen_count());
  }
  return table;
}

TabularPolicy tabulate_policy(const NetworkParams& policy) { return tabulate_policy(policy, encode_all_states(policy)); }

TabularValues evaluate_policy_tabular(const TabularPolicy& policy, double gamma) {
  if (policy.size() != static_cast<std::size_t>(kStateCount)) throw UsageError("policy table must cover 400 states");
  return iterate(gamma, [&policy](int s, const TabularValues& v) {
    const auto& pi = policy[static_cast<std::size_t>(s)];
    double total = 0.0;
    for (std::size_t a = 0; a < kActionCount; ++a) total += pi.probs[a] * v.at(s, static_cast<Action>(a));
    return total;
  });
}

TabularValues evaluate_policy_tabular(const NetworkParams& policy, double gamma) {
  return evaluate_policy_tabular(tabulate_policy(policy), gamma);
}

Action patrol_script_action(const WorldState& state) {
  const Heading target = patrol_target(state.cell_x(), state.cell_z());
  if (state.heading == target) return Action::forward;
  if (rotate_left(state.heading) == target) return Action::rotate_left;
  return Action::rotate_right;
}

int base_signal(OracleMode mode, const WorldState& state, Action action, const TabularValues* values) {
  if (mode == OracleMode::patrol_script) return action == patrol_script_action(state) ? 1 : -1;
  if (state.task != TaskId::goal_nav) throw UsageError("tabular oracle modes require the goal_nav task");
  if (values == nullptr) throw UsageError("tabular oracle mode needs a value table");
  const int s = state_index(state);
  if (mode == OracleMode::target_argmax) {
    // Advantage under the optimal policy is zero exactly on the argmax set.
    return values->advantage(s, action) > -kAdvantageTolerance ? 1 : -1;
  }
  const double adv = values->advantage(s, action);
  if (std::abs(adv) < kAdvantageTolerance) return 0;
  return adv > 0.0 ? 1 : -1;
}

void write_values_csv(std::ostream& out, const TabularValues& values) {
  out << "x,z,heading,action,q\n";
  char buf[64];
  for (int s : goal_nav_states()) {
    const int cell = s / 4;
    for (std::size_t a = 0; a < kActionCount; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", values.at(s, static_cast<Action>(a)));
      out << cell % kRoomCells << ',' << cell / kRoomCells << ',' << s % 4 << ',' << a << ',' << buf << '\n';
    }
  }
}

Oracle::Oracle(OracleConfig cfg) : cfg_(cfg), rng_(mix_seed(cfg.seed, 51)) { cfg_.validate(); }

double Oracle::agreement_rate() const noexcept {
  if (agreement_.empty()) return 0.0;
  return static_cast<double>(std::count(agreement_.begin(), agreement_.end(), true)) /
         static_cast<double>(agreement_.size());
}

int Oracle::feedback(const WorldState& state, Action action, const TabularValues* values) {
  const int base = base_signal(cfg_.mode, state, action, values);
  const double emit_draw = rng_.uniform();
  const double flip_draw = rng_.uniform();

  const double p_emit = cfg_.feedback_prob * (base > 0 ? positive_scale_ : 1.0);
  int signal = 0;
  if (base != 0 && emit_draw < p_emit) signal = flip_draw < cfg_.error_rate ? -base : base;

  if (cfg_.diminishing_returns) {
    agreement_.push_back(base > 0);
    if (agreement_.size() > kAgreementWindow) agreement_.pop_front();
    if (agreement_.size() == kAgreementWindow) {
      const double rate = agreement_rate();
      if (rate > kAgreementHigh) {
        positive_scale_ *= 0.5;
      } else if (rate < kAgreementLow) {
        positive_scale_ = 1.0;
      }
    }
  }
  return signal;
}

void save_oracle_config(std::ostream& out, const OracleConfig& cfg) {
  io::write_u8(out, static_cast<std::uint8_t>(cfg.mode));
  io::write_f64(out, cfg.gamma);
  io::write_f64(out, cfg.feedback_prob);
  io::write_f64(out, cfg.error_rate);
  io::write_i64(out, cfg.delay);
  io::write_u8(out, cfg.diminishing_returns ? 1 : 0);
  io::write_u64(out, cfg.seed);
}

OracleConfig load_oracle_config(std::istream& in) {
  OracleConfig cfg;
  const auto mode = io::read_u8(in);
  if (mode > 2) throw FormatError("oracle config: bad mode");
  cfg.mode = static_cast<OracleMode>(mode);
  cfg.gamma = io::read_f64(in);
  cfg.feedback_prob = io::read_f64(in);
  cfg.error_rate = io::read_f64(in);
  cfg.delay = static_cast<int>(io::read_i64(in));
  cfg.diminishing_returns = io::read_u8(in) != 0;
  cfg.seed = io::read_u64(in);
  cfg.validate();
  return cfg;
}

void Oracle::save(std::ostream& out) const {
  io::write_magic(out, "COACHOR1");
  save_oracle_config(out, cfg_);
  io::write_string(out, rng_.save());
  io::write_f64(out, positive_scale_);
  io::write_u32(out, static_cast<std::uint32_t>(agreement_.size()));
  for (bool b : agreement_) io::write_u8(out, b ? 1 : 0);
}

Oracle Oracle::load(std::istream& in) {
  io::expect_magic(in, "COACHOR1", "oracle");
  Oracle o(load_oracle_config(in));
  o.rng_.restore(io::read_string(in));
  o.positive_scale_ = io::read_f64(in);
  const auto n = io::read_u32(in);
  if (n > kAgreementWindow) throw FormatError("oracle: agreement window too long");
  for (std::uint32_t i = 0; i < n; ++i) o.agreement_.push_back(io::read_u8(in) != 0);
  return o;
}

}  // namespace coach
