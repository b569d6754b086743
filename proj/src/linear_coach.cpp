#include "coach/linear_coach.hpp"

#include <istream>
#include <ostream>

#include "coach/binary_io.hpp"
#include "coach/errors.hpp"

namespace coach {

LinearCoachLearner::LinearCoachLearner(NetworkParams policy, HyperParams hp)
    : params_(std::move(policy)), hp_(hp), history_(static_cast<std::size_t>(hp.delay) + 1) {
  hp_.validate();
  if (params_.frozen_count() + 1 != params_.layer_count() ||
      !std::holds_alternative<Dense>(params_.layer(params_.layer_count() - 1))) {
    throw ConfigError("linear COACH expects a frozen encoder followed by one dense layer");
  }
  opt_ = make_optimizer({OptimizerKind::sgd, hp_.learning_rate}, params_);
  trace_ = Gradient::zeros_like(params_);
}

LinearCoachLearner::Decision LinearCoachLearner::act(const Observation& obs) {
  ++t_;
  Tensor features = forward_until(params_, obs, params_.frozen_count());
  const auto choice = select_action(params_, features, params_.frozen_count());
  history_.record({t_, std::move(features), choice.action, choice.prob});
  return {choice.action, choice.prob, choice.dist.entropy()};
}

int LinearCoachLearner::learn(int feedback) {
  if (feedback < -1 || feedback > 1) throw InputError("feedback must be -1, 0 or +1");
  if (t_ < 0) throw UsageError("learn() before act()");
  if (t_ < hp_.delay) return 0;
  const StepRecord* past = history_.find(t_ - hp_.delay);
  if (!past) throw UsageError("step history does not reach back to t-d");
  trace_.scale(hp_.trace_decay);
  trace_.add_scaled(policy_grad_logprob(params_, past->features, past->action, params_.frozen_count()), 1.0);
  if (feedback != 0) {
    Gradient step = trace_;
    step.scale(feedback);
    apply_optimizer(opt_, params_, step);
  }
  return feedback;
}

void LinearCoachLearner::save(std::ostream& out) const {
  io::write_magic(out, "COACHLL1");
  save_network(out, params_);
  save_hyper_params(out, hp_);
  save_optimizer(out, opt_);
  io::write_u32(out, static_cast<std::uint32_t>(trace_.layers.size()));
  for (const auto& layer : trace_.layers) {
    io::write_u32(out, static_cast<std::uint32_t>(layer.size()));
    for (const auto& t : layer) io::write_tensor(out, t);
  }
  io::write_u32(out, static_cast<std::uint32_t>(history_.records().size()));
  for (const auto& r : history_.records()) {
    io::write_i64(out, r.t);
    io::write_tensor(out, r.features);
    io::write_u8(out, static_cast<std::uint8_t>(r.action));
    io::write_f64(out, r.prob);
  }
  io::write_i64(out, t_);
}

LinearCoachLearner LinearCoachLearner::load(std::istream& in) {
  io::expect_magic(in, "COACHLL1", "linear coach learner");
  LinearCoachLearner l;
  l.params_ = load_network(in);
  l.hp_ = load_hyper_params(in);
  l.opt_ = load_optimizer(in);
  l.trace_.first_layer = l.params_.frozen_count();
  l.trace_.layers.resize(io::read_u32(in));
  for (auto& layer : l.trace_.layers) {
    layer.resize(io::read_u32(in));
    for (auto& t : layer) t = io::read_tensor(in);
  }
  l.history_ = StepHistory(static_cast<std::size_t>(l.hp_.delay) + 1);
  const auto n = io::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    StepRecord r;
    r.t = io::read_i64(in);
    r.features = io::read_tensor(in);
    r.action = action_from_index(io::read_u8(in));
    r.prob = io::read_f64(in);
    l.history_.record(std::move(r));
  }
  l.t_ = io::read_i64(in);
  return l;
}

}  // namespace coach
