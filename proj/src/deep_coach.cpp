#include "coach/deep_coach.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "coach/binary_io.hpp"
#include "coach/errors.hpp"

namespace coach {

void HyperParams::validate() const {
  if (delay < 0) throw InputError("delay d must be >= 0");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be > 0");
  if (!(trace_decay >= 0.0 && trace_decay < 1.0)) throw InputError("eligibility decay lambda must be in [0, 1)");
  if (window_size < 1) throw InputError("window size L must be >= 1");
  if (minibatch_size < 1) throw InputError("minibatch size m must be >= 1");
  if (!(entropy_coef >= 0.0)) throw InputError("entropy coefficient beta must be >= 0");
  if (!(ratio_clamp > 0.0)) throw InputError("importance ratio clamp must be > 0");
}

void check_window(const ExperienceWindow& window, std::size_t max_length) {
  const auto& trs = window.transitions;
  if (trs.empty() || trs.size() > max_length) {
    throw UsageError("window length " + std::to_string(trs.size()) + " outside [1, " + std::to_string(max_length) + "]");
  }
  for (std::size_t i = 0; i + 1 < trs.size(); ++i) {
    if (trs[i].feedback != 0) throw UsageError("window has feedback before its last transition");
  }
  if (trs.back().feedback == 0 || trs.back().feedback != window.final_feedback) {
    throw UsageError("window must end with its nonzero final feedback");
  }
  for (const auto& tr : trs) {
    if (!(tr.behavior_prob > 0.0)) throw UsageError("behavior probability must be > 0");
  }
}

void EligibilityBuffer::push(ExperienceWindow window) {
  window.id = insertions_++;
  windows_.push_back(std::move(window));
}

void EligibilityBuffer::restore(std::vector<ExperienceWindow> windows, std::uint64_t insertions) {
  if (insertions < windows.size()) throw FormatError("eligibility buffer: insertion counter below window count");
  windows_ = std::move(windows);
  insertions_ = insertions;
}

void StepHistory::record(StepRecord r) {
  records_.push_back(std::move(r));
  while (records_.size() > capacity_) records_.pop_front();
}

const StepRecord* StepHistory::find(std::int64_t t) const {
  for (const auto& r : records_) {
    if (r.t == t) return &r;
  }
  return nullptr;
}

bool append_delayed(WindowInProgress& window, const StepHistory& history, int feedback, int delay, std::int64_t t) {
  if (t < delay) return false;
  const StepRecord* past = history.find(t - delay);
  if (!past) throw UsageError("step history does not reach back to t-d = " + std::to_string(t - delay));
  window.transitions.push_back({past->features, past->action, past->prob, feedback});
  while (window.transitions.size() > window.capacity) window.transitions.pop_front();
  return true;
}

void commit_window(EligibilityBuffer& buffer, WindowInProgress& window, std::size_t max_length) {
  if (window.transitions.empty() || window.transitions.back().feedback == 0) {
    throw UsageError("commit_window requires the last transition to carry nonzero feedback");
  }
  ExperienceWindow w;
  const std::size_t keep = std::min(max_length, window.transitions.size());
  w.transitions.assign(window.transitions.end() - static_cast<long>(keep), window.transitions.end());
  w.final_feedback = w.transitions.back().feedback;
  check_window(w, max_length);
  buffer.push(std::move(w));
  window.transitions.clear();
}

Gradient window_trace(const ExperienceWindow& window, const NetworkParams& params, double trace_decay,
                      double ratio_clamp) {
  Gradient e = Gradient::zeros_like(params);
  for (const auto& tr : window.transitions) {
    auto [dist, grad] = policy_logprob_and_grad(params, tr.features, tr.action, params.frozen_count());
    const double ratio = dist[tr.action] / tr.behavior_prob;
    if (!std::isfinite(ratio)) {
      throw NumericError("non-finite importance ratio in window " + std::to_string(window.id));
    }
    e.scale(trace_decay);
    e.add_scaled(grad, std::clamp(ratio, 0.0, ratio_clamp));
  }
  return e;
}

ActionChoice select_action(const NetworkParams& params, const Tensor& input, std::size_t from) {
  const auto dist = policy_forward(params, input, from);
  const Action a = dist.argmax();
  return {a, dist[a], dist};
}

UpdateDirection update_direction(const EligibilityBuffer& buffer, const NetworkParams& params, const HyperParams& hp,
                                 const Tensor& current_features, Rng& rng) {
  UpdateDirection dir{Gradient::zeros_like(params), Gradient::zeros_like(params), {}};
  if (buffer.empty()) return dir;
  std::map<std::size_t, Gradient> traces;
  const double inv_m = 1.0 / static_cast<double>(hp.minibatch_size);
  for (std::size_t k = 0; k < hp.minibatch_size; ++k) {
    const std::size_t idx = rng.below(buffer.size());
    dir.sampled.push_back(idx);
    auto it = traces.find(idx);
    if (it == traces.end()) {
      it = traces.emplace(idx, window_trace(buffer.at(idx), params, hp.trace_decay, hp.ratio_clamp)).first;
    }
    dir.feedback_part.add_scaled(it->second, inv_m * buffer.at(idx).final_feedback);
  }
  if (hp.entropy_coef != 0.0) {
    auto [h, grad] = policy_entropy_and_grad(params, current_features, params.frozen_count());
    dir.entropy_part.add_scaled(grad, hp.entropy_coef);
  }
  return dir;
}

bool minibatch_update(const EligibilityBuffer& buffer, NetworkParams& params, OptimizerState& opt,
                      const HyperParams& hp, const Tensor& current_features, Rng& rng) {
  if (buffer.empty()) return false;
  auto dir = update_direction(buffer, params, hp, current_features, rng);
  dir.feedback_part.add_scaled(dir.entropy_part, 1.0);
  if (!dir.feedback_part.all_finite()) throw NumericError("non-finite update direction");
  apply_optimizer(opt, params, dir.feedback_part);
  return true;
}

DeepCoachLearner::DeepCoachLearner(NetworkParams policy, HyperParams hp, std::uint64_t seed)
    : params_(std::move(policy)),
      hp_(hp),
      history_(static_cast<std::size_t>(hp.delay) + 1),
      rng_(mix_seed(seed, 41)) {
  hp_.validate();
  if (params_.frozen_count() == 0) throw ConfigError("policy network has no frozen encoder prefix");
  opt_ = make_optimizer({OptimizerKind::rmsprop, hp_.learning_rate}, params_);
  window_.capacity = hp_.window_size;
}

DeepCoachLearner::Decision DeepCoachLearner::act(const Observation& obs) {
  ++t_;
  current_features_ = forward_until(params_, obs, params_.frozen_count());
  const auto choice = select_action(params_, current_features_, params_.frozen_count());
  history_.record({t_, current_features_, choice.action, choice.prob});
  return {choice.action, choice.prob, choice.dist.entropy()};
}

int DeepCoachLearner::learn(int feedback) {
  if (feedback < -1 || feedback > 1) throw InputError("feedback must be -1, 0 or +1");
  if (t_ < 0) throw UsageError("learn() before act()");
  const bool paired = append_delayed(window_, history_, feedback, hp_.delay, t_);
  if (paired && feedback != 0) commit_window(buffer_, window_, hp_.window_size);
  if (minibatch_update(buffer_, params_, opt_, hp_, current_features_, rng_)) ++updates_;
  return paired ? feedback : 0;
}

void save_hyper_params(std::ostream& out, const HyperParams& hp) {
  io::write_i64(out, hp.delay);
  io::write_f64(out, hp.learning_rate);
  io::write_f64(out, hp.trace_decay);
  io::write_u64(out, hp.window_size);
  io::write_u64(out, hp.minibatch_size);
  io::write_f64(out, hp.entropy_coef);
  io::write_f64(out, hp.ratio_clamp);
}

HyperParams load_hyper_params(std::istream& in) {
  HyperParams hp;
  hp.delay = static_cast<int>(io::read_i64(in));
  hp.learning_rate = io::read_f64(in);
  hp.trace_decay = io::read_f64(in);
  hp.window_size = io::read_u64(in);
  hp.minibatch_size = io::read_u64(in);
  hp.entropy_coef = io::read_f64(in);
  hp.ratio_clamp = io::read_f64(in);
  hp.validate();
  return hp;
}

void save_transition(std::ostream& out, const Transition& tr) {
  io::write_tensor(out, tr.features);
  io::write_u8(out, static_cast<std::uint8_t>(tr.action));
  io::write_f64(out, tr.behavior_prob);
  io::write_i64(out, tr.feedback);
}

Transition load_transition(std::istream& in) {
  Transition tr;
  tr.features = io::read_tensor(in);
  tr.action = action_from_index(io::read_u8(in));
  tr.behavior_prob = io::read_f64(in);
  tr.feedback = static_cast<int>(io::read_i64(in));
  return tr;
}

void DeepCoachLearner::save(std::ostream& out) const {
  io::write_magic(out, "COACHDL1");
  save_network(out, params_);
  save_hyper_params(out, hp_);
  save_optimizer(out, opt_);
  io::write_u64(out, buffer_.insertions());
  io::write_u64(out, buffer_.size());
  for (const auto& w : buffer_.windows()) {
    io::write_u64(out, w.id);
    io::write_i64(out, w.final_feedback);
    io::write_u32(out, static_cast<std::uint32_t>(w.transitions.size()));
    for (const auto& tr : w.transitions) save_transition(out, tr);
  }
  io::write_u32(out, static_cast<std::uint32_t>(window_.transitions.size()));
  for (const auto& tr : window_.transitions) save_transition(out, tr);
  io::write_u32(out, static_cast<std::uint32_t>(history_.records().size()));
  for (const auto& r : history_.records()) {
    io::write_i64(out, r.t);
    io::write_tensor(out, r.features);
    io::write_u8(out, static_cast<std::uint8_t>(r.action));
    io::write_f64(out, r.prob);
  }
  io::write_string(out, rng_.save());
  io::write_i64(out, t_);
  io::write_tensor(out, current_features_);
  io::write_u64(out, updates_);
}

DeepCoachLearner DeepCoachLearner::load(std::istream& in) {
  io::expect_magic(in, "COACHDL1", "deep coach learner");
  DeepCoachLearner l;
  l.params_ = load_network(in);
  l.hp_ = load_hyper_params(in);
  l.opt_ = load_optimizer(in);
  const auto insertions = io::read_u64(in);
  const auto n_windows = io::read_u64(in);
  std::vector<ExperienceWindow> windows(n_windows);
  for (auto& w : windows) {
    w.id = io::read_u64(in);
    w.final_feedback = static_cast<int>(io::read_i64(in));
    w.transitions.resize(io::read_u32(in));
    for (auto& tr : w.transitions) tr = load_transition(in);
  }
  l.buffer_.restore(std::move(windows), insertions);
  l.window_.capacity = l.hp_.window_size;
  const auto n_window = io::read_u32(in);
  for (std::uint32_t i = 0; i < n_window; ++i) l.window_.transitions.push_back(load_transition(in));
  l.history_ = StepHistory(static_cast<std::size_t>(l.hp_.delay) + 1);
  const auto n_hist = io::read_u32(in);
  for (std::uint32_t i = 0; i < n_hist; ++i) {
    StepRecord r;
    r.t = io::read_i64(in);
    r.features = io::read_tensor(in);
    r.action = action_from_index(io::read_u8(in));
    r.prob = io::read_f64(in);
    l.history_.record(std::move(r));
  }
  l.rng_.restore(io::read_string(in));
  l.t_ = io::read_i64(in);
  l.current_features_ = io::read_tensor(in);
  l.updates_ = io::read_u64(in);
  return l;
}

}  // namespace coach
