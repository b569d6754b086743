#include "coach/run.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "coach/binary_io.hpp"
#include "coach/cae.hpp"
#include "coach/errors.hpp"

namespace coach {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("run log: bad ") + what + " '" + s + "'");
  }
}

long long parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("run log: bad ") + what + " '" + s + "'");
  }
}

}  // namespace

const char* algo_name(Algo algo) noexcept { return algo == Algo::deep ? "deep" : "linear"; }

Algo parse_algo(const std::string& name) {
  if (name == "deep") return Algo::deep;
  if (name == "linear") return Algo::linear;
  throw InputError("unknown algorithm '" + name + "' (expected deep or linear)");
}

const char* feedback_source_name(FeedbackSource source) noexcept {
  return source == FeedbackSource::oracle ? "oracle" : "live";
}

FeedbackSource parse_feedback_source(const std::string& name) {
  if (name == "oracle") return FeedbackSource::oracle;
  if (name == "live") return FeedbackSource::live;
  throw InputError("unknown feedback source '" + name + "' (expected live or oracle)");
}

RunConfig default_run_config(TaskId task) {
  RunConfig cfg;
  cfg.task = task;
  cfg.oracle.mode = default_oracle_mode(task);
  return cfg;
}

std::string format_run_row(const RunRow& r) {
  std::string line = std::to_string(r.step) + ',' + std::to_string(r.episode) + ',' +
                     std::to_string(index_of(r.action)) + ',' + fmt_double(r.prob) + ',' +
                     std::to_string(r.feedback) + ',' + fmt_double(r.entropy) + ',';
  if (r.env_reward) line += fmt_double(*r.env_reward);
  line += ',' + fmt_double(r.center_dist) + ',' + fmt_double(r.angle_deg);
  return line;
}

void write_run_log(std::ostream& out, const std::vector<RunRow>& rows) {
  out << kRunLogHeader << '\n';
  for (const auto& r : rows) out << format_run_row(r) << '\n';
}

std::vector<RunRow> read_run_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRunLogHeader) throw FormatError("run log: bad header");
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw FormatError("run log: expected 9 fields in '" + line + "'");
    RunRow r;
    r.step = parse_int(f[0], "step");
    r.episode = static_cast<int>(parse_int(f[1], "episode"));
    const auto action = parse_int(f[2], "action");
    if (action < 0 || action >= static_cast<std::int64_t>(kActionCount)) {
      throw FormatError("run log: action outside {0,1,2} in '" + line + "'");
    }
    r.action = static_cast<Action>(action);
    r.prob = parse_double(f[3], "prob");
    r.feedback = static_cast<int>(parse_int(f[4], "feedback"));
    if (r.feedback < -1 || r.feedback > 1) throw FormatError("run log: feedback outside {-1,0,1} in '" + line + "'");
    r.entropy = parse_double(f[5], "entropy");
    if (!f[6].empty()) r.env_reward = parse_double(f[6], "env_reward");
    r.center_dist = parse_double(f[7], "center_dist");
    r.angle_deg = parse_double(f[8], "angle_deg");
    rows.push_back(r);
  }
  return rows;
}

std::vector<FeedbackChunkCount> feedback_breakdown(const std::vector<RunRow>& rows, std::size_t chunk) {
  if (chunk == 0) throw InputError("chunk size must be >= 1");
  std::vector<FeedbackChunkCount> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i % chunk == 0) out.push_back({i / chunk, 0, 0});
    if (rows[i].feedback > 0) ++out.back().pos_count;
    if (rows[i].feedback < 0) ++out.back().neg_count;
  }
  return out;
}

void write_feedback_breakdown(std::ostream& out, const std::vector<FeedbackChunkCount>& chunks) {
  out << "chunk,pos_count,neg_count\n";
  for (const auto& c : chunks) out << c.chunk << ',' << c.pos_count << ',' << c.neg_count << '\n';
}

std::shared_ptr<const TabularValues> cached_optimal_values(double gamma) {
  static std::mutex mutex;
  static std::map<double, std::shared_ptr<const TabularValues>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[gamma];
  if (!slot) slot = std::make_shared<const TabularValues>(solve_task_values(gamma));
  return slot;
}

TrainingRun::TrainingRun(RunConfig cfg, const NetworkParams& encoder) : cfg_(std::move(cfg)) {
  cfg_.hp.validate();
  cfg_.oracle.seed = cfg_.seed;
  cfg_.oracle.delay = cfg_.hp.delay;
  cfg_.oracle.validate();
  if (cfg_.oracle.mode == OracleMode::patrol_script) {
    if (cfg_.task != TaskId::patrol && cfg_.source == FeedbackSource::oracle) {
      throw ConfigError("patrol_script oracle requires the patrol task");
    }
  } else if (cfg_.task != TaskId::goal_nav && cfg_.source == FeedbackSource::oracle) {
    throw ConfigError(std::string(oracle_mode_name(cfg_.oracle.mode)) + " oracle requires the goal_nav task");
  }
  if (encoder.layer_count() == 0) throw ConfigError("encoder snapshot has no layers");
  const NetworkParams frozen = encoder.with_frozen(encoder.layer_count());
  const auto& preset = encoder_preset(preset_for_input(frozen.input_shape()));
  effective_hp_ = cfg_.hp;
  effective_hp_.learning_rate *= preset.learning_rate_scale;
  if (cfg_.algo == Algo::deep) {
    const PolicyHeadSpec head{shape_size(frozen.output_shape()), 30};
    learner_.emplace<DeepCoachLearner>(encoder_freeze(frozen, head, cfg_.seed), effective_hp_, cfg_.seed);
  } else {
    learner_.emplace<LinearCoachLearner>(linear_policy(frozen, cfg_.seed), effective_hp_);
  }
  if (cfg_.source == FeedbackSource::oracle) oracle_.emplace(cfg_.oracle);
  env_seed_ = mix_seed(cfg_.seed, 61);
  world_ = reset(cfg_.task, env_seed_);
  init_derived();
}

void TrainingRun::init_derived() {
  resolution_ = encoder_preset(preset_for_input(policy().input_shape())).resolution;
  if (!oracle_) return;
  if (cfg_.oracle.mode == OracleMode::target_argmax) optimal_values_ = cached_optimal_values(cfg_.oracle.gamma);
  if (cfg_.oracle.mode == OracleMode::policy_advantage) state_features_ = encode_all_states(policy());
}

const NetworkParams& TrainingRun::policy() const {
  if (const auto* d = std::get_if<DeepCoachLearner>(&learner_)) return d->params();
  return std::get<LinearCoachLearner>(learner_).params();
}

Observation TrainingRun::current_frame() const { return render(world_, resolution_); }

RunRow TrainingRun::step(int live_feedback) {
  const std::int64_t t = next_step_;
  const Observation obs = current_frame();
  const auto decision = std::visit(
      [&](auto& l) -> DeepCoachLearner::Decision {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, std::monostate>) {
          throw UsageError("training run has no learner");
        } else {
          return l.act(obs);
        }
      },
      learner_);

  history_.push_back({world_, decision.action, t});
  while (history_.size() > static_cast<std::size_t>(cfg_.hp.delay) + 1) history_.pop_front();
  const auto [next, metrics] = coach::step(world_, decision.action);

  int feedback = 0;
  if (oracle_) {
    if (t >= cfg_.hp.delay) {
      const Judged& judged = history_.front();
      TabularValues policy_values;
      const TabularValues* values = optimal_values_.get();
      if (cfg_.oracle.mode == OracleMode::policy_advantage) {
        policy_values = evaluate_policy_tabular(tabulate_policy(policy(), state_features_), cfg_.oracle.gamma);
        values = &policy_values;
      }
      feedback = oracle_->feedback(judged.state, judged.action, values);
    }
  } else {
    if (live_feedback < -1 || live_feedback > 1) throw InputError("feedback must be -1, 0 or +1");
    feedback = live_feedback;
  }

  const int paired = std::visit(
      [&](auto& l) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, std::monostate>) {
          return 0;
        } else {
          return l.learn(feedback);
        }
      },
      learner_);
  if (paired > 0) ++pos_count_;
  if (paired < 0) ++neg_count_;

  RunRow row{t,
             world_.episode,
             decision.action,
             decision.prob,
             paired,
             decision.entropy,
             metrics.env_reward,
             metrics.center_distance,
             metrics.angle_deg};

  world_ = next;
  if (world_.task == TaskId::goal_nav) {
    episode_reward_ += world_.last_reward;
    if (world_.terminal) {
      episodes_.push_back({world_.episode, world_.step_count, episode_reward_, world_.reached_goal});
      episode_reward_ = 0.0;
      world_ = reset_episode(cfg_.task, env_seed_, world_.episode + 1);
    }
  }
  ++next_step_;
  return row;
}

void save_world_state(std::ostream& out, const WorldState& s) {
  io::write_f64(out, s.x);
  io::write_f64(out, s.z);
  io::write_u8(out, static_cast<std::uint8_t>(s.heading));
  io::write_u8(out, static_cast<std::uint8_t>(s.task));
  io::write_i64(out, s.step_count);
  io::write_i64(out, s.episode);
  io::write_f64(out, s.start_x);
  io::write_f64(out, s.start_z);
  io::write_f64(out, s.last_reward);
  io::write_u8(out, s.terminal ? 1 : 0);
  io::write_u8(out, s.reached_goal ? 1 : 0);
}

WorldState load_world_state(std::istream& in) {
  WorldState s;
  s.x = io::read_f64(in);
  s.z = io::read_f64(in);
  const auto heading = io::read_u8(in);
  const auto task = io::read_u8(in);
  if (heading > 3 || task > 1) throw FormatError("world state: bad heading or task");
  s.heading = static_cast<Heading>(heading);
  s.task = static_cast<TaskId>(task);
  s.step_count = static_cast<int>(io::read_i64(in));
  s.episode = static_cast<int>(io::read_i64(in));
  s.start_x = io::read_f64(in);
  s.start_z = io::read_f64(in);
  s.last_reward = io::read_f64(in);
  s.terminal = io::read_u8(in) != 0;
  s.reached_goal = io::read_u8(in) != 0;
  return s;
}

void save_run_config(std::ostream& out, const RunConfig& cfg) {
  io::write_u8(out, static_cast<std::uint8_t>(cfg.task));
  io::write_u8(out, static_cast<std::uint8_t>(cfg.algo));
  save_hyper_params(out, cfg.hp);
  save_oracle_config(out, cfg.oracle);
  io::write_u8(out, static_cast<std::uint8_t>(cfg.source));
  io::write_u64(out, cfg.seed);
}

RunConfig load_run_config(std::istream& in) {
  RunConfig cfg;
  const auto task = io::read_u8(in), algo = io::read_u8(in);
  if (task > 1 || algo > 1) throw FormatError("run config: bad task or algorithm");
  cfg.task = static_cast<TaskId>(task);
  cfg.algo = static_cast<Algo>(algo);
  cfg.hp = load_hyper_params(in);
  cfg.oracle = load_oracle_config(in);
  const auto source = io::read_u8(in);
  if (source > 1) throw FormatError("run config: bad feedback source");
  cfg.source = static_cast<FeedbackSource>(source);
  cfg.seed = io::read_u64(in);
  return cfg;
}

void TrainingRun::save(std::ostream& out) const {
  io::write_magic(out, "COACHTR1");
  save_run_config(out, cfg_);
  save_hyper_params(out, effective_hp_);
  if (const auto* d = std::get_if<DeepCoachLearner>(&learner_)) {
    d->save(out);
  } else {
    std::get<LinearCoachLearner>(learner_).save(out);
  }
  io::write_u8(out, oracle_ ? 1 : 0);
  if (oracle_) oracle_->save(out);
  save_world_state(out, world_);
  io::write_u64(out, env_seed_);
  io::write_u32(out, static_cast<std::uint32_t>(history_.size()));
  for (const auto& j : history_) {
    save_world_state(out, j.state);
    io::write_u8(out, static_cast<std::uint8_t>(j.action));
    io::write_i64(out, j.t);
  }
  io::write_i64(out, next_step_);
  io::write_f64(out, episode_reward_);
  io::write_u32(out, static_cast<std::uint32_t>(episodes_.size()));
  for (const auto& e : episodes_) {
    io::write_i64(out, e.episode);
    io::write_i64(out, e.steps);
    io::write_f64(out, e.reward);
    io::write_u8(out, e.reached_goal ? 1 : 0);
  }
  io::write_i64(out, pos_count_);
  io::write_i64(out, neg_count_);
}

TrainingRun TrainingRun::load(std::istream& in) {
  io::expect_magic(in, "COACHTR1", "training run");
  TrainingRun r;
  r.cfg_ = load_run_config(in);
  r.effective_hp_ = load_hyper_params(in);
  if (r.cfg_.algo == Algo::deep) {
    r.learner_.emplace<DeepCoachLearner>(DeepCoachLearner::load(in));
  } else {
    r.learner_.emplace<LinearCoachLearner>(LinearCoachLearner::load(in));
  }
  if (io::read_u8(in) != 0) r.oracle_.emplace(Oracle::load(in));
  r.world_ = load_world_state(in);
  r.env_seed_ = io::read_u64(in);
  const auto n_hist = io::read_u32(in);
  for (std::uint32_t i = 0; i < n_hist; ++i) {
    Judged j{load_world_state(in), Action::forward, 0};
    j.action = action_from_index(io::read_u8(in));
    j.t = io::read_i64(in);
    r.history_.push_back(j);
  }
  r.next_step_ = io::read_i64(in);
  r.episode_reward_ = io::read_f64(in);
  r.episodes_.resize(io::read_u32(in));
  for (auto& e : r.episodes_) {
    e.episode = static_cast<int>(io::read_i64(in));
    e.steps = static_cast<int>(io::read_i64(in));
    e.reward = io::read_f64(in);
    e.reached_goal = io::read_u8(in) != 0;
  }
  r.pos_count_ = static_cast<int>(io::read_i64(in));
  r.neg_count_ = static_cast<int>(io::read_i64(in));
  r.init_derived();
  return r;
}

RunResult run_training(const RunConfig& cfg, const NetworkParams& encoder, const RunLimits& limits,
                       const std::function<void(const RunRow&)>& on_row,
                       const std::function<void(const TrainingRun&)>& before_step) {
  if (limits.max_steps < 0) throw InputError("step count must be >= 0");
  TrainingRun run(cfg, encoder);
  RunResult result;
  while (run.steps_taken() < limits.max_steps) {
    if (limits.episodes > 0 && static_cast<int>(run.episodes().size()) >= limits.episodes) break;
    if (before_step) before_step(run);
    result.rows.push_back(run.step());
    if (on_row) on_row(result.rows.back());
  }
  result.policy = run.policy();
  result.episodes = run.episodes();
  return result;
}

}  // namespace coach
