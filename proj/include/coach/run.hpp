#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "coach/deep_coach.hpp"
#include "coach/gridworld.hpp"
#include "coach/linear_coach.hpp"
#include "coach/oracle.hpp"

namespace coach {

enum class Algo : std::uint8_t { deep = 0, linear = 1 };

const char* algo_name(Algo algo) noexcept;
/// Throws InputError for unknown names.
Algo parse_algo(const std::string& name);

/// Where f_t comes from: the synthetic trainer or values pushed by a caller.
enum class FeedbackSource : std::uint8_t { oracle = 0, live = 1 };

const char* feedback_source_name(FeedbackSource source) noexcept;
FeedbackSource parse_feedback_source(const std::string& name);

struct RunConfig {
  TaskId task = TaskId::goal_nav;
  Algo algo = Algo::deep;
  HyperParams hp;
  /// `oracle.seed` and `oracle.delay` are overwritten from `seed` and `hp.delay`.
  OracleConfig oracle;
  FeedbackSource source = FeedbackSource::oracle;
  std::uint64_t seed = 0;
};

/// RunConfig with the oracle mode matching `task`.
RunConfig default_run_config(TaskId task);

/// One RunLog line: the step's observation, decision, paired feedback, and
/// the hidden metrics after the action.
struct RunRow {
  std::int64_t step = 0;
  int episode = 0;
  Action action = Action::forward;
  double prob = 0.0;
  int feedback = 0;
  double entropy = 0.0;
  std::optional<double> env_reward;
  double center_dist = 0.0;
  double angle_deg = 0.0;

  friend bool operator==(const RunRow&, const RunRow&) = default;
};

inline constexpr const char* kRunLogHeader = "step,episode,action,prob,feedback,entropy,env_reward,center_dist,angle_deg";
inline constexpr std::size_t kFeedbackChunk = 50;

std::string format_run_row(const RunRow& row);
void write_run_log(std::ostream& out, const std::vector<RunRow>& rows);
/// Throws FormatError on a bad header or malformed row.
std::vector<RunRow> read_run_log(std::istream& in);

struct FeedbackChunkCount {
  std::size_t chunk = 0;
  int pos_count = 0;
  int neg_count = 0;
};
/// Nonzero feedback per consecutive `chunk`-step block of the log.
std::vector<FeedbackChunkCount> feedback_breakdown(const std::vector<RunRow>& rows,
                                                   std::size_t chunk = kFeedbackChunk);
void write_feedback_breakdown(std::ostream& out, const std::vector<FeedbackChunkCount>& chunks);

struct EpisodeSummary {
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  bool reached_goal = false;
};

/// A steppable training run: environment, learner, oracle and the
/// delay-aligned history the oracle judges. Drives both batch training and
/// live sessions so the two produce identical logs for identical inputs.
class TrainingRun {
 public:
  /// `encoder` is the frozen CAE encoder; its input shape picks the preset.
  TrainingRun(RunConfig cfg, const NetworkParams& encoder);

  /// Runs one Algorithm 1 step. `live_feedback` is f_t for the live source and
  /// ignored for the oracle source.
  RunRow step(int live_feedback = 0);

  const RunConfig& config() const noexcept { return cfg_; }
  const WorldState& world() const noexcept { return world_; }
  int resolution() const noexcept { return resolution_; }
  /// Rendered view of the current state (what the learner will see next).
  Observation current_frame() const;
  std::int64_t steps_taken() const noexcept { return next_step_; }
  const std::vector<EpisodeSummary>& episodes() const noexcept { return episodes_; }
  const NetworkParams& policy() const;
  double effective_learning_rate() const noexcept { return effective_hp_.learning_rate; }
  int pos_count() const noexcept { return pos_count_; }
  int neg_count() const noexcept { return neg_count_; }

  void save(std::ostream& out) const;
  static TrainingRun load(std::istream& in);

 private:
  TrainingRun() = default;
  void init_derived();

  struct Judged {
    WorldState state;
    Action action;
    std::int64_t t;
  };

  RunConfig cfg_;
  HyperParams effective_hp_;
  int resolution_ = 32;
  std::variant<std::monostate, DeepCoachLearner, LinearCoachLearner> learner_;
  std::optional<Oracle> oracle_;
  WorldState world_;
  std::uint64_t env_seed_ = 0;
  std::deque<Judged> history_;
  std::int64_t next_step_ = 0;
  double episode_reward_ = 0.0;
  std::vector<EpisodeSummary> episodes_;
  int pos_count_ = 0;
  int neg_count_ = 0;

  // Derived, not serialized.
  std::shared_ptr<const TabularValues> optimal_values_;
  std::vector<Tensor> state_features_;
};

struct RunLimits {
  std::int64_t max_steps = 0;
  /// Stop after this many completed goal_nav episodes (0 = no limit).
  int episodes = 0;
};

struct RunResult {
  NetworkParams policy;
  std::vector<RunRow> rows;
  std::vector<EpisodeSummary> episodes;
};

/// Oracle-driven run until `limits.max_steps` steps or `limits.episodes` episodes.
/// `before_step` sees the run just before each step (e.g. for frame export).
RunResult run_training(const RunConfig& cfg, const NetworkParams& encoder, const RunLimits& limits,
                       const std::function<void(const RunRow&)>& on_row = {},
                       const std::function<void(const TrainingRun&)>& before_step = {});

/// Q* for goal_nav at `gamma`, computed once per distinct gamma and shared.
std::shared_ptr<const TabularValues> cached_optimal_values(double gamma);

void save_world_state(std::ostream& out, const WorldState& s);
WorldState load_world_state(std::istream& in);
void save_run_config(std::ostream& out, const RunConfig& cfg);
RunConfig load_run_config(std::istream& in);

}  // namespace coach
