#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "coach/policy.hpp"
#include "coach/tensor.hpp"

namespace coach {

enum class TaskId : std::uint8_t { goal_nav = 0, patrol = 1 };

const char* task_name(TaskId task) noexcept;
/// Throws InputError for unknown names.
TaskId parse_task(const std::string& name);

/// Cardinal facing. The room is viewed from above with +x east and +z south,
/// so rotating right (clockwise) goes north → east → south → west.
enum class Heading : std::uint8_t { north = 0, east = 1, south = 2, west = 3 };

inline constexpr int kRoomCells = 10;
inline constexpr int kEpisodeStepCap = 200;
inline constexpr double kGoalReward = 200.0;
inline constexpr double kStepCost = -1.0;
/// The gold block fills cells [4, 5] on both axes, i.e. [4, 6] x [4, 6] in
/// room coordinates, centred on the room centre (5, 5).
inline constexpr int kGoldLo = 4;
inline constexpr int kGoldHi = 5;
inline constexpr double kRoomCentre = 5.0;
/// Patrol start: north-west corner cell, facing east along the north wall.
inline constexpr int kPatrolStartCell = 0;

/// Room coordinates span [0, 10]²; cell (i, j) has its centre at (i + 0.5, j + 0.5).
struct WorldState {
  double x = 0.5;
  double z = 0.5;
  Heading heading = Heading::east;
  TaskId task = TaskId::goal_nav;
  int step_count = 0;   // steps taken in the current episode
  int episode = 0;
  double start_x = 0.5;
  double start_z = 0.5;
  double last_reward = 0.0;  // reward of the transition that produced this state
  bool terminal = false;
  bool reached_goal = false;

  int cell_x() const noexcept;
  int cell_z() const noexcept;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Evaluation-only quantities; never shown to the learner.
struct HiddenMetrics {
  std::optional<double> env_reward;  // goal_nav only
  double center_distance = 0.0;
  double angle_deg = 0.0;  // clockwise, at the room centre, from the start ray to the agent ray
  bool terminal = false;
  bool reached_goal = false;
};

bool is_gold_cell(int cx, int cz) noexcept;
std::pair<int, int> heading_vector(Heading h) noexcept;
Heading rotate_left(Heading h) noexcept;
Heading rotate_right(Heading h) noexcept;

/// Deterministic in (task, seed). goal_nav: uniformly random non-gold cell,
/// facing the nearest cardinal direction toward the centre. patrol: fixed corner.
WorldState reset(TaskId task, std::uint64_t seed);
/// Fresh start for episode `episode` of a continuing run.
WorldState reset_episode(TaskId task, std::uint64_t seed, int episode);

/// Throws UsageError when `state` is terminal.
std::pair<WorldState, HiddenMetrics> step(const WorldState& state, Action action);

HiddenMetrics hidden_metrics(const WorldState& state);

/// Supported render sizes.
bool is_supported_resolution(int resolution) noexcept;

/// Painted first-person view, {3, R, R} channel-major, values in [0, 1].
/// Throws ConfigError for resolutions other than 32 and 84.
Observation render(const WorldState& state, int resolution);

/// Discrete state index in [0, 400): (cell_z * 10 + cell_x) * 4 + heading.
int state_index(const WorldState& state) noexcept;
inline constexpr int kStateCount = kRoomCells * kRoomCells * 4;
WorldState state_from_index(TaskId task, int index);

}  // namespace coach
