#include "coach/gridworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "coach/errors.hpp"
#include "coach/rng.hpp"

namespace coach {

const char* task_name(TaskId task) noexcept { return task == TaskId::goal_nav ? "goal_nav" : "patrol"; }

TaskId parse_task(const std::string& name) {
  if (name == "goal_nav") return TaskId::goal_nav;
  if (name == "patrol") return TaskId::patrol;
  throw InputError("unknown task '" + name + "' (expected goal_nav or patrol)");
}

int WorldState::cell_x() const noexcept { return std::clamp(static_cast<int>(std::floor(x)), 0, kRoomCells - 1); }
int WorldState::cell_z() const noexcept { return std::clamp(static_cast<int>(std::floor(z)), 0, kRoomCells - 1); }

bool is_gold_cell(int cx, int cz) noexcept { return cx >= kGoldLo && cx <= kGoldHi && cz >= kGoldLo && cz <= kGoldHi; }

std::pair<int, int> heading_vector(Heading h) noexcept {
  switch (h) {
    case Heading::north: return {0, -1};
    case Heading::east: return {1, 0};
    case Heading::south: return {0, 1};
    case Heading::west: return {-1, 0};
  }
  return {0, 0};
}

Heading rotate_left(Heading h) noexcept { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
Heading rotate_right(Heading h) noexcept { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

WorldState reset_episode(TaskId task, std::uint64_t seed, int episode) {
  WorldState s;
  s.task = task;
  s.episode = episode;
  if (task == TaskId::patrol) {
    s.x = s.z = kPatrolStartCell + 0.5;
    s.heading = Heading::east;
  } else {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(episode)));
    constexpr int kOpenCells = kRoomCells * kRoomCells - 4;
    int pick = static_cast<int>(rng.below(kOpenCells));
    for (int c = 0; c < kRoomCells * kRoomCells; ++c) {
      if (is_gold_cell(c % kRoomCells, c / kRoomCells)) continue;
      if (pick-- == 0) {
        s.x = c % kRoomCells + 0.5;
        s.z = c / kRoomCells + 0.5;
        break;
      }
    }
    const double dx = kRoomCentre - s.x, dz = kRoomCentre - s.z;
    if (std::abs(dx) >= std::abs(dz)) {
      s.heading = dx > 0 ? Heading::east : Heading::west;
    } else {
      s.heading = dz > 0 ? Heading::south : Heading::north;
    }
  }
  s.start_x = s.x;
  s.start_z = s.z;
  return s;
}

WorldState reset(TaskId task, std::uint64_t seed) { return reset_episode(task, seed, 0); }

HiddenMetrics hidden_metrics(const WorldState& state) {
  HiddenMetrics m;
  if (state.task == TaskId::goal_nav) m.env_reward = state.last_reward;
  const double vx = state.x - kRoomCentre, vz = state.z - kRoomCentre;
  const double ux = state.start_x - kRoomCentre, uz = state.start_z - kRoomCentre;
  m.center_distance = std::hypot(vx, vz);
  if (m.center_distance == 0.0 || std::hypot(ux, uz) == 0.0) {
    m.angle_deg = 0.0;
  } else {
    // With +z pointing south, atan2(z, x) grows clockwise when seen from above.
    double a = (std::atan2(vz, vx) - std::atan2(uz, ux)) * 180.0 / std::numbers::pi;
    a = std::fmod(a, 360.0);
    if (a < 0.0) a += 360.0;
    if (a >= 360.0) a -= 360.0;
    m.angle_deg = a;
  }
  m.terminal = state.terminal;
  m.reached_goal = state.reached_goal;
  return m;
}

std::pair<WorldState, HiddenMetrics> step(const WorldState& state, Action action) {
  if (state.terminal) throw UsageError("step() called on a terminal state");
  WorldState next = state;
  switch (action) {
    case Action::rotate_left: next.heading = rotate_left(state.heading); break;
    case Action::rotate_right: next.heading = rotate_right(state.heading); break;
    case Action::forward: {
      const auto [dx, dz] = heading_vector(state.heading);
      const double nx = state.x + dx, nz = state.z + dz;
      const bool inside = nx > 0.0 && nx < kRoomCells && nz > 0.0 && nz < kRoomCells;
      if (!inside) break;
      const bool into_gold = is_gold_cell(static_cast<int>(std::floor(nx)), static_cast<int>(std::floor(nz)));
      if (into_gold && state.task == TaskId::patrol) break;  // the block is solid
      next.x = nx;
      next.z = nz;
      if (into_gold) next.reached_goal = true;
      break;
    }
    default: throw InputError("invalid action");
  }
  ++next.step_count;
  if (state.task == TaskId::goal_nav) {
    next.last_reward = kStepCost + (next.reached_goal ? kGoalReward : 0.0);
    next.terminal = next.reached_goal || next.step_count >= kEpisodeStepCap;
  } else {
    next.last_reward = 0.0;
  }
  return {next, hidden_metrics(next)};
}

bool is_supported_resolution(int resolution) noexcept { return resolution == 32 || resolution == 84; }

namespace {

using Rgb = std::array<double, 3>;

constexpr Rgb kSky{0.55, 0.75, 0.95};
constexpr Rgb kFloor{0.45, 0.35, 0.25};
constexpr Rgb kGold{1.0, 0.84, 0.0};
// Indexed by the heading that faces the wall.
constexpr std::array<Rgb, 4> kWallColour{{{0.80, 0.20, 0.20}, {0.20, 0.60, 0.25}, {0.20, 0.30, 0.80}, {0.60, 0.30, 0.70}}};
constexpr double kSideShade = 0.7;

int wall_distance(int cx, int cz, Heading h) {
  switch (h) {
    case Heading::north: return cz;
    case Heading::east: return kRoomCells - 1 - cx;
    case Heading::south: return kRoomCells - 1 - cz;
    case Heading::west: return cx;
  }
  return 0;
}

struct Canvas {
  Observation& img;
  int r;
  void fill_rect(int y0, int y1, int x0, int x1, const Rgb& c, double shade = 1.0) {
    y0 = std::max(y0, 0);
    x0 = std::max(x0, 0);
    y1 = std::min(y1, r);
    x1 = std::min(x1, r);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) img[(static_cast<std::size_t>(ch) * r + y) * r + x] = c[ch] * shade;
      }
    }
  }
};

}  // namespace

Observation render(const WorldState& state, int resolution) {
  if (!is_supported_resolution(resolution)) {
    throw ConfigError("unsupported render resolution " + std::to_string(resolution) + " (expected 32 or 84)");
  }
  const int r = resolution, half = r / 2;
  Observation img({3, static_cast<std::size_t>(r), static_cast<std::size_t>(r)});
  Canvas canvas{img, r};
  canvas.fill_rect(0, half, 0, r, kSky);
  canvas.fill_rect(half, r, 0, r, kFloor);

  const int cx = state.cell_x(), cz = state.cell_z();
  const Heading facing = state.heading;
  const Heading left = rotate_left(facing), right = rotate_right(facing);

  // Side walls: strip width = linear falloff (far-range cue) + perspective
  // falloff (makes an adjacent wall stand out).
  const auto side_width = [&](int lateral) {
    return static_cast<int>(r * (kRoomCells - lateral) / 60.0 + r / (4.0 * (lateral + 1)));
  };
  const int left_w = side_width(wall_distance(cx, cz, left));
  const int right_w = side_width(wall_distance(cx, cz, right));
  const int side_h = 3 * r / 8;
  canvas.fill_rect(half - side_h, half + side_h, 0, left_w, kWallColour[static_cast<int>(left)], kSideShade);
  canvas.fill_rect(half - side_h, half + side_h, r - right_w, r, kWallColour[static_cast<int>(right)], kSideShade);

  // Facing wall: band half-height mixes the same two falloffs.
  const int df = wall_distance(cx, cz, facing);
  const int band = static_cast<int>(half * (kRoomCells - df) / 20.0 + half / (2.0 * (df + 1)));
  canvas.fill_rect(half - band, half + band, left_w, r - right_w, kWallColour[static_cast<int>(facing)]);

  // Gold block, drawn only when it lies entirely in front of the agent.
  const auto [fx, fz] = heading_vector(facing);
  const auto [rx, rz] = heading_vector(right);
  const double near_face = fx != 0 ? (fx > 0 ? kGoldLo - state.x : state.x - (kGoldHi + 1))
                                   : (fz > 0 ? kGoldLo - state.z : state.z - (kGoldHi + 1));
  if (near_face > 0.0) {
    const double gx = kRoomCentre - state.x, gz = kRoomCentre - state.z;
    const double ahead = gx * fx + gz * fz;
    const double lateral = gx * rx + gz * rz;
    const int size = std::clamp(static_cast<int>(0.375 * r / ahead), 1, r / 4);
    const int col = half + static_cast<int>(std::lround(half * lateral / (std::abs(lateral) + ahead)));
    canvas.fill_rect(half - size, half + size, col - size, col + size, kGold);
  }
  return img;
}

int state_index(const WorldState& state) noexcept {
  return (state.cell_z() * kRoomCells + state.cell_x()) * 4 + static_cast<int>(state.heading);
}

WorldState state_from_index(TaskId task, int index) {
  if (index < 0 || index >= kStateCount) throw InputError("state index out of range");
  WorldState s = reset(task, 0);
  const int cell = index / 4;
  s.x = cell % kRoomCells + 0.5;
  s.z = cell / kRoomCells + 0.5;
  s.heading = static_cast<Heading>(index % 4);
  if (task == TaskId::goal_nav) {
    s.start_x = s.x;
    s.start_z = s.z;
  }
  return s;
}

}  // namespace coach
