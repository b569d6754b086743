#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "coach/errors.hpp"
#include "coach/gridworld.hpp"
#include "coach/image_io.hpp"
#include "coach/rng.hpp"

namespace coach {
namespace {

TEST(GridworldTest, ResetIsDeterministic) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    EXPECT_EQ(reset(TaskId::goal_nav, seed), reset(TaskId::goal_nav, seed));
    EXPECT_EQ(reset(TaskId::patrol, seed), reset(TaskId::patrol, seed));
  }
}

TEST(GridworldTest, GoalNavNeverStartsOnGold) {
  std::set<int> cells;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto s = reset(TaskId::goal_nav, seed);
    EXPECT_FALSE(is_gold_cell(s.cell_x(), s.cell_z()));
    EXPECT_EQ(s.x, s.start_x);
    cells.insert(s.cell_z() * kRoomCells + s.cell_x());
  }
  EXPECT_EQ(cells.size(), 96u);  // every open cell is reachable
}

TEST(GridworldTest, GoalNavSpawnFacesTowardCentre) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = reset(TaskId::goal_nav, seed);
    const auto [hx, hz] = heading_vector(s.heading);
    EXPECT_GT(hx * (kRoomCentre - s.x) + hz * (kRoomCentre - s.z), 0.0);
  }
}

TEST(GridworldTest, PatrolStartsAtFixedCornerAndNeverTerminates) {
  auto s = reset(TaskId::patrol, 17);
  EXPECT_EQ(s.cell_x(), 0);
  EXPECT_EQ(s.cell_z(), 0);
  EXPECT_EQ(s.heading, Heading::east);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    s = step(s, static_cast<Action>(rng.below(3))).first;
    EXPECT_FALSE(s.terminal);
  }
}

TEST(GridworldTest, ForwardIntoWallIsNoOp) {
  WorldState s = reset(TaskId::patrol, 0);
  s.heading = Heading::north;
  const auto [next, metrics] = step(s, Action::forward);
  EXPECT_EQ(next.x, s.x);
  EXPECT_EQ(next.z, s.z);
  EXPECT_EQ(next.heading, Heading::north);
  EXPECT_EQ(next.step_count, 1);
}

TEST(GridworldTest, RotationsChangeHeadingOnly) {
  const WorldState s = reset(TaskId::goal_nav, 3);
  const auto l = step(s, Action::rotate_left).first;
  const auto r = step(s, Action::rotate_right).first;
  EXPECT_EQ(l.heading, rotate_left(s.heading));
  EXPECT_EQ(r.heading, rotate_right(s.heading));
  EXPECT_EQ(l.x, s.x);
  EXPECT_EQ(rotate_right(rotate_left(s.heading)), s.heading);
  EXPECT_EQ(rotate_right(Heading::north), Heading::east);
}

TEST(GridworldTest, ReachingGoldTerminatesWithReward) {
  WorldState s = state_from_index(TaskId::goal_nav, ((4 * kRoomCells) + 3) * 4 + static_cast<int>(Heading::east));
  const auto [next, m] = step(s, Action::forward);
  EXPECT_TRUE(next.terminal);
  EXPECT_TRUE(next.reached_goal);
  EXPECT_EQ(*m.env_reward, kGoalReward + kStepCost);
  EXPECT_THROW(step(next, Action::forward), UsageError);
}

TEST(GridworldTest, StepCapGivesExactlyMinus200) {
  WorldState s = reset(TaskId::goal_nav, 5);
  double total = 0.0;
  while (!s.terminal) {
    const auto [next, m] = step(s, Action::rotate_left);
    total += *m.env_reward;
    s = next;
  }
  EXPECT_EQ(s.step_count, kEpisodeStepCap);
  EXPECT_EQ(total, -200.0);
}

TEST(GridworldTest, EpisodeRewardIdentity) {
  Rng rng(11);
  for (int episode = 0; episode < 200; ++episode) {
    WorldState s = reset(TaskId::goal_nav, rng.next_u64());
    double total = 0.0;
    while (!s.terminal) {
      const auto [next, m] = step(s, static_cast<Action>(rng.below(3)));
      total += *m.env_reward;
      s = next;
    }
    EXPECT_EQ(total, 200.0 * (s.reached_goal ? 1 : 0) - s.step_count);
  }
}

TEST(GridworldTest, PositionStaysInBoundsUnderFuzz) {
  Rng rng(12);
  for (TaskId task : {TaskId::goal_nav, TaskId::patrol}) {
    WorldState s = reset(task, 1);
    int episode = 0;
    for (int i = 0; i < 100000; ++i) {
      if (s.terminal) s = reset_episode(task, 1, ++episode);
      s = step(s, static_cast<Action>(rng.below(3))).first;
      ASSERT_GT(s.x, 0.0);
      ASSERT_LT(s.x, kRoomCells);
      ASSERT_GT(s.z, 0.0);
      ASSERT_LT(s.z, kRoomCells);
      if (task == TaskId::patrol) ASSERT_FALSE(is_gold_cell(s.cell_x(), s.cell_z()));
    }
  }
}

TEST(HiddenMetricsTest, AngleAtStartIsZero) {
  const auto m = hidden_metrics(reset(TaskId::patrol, 0));
  EXPECT_EQ(m.angle_deg, 0.0);
  EXPECT_NEAR(m.center_distance, std::hypot(4.5, 4.5), 1e-12);
  EXPECT_FALSE(m.env_reward.has_value());
}

TEST(HiddenMetricsTest, QuarterTurnClockwiseIs90) {
  WorldState s = reset(TaskId::patrol, 0);
  s.x = kRoomCells - 0.5;  // north-east corner
  EXPECT_NEAR(hidden_metrics(s).angle_deg, 90.0, 1e-9);
  s.z = kRoomCells - 0.5;  // south-east corner
  EXPECT_NEAR(hidden_metrics(s).angle_deg, 180.0, 1e-9);
  s.x = 0.5;  // south-west corner
  EXPECT_NEAR(hidden_metrics(s).angle_deg, 270.0, 1e-9);
}

TEST(HiddenMetricsTest, CentreIsDistanceZeroAngleZero) {
  WorldState s = reset(TaskId::patrol, 0);
  s.x = s.z = kRoomCentre;
  const auto m = hidden_metrics(s);
  EXPECT_EQ(m.center_distance, 0.0);
  EXPECT_EQ(m.angle_deg, 0.0);
}

TEST(HiddenMetricsTest, AngleAlwaysInRange) {
  Rng rng(13);
  WorldState s = reset(TaskId::patrol, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto [next, m] = step(s, static_cast<Action>(rng.below(3)));
    EXPECT_GE(m.angle_deg, 0.0);
    EXPECT_LT(m.angle_deg, 360.0);
    s = next;
  }
}

TEST(RenderTest, ShapeAndRange) {
  for (int res : {32, 84}) {
    const Observation o = render(reset(TaskId::goal_nav, 2), res);
    EXPECT_EQ(o.shape(), (Shape{3, static_cast<std::size_t>(res), static_cast<std::size_t>(res)}));
    for (double v : o.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(render(reset(TaskId::goal_nav, 2), 64), ConfigError);
}

TEST(RenderTest, IdenticalStatesGiveIdenticalFrames) {
  const auto s = reset(TaskId::goal_nav, 9);
  EXPECT_EQ(render(s, 84), render(s, 84));
}

TEST(RenderTest, HeadingsDifferAtEveryCell) {
  for (int cell = 0; cell < kRoomCells * kRoomCells; ++cell) {
    for (int h1 = 0; h1 < 4; ++h1) {
      for (int h2 = h1 + 1; h2 < 4; ++h2) {
        EXPECT_NE(render(state_from_index(TaskId::goal_nav, cell * 4 + h1), 84),
                  render(state_from_index(TaskId::goal_nav, cell * 4 + h2), 84))
            << "cell " << cell;
      }
    }
  }
}

TEST(RenderTest, InjectiveOverAllCellsAndHeadingsAt84) {
  std::set<std::vector<double>> frames;
  for (int s = 0; s < kStateCount; ++s) {
    const auto o = render(state_from_index(TaskId::goal_nav, s), 84);
    frames.emplace(o.values().begin(), o.values().end());
  }
  EXPECT_EQ(frames.size(), static_cast<std::size_t>(kStateCount));
}

TEST(StateIndexTest, RoundTrip) {
  for (int s = 0; s < kStateCount; ++s) EXPECT_EQ(state_index(state_from_index(TaskId::goal_nav, s)), s);
  EXPECT_THROW(state_from_index(TaskId::goal_nav, kStateCount), InputError);
}

TEST(FrameExportTest, PngNameAndSignature) {
  EXPECT_EQ(frame_file_name(3, 17), "frame_3_17.png");
  const auto png = encode_png(render(reset(TaskId::patrol, 0), 32));
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png[1], 'P');
  EXPECT_EQ(png[2], 'N');
  EXPECT_EQ(png[3], 'G');
  const auto dir = std::filesystem::temp_directory_path() / "coach_frame_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / frame_file_name(0, 0);
  write_png(path.string(), render(reset(TaskId::patrol, 0), 32));
  EXPECT_GT(std::filesystem::file_size(path), 8u);
  std::filesystem::remove_all(dir);
}

TEST(FrameExportTest, Base64) {
  EXPECT_EQ(base64_encode(std::string_view("Man")), "TWFu");
  EXPECT_EQ(base64_encode(std::string_view("Ma")), "TWE=");
  EXPECT_EQ(base64_encode(std::string_view("M")), "TQ==");
  EXPECT_EQ(to_rgb8(render(reset(TaskId::patrol, 0), 32)).size(), 32u * 32u * 3u);
}

}  // namespace
}  // namespace coach
