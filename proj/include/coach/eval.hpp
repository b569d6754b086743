#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "coach/run.hpp"

namespace coach {

/// One training run directory as written by `train`: run.json + runlog.csv.
struct RunRecord {
  std::string dir;
  RunConfig config;
  std::vector<RunRow> rows;
};

/// Throws FormatError for a missing or malformed run.json / runlog.csv.
RunRecord load_run_dir(const std::string& dir);

/// Sample mean with a two-sided Student-t confidence interval. With n < 2
/// the interval is undefined and `low`/`high` are empty.
struct MeanCi {
  int n = 0;
  double mean = 0.0;
  std::optional<double> low;
  std::optional<double> high;
};

MeanCi mean_ci(const std::vector<double>& samples, double level = 0.95);

/// Total env reward of every complete or partial episode in a goal_nav log,
/// indexed by episode number.
std::vector<double> episode_rewards(const std::vector<RunRow>& rows);

struct PatrolChunk {
  double center_dist = 0.0;
  double angle_deg = 0.0;
};
/// Per-chunk means of the hidden patrol metrics (a trailing partial chunk is kept).
std::vector<PatrolChunk> patrol_chunks(const std::vector<RunRow>& rows, std::size_t chunk = kFeedbackChunk);

/// Aggregates runs of one task across seeds and writes the summary CSV:
///   goal_nav: episode,n,mean_reward,ci_low,ci_high
///   patrol:   chunk,n,mean_center_dist,ci_low_center_dist,ci_high_center_dist,
///             mean_angle_deg,ci_low_angle_deg,ci_high_angle_deg
/// Throws UsageError when runs mix tasks or the list is empty.
void write_eval_csv(std::ostream& out, const std::vector<RunRecord>& runs);

}  // namespace coach
