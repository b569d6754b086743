#include "coach/eval.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "coach/config_json.hpp"
#include "coach/errors.hpp"

namespace coach {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

RunRecord load_run_dir(const std::string& dir) {
  RunRecord rec;
  rec.dir = dir;
  std::ifstream cfg_in(fs::path(dir) / "run.json");
  if (!cfg_in) throw FormatError("run directory " + dir + " has no run.json");
  std::stringstream text;
  text << cfg_in.rdbuf();
  try {
    auto root = parse_json_object(text.str(), "run.json");
    rec.config = take_run_config(root);
    reject_unknown_fields(root, "run.json");
  } catch (const InputError& e) {
    throw FormatError(dir + "/run.json: " + e.what());
  }
  std::ifstream log_in(fs::path(dir) / "runlog.csv");
  if (!log_in) throw FormatError("run directory " + dir + " has no runlog.csv");
  rec.rows = read_run_log(log_in);
  return rec;
}

MeanCi mean_ci(const std::vector<double>& samples, double level) {
  MeanCi out;
  out.n = static_cast<int>(samples.size());
  if (samples.empty()) return out;
  out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  if (samples.size() < 2) return out;
  double ss = 0.0;
  for (double x : samples) ss += (x - out.mean) * (x - out.mean);
  const double n = static_cast<double>(samples.size());
  const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
  out.low = out.mean - t * se;
  out.high = out.mean + t * se;
  return out;
}

std::vector<double> episode_rewards(const std::vector<RunRow>& rows) {
  std::vector<double> totals;
  for (const auto& row : rows) {
    if (row.episode < 0) throw FormatError("negative episode index in run log");
    if (static_cast<std::size_t>(row.episode) >= totals.size()) totals.resize(static_cast<std::size_t>(row.episode) + 1, 0.0);
    totals[static_cast<std::size_t>(row.episode)] += row.env_reward.value_or(0.0);
  }
  return totals;
}

std::vector<PatrolChunk> patrol_chunks(const std::vector<RunRow>& rows, std::size_t chunk) {
  std::vector<PatrolChunk> out;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t end = std::min(rows.size(), start + chunk);
    PatrolChunk c;
    for (std::size_t i = start; i < end; ++i) {
      c.center_dist += rows[i].center_dist;
      c.angle_deg += rows[i].angle_deg;
    }
    c.center_dist /= static_cast<double>(end - start);
    c.angle_deg /= static_cast<double>(end - start);
    out.push_back(c);
  }
  return out;
}

void write_eval_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw UsageError("eval needs at least one run directory");
  const TaskId task = runs.front().config.task;
  for (const auto& r : runs) {
    if (r.config.task != task) {
      throw UsageError("cannot aggregate runs of different tasks (" + runs.front().dir + " is " + task_name(task) +
                       ", " + r.dir + " is " + task_name(r.config.task) + ")");
    }
  }
  if (task == TaskId::goal_nav) {
    std::vector<std::vector<double>> per_run;
    std::size_t longest = 0;
    for (const auto& r : runs) {
      per_run.push_back(episode_rewards(r.rows));
      longest = std::max(longest, per_run.back().size());
    }
    out << "episode,n,mean_reward,ci_low,ci_high\n";
    for (std::size_t e = 0; e < longest; ++e) {
      std::vector<double> samples;
      for (const auto& totals : per_run) {
        if (e < totals.size()) samples.push_back(totals[e]);
      }
      const MeanCi m = mean_ci(samples);
      out << e << ',' << m.n << ',' << fmt(m.mean) << ',' << fmt(m.low) << ',' << fmt(m.high) << '\n';
    }
    return;
  }
  std::vector<std::vector<PatrolChunk>> per_run;
  std::size_t longest = 0;
  for (const auto& r : runs) {
    per_run.push_back(patrol_chunks(r.rows));
    longest = std::max(longest, per_run.back().size());
  }
  out << "chunk,n,mean_center_dist,ci_low_center_dist,ci_high_center_dist,mean_angle_deg,ci_low_angle_deg,"
         "ci_high_angle_deg\n";
  for (std::size_t c = 0; c < longest; ++c) {
    std::vector<double> dist, angle;
    for (const auto& chunks : per_run) {
      if (c < chunks.size()) {
        dist.push_back(chunks[c].center_dist);
        angle.push_back(chunks[c].angle_deg);
      }
    }
    const MeanCi d = mean_ci(dist), a = mean_ci(angle);
    out << c << ',' << d.n << ',' << fmt(d.mean) << ',' << fmt(d.low) << ',' << fmt(d.high) << ',' << fmt(a.mean)
        << ',' << fmt(a.low) << ',' << fmt(a.high) << '\n';
  }
}

}  // namespace coach
