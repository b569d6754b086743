// Acceptance runner: one PASS/FAIL line per primary criterion, with timings.
// Usage: acceptance [artifact_dir]   (artifact_dir receives run logs and loss curves)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "coach/cae.hpp"
#include "coach/errors.hpp"
#include "coach/run.hpp"

namespace coach {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_artifacts;

void save_artifact(const std::string& name, const std::string& text) {
  if (g_artifacts.empty()) return;
  fs::create_directories((g_artifacts / name).parent_path());
  std::ofstream(g_artifacts / name) << text;
}

std::string log_text(const std::vector<RunRow>& rows) {
  std::ostringstream out;
  write_run_log(out, rows);
  return out.str();
}

// ---------------------------------------------------------------------------
// Gradient correctness

Layer random_layer(const LayerSpec& spec, const Shape& input, Rng& rng) {
  Layer layer = make_layer(spec, input, rng);
  for (Tensor* p : mutable_parameters(layer)) {
    for (auto& v : p->values()) {
      if (v == 0.0) v = rng.uniform(-0.5, 0.5);
    }
  }
  return layer;
}

Outcome gradient_correctness() {
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  std::vector<std::pair<std::string, double>> worst;
  const auto record = [&worst](const std::string& name, double err) {
    for (auto& [n, w] : worst) {
      if (n == name) {
        w = std::max(w, err);
        return;
      }
    }
    worst.emplace_back(name, err);
  };
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(1000 + static_cast<std::uint64_t>(i));
    const std::size_t in = 3 + rng.below(5), out = 2 + rng.below(5);
    const Layer dense = random_layer(DenseSpec{out}, {in}, rng);
    record("dense", checks::layer_gradcheck(dense, checks::random_tensor({in}, rng), checks::random_tensor({out}, rng)));

    const std::size_t stride = 1 + rng.below(2), padding = rng.below(2), k = 2 + rng.below(2);
    const Shape conv_in{1 + rng.below(2), 6 + rng.below(3), 6 + rng.below(3)};
    const Layer conv = random_layer(ConvSpec{1 + rng.below(3), k, stride, padding}, conv_in, rng);
    record("conv2d", checks::layer_gradcheck(conv, checks::random_tensor(conv_in, rng),
                                             checks::random_tensor(output_shape(conv, conv_in), rng)));

    Tensor x = checks::random_tensor({2, 5}, rng, 0.1, 1.0);  // away from the ReLU kink
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (rng.uniform() < 0.5) x[j] = -x[j];
    }
    record("relu", checks::layer_gradcheck(Relu{}, x, checks::random_tensor({2, 5}, rng)));
    record("sigmoid", checks::layer_gradcheck(Sigmoid{}, checks::random_tensor({2, 5}, rng, -3, 3),
                                              checks::random_tensor({2, 5}, rng)));
    const Upsample up{4 + rng.below(4), 4 + rng.below(4)};
    record("upsample", checks::layer_gradcheck(up, checks::random_tensor({2, 3, 3}, rng),
                                               checks::random_tensor({2, up.height, up.width}, rng)));
    record("reshape", checks::layer_gradcheck(Reshape{{3, 4}}, checks::random_tensor({12}, rng),
                                              checks::random_tensor({3, 4}, rng)));

    const std::vector<LayerSpec> specs = {ConvSpec{2, 3, 2, 0}, Sigmoid{}, DenseSpec{5}, Sigmoid{}, DenseSpec{3}};
    const auto policy = build_network({1, 7, 7}, specs, rng);
    const Tensor obs = checks::random_tensor({1, 7, 7}, rng);
    record("logprob", checks::policy_gradcheck(policy, obs, static_cast<Action>(rng.below(3)), false));
    record("entropy", checks::policy_gradcheck(policy, obs, Action::forward, true));
  }
  Outcome o{true, "max rel err:"};
  for (const auto& [name, err] : worst) {
    o.pass = o.pass && err <= kTol;
    o.detail += fmt(" %s=%.2e", name.c_str(), err);
  }
  return o;
}

// ---------------------------------------------------------------------------
// Trace equivalence

Outcome trace_equivalence() {
  const auto params = checks::tiny_policy(8, 6, 12, 77);
  Rng rng(77);
  double worst = 0.0;
  const double lambdas[] = {0.0, 0.35, 0.9};
  for (int i = 0; i < 200; ++i) {
    ExperienceWindow w;
    const std::size_t len = 1 + static_cast<std::size_t>(i % 10);
    for (std::size_t j = 0; j < len; ++j) {
      Transition tr;
      tr.features = checks::random_tensor({6}, rng);
      tr.action = static_cast<Action>(rng.below(3));
      tr.behavior_prob = rng.uniform(0.02, 1.0);  // off-policy, some ratios hit the clamp
      w.transitions.push_back(tr);
    }
    w.transitions.back().feedback = w.final_feedback = rng.uniform() < 0.5 ? 1 : -1;
    const double lambda = lambdas[i % 3];
    worst = std::max(worst, checks::max_abs_diff(window_trace(w, params, lambda),
                                                 checks::brute_force_trace(w, params, lambda)));
  }
  return {worst <= 1e-10, fmt("200 windows, max |diff| = %.2e", worst)};
}

// ---------------------------------------------------------------------------
// Window / buffer invariants

Outcome window_invariants() {
  const auto cae = init_cae(Preset::test, 5);
  const auto policy = encoder_freeze(cae, {32, 30}, 5);
  DeepCoachLearner learner(policy, {}, 5);
  Rng rng(5);
  WorldState world = reset(TaskId::goal_nav, 5);
  int episode = 0;
  std::size_t checked = 0, violations = 0, max_len = 0;
  for (int t = 0; t < 10000; ++t) {
    if (world.terminal) world = reset_episode(TaskId::goal_nav, 5, ++episode);
    const auto d = learner.act(render(world, 32));
    world = step(world, d.action).first;
    const double u = rng.uniform();
    learner.learn(u < 0.1 ? 1 : (u < 0.2 ? -1 : 0));
    for (; checked < learner.buffer().size(); ++checked) {
      const auto& w = learner.buffer().at(checked);
      max_len = std::max(max_len, w.transitions.size());
      try {
        check_window(w, 10);
      } catch (const UsageError&) {
        ++violations;
      }
    }
  }
  return {violations == 0 && checked > 0,
          fmt("%zu windows stored, max length %zu, %zu violations", checked, max_len, violations)};
}

// ---------------------------------------------------------------------------
// CAE training (also produces the encoders used below)

struct EncoderResult {
  NetworkParams encoder;
  double initial = 0.0;
  double final = 0.0;
  std::size_t epochs = 0;
};

EncoderResult pretrain(TaskId task) {
  const auto ds = collect_random_frames(task, 2000, 0, 32);
  CaeTrainOptions opts;
  opts.max_epochs = 20;
  opts.seed = 0;
  const auto r = cae_train(ds, opts);
  std::ostringstream loss;
  loss << "epoch,loss\n0," << r.initial_loss << '\n';
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) loss << e + 1 << ',' << r.epoch_losses[e] << '\n';
  save_artifact(std::string("cae_") + task_name(task) + "_loss.csv", loss.str());
  return {r.params.encoder(), r.initial_loss, r.epoch_losses.back(), r.epoch_losses.size()};
}

std::shared_future<EncoderResult> g_goal_encoder, g_patrol_encoder;

Outcome cae_training() {
  const auto goal = g_goal_encoder.get();
  const auto patrol = g_patrol_encoder.get();
  const double ratio = goal.final / goal.initial, patrol_ratio = patrol.final / patrol.initial;
  return {ratio <= 0.5,
          fmt("goal_nav frames: %.4f -> %.4f (x%.3f, %zu epochs); patrol frames: x%.3f", goal.initial, goal.final, ratio,
              goal.epochs, patrol_ratio)};
}

// ---------------------------------------------------------------------------
// Oracle soundness

Outcome oracle_soundness() {
  constexpr double kGamma = 0.95;
  const auto optimal = solve_task_values(kGamma);
  const TabularPolicy greedy = checks::greedy_policy(optimal);
  const TabularPolicy uniform = checks::uniform_policy();
  const auto q_uniform = evaluate_policy_tabular(uniform, kGamma);
  const auto& states = goal_nav_states();
  Rng rng(2024);
  double worst_z = 0.0, worst_z_uniform = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int s = states[rng.below(states.size())];
    const auto a = static_cast<Action>(rng.below(3));
    // The greedy policy is deterministic, so every rollout has the same return;
    // a 1e-8 floor on the standard error keeps the z-score meaningful.
    const auto mc = checks::monte_carlo_q(s, a, greedy, kGamma, 100000, 1000, rng);
    worst_z = std::max(worst_z, std::abs(mc.mean - optimal.at(s, a)) / std::max(mc.std_error, 1e-8));
    const auto mcu = checks::monte_carlo_q(s, a, uniform, kGamma, 20000, 700, rng);
    worst_z_uniform = std::max(worst_z_uniform, std::abs(mcu.mean - q_uniform.at(s, a)) / std::max(mcu.std_error, 1e-8));
  }
  // Σ_a π(a|s) A^π(s,a) for greedy, uniform and a random stochastic policy.
  TabularPolicy random_policy(kStateCount);
  for (auto& d : random_policy) {
    double a = rng.uniform(0.05, 1), b = rng.uniform(0.05, 1), c = rng.uniform(0.05, 1);
    d.probs = {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
  }
  double worst_sum = 0.0;
  for (const TabularPolicy* policy : std::vector<const TabularPolicy*>{&greedy, &uniform, &random_policy}) {
    const auto q = evaluate_policy_tabular(*policy, kGamma);
    for (int s : states) {
      double sum = 0.0;
      for (std::size_t a = 0; a < kActionCount; ++a) {
        sum += (*policy)[static_cast<std::size_t>(s)].probs[a] * q.advantage(s, static_cast<Action>(a));
      }
      worst_sum = std::max(worst_sum, std::abs(sum));
    }
  }
  return {worst_z <= 3.0 && worst_z_uniform <= 3.0 && worst_sum <= 1e-8,
          fmt("Q* vs MC max z=%.2f; uniform Q^pi vs MC max z=%.2f; max |sum pi*A|=%.1e", worst_z, worst_z_uniform,
              worst_sum)};
}

// ---------------------------------------------------------------------------
// End-to-end learning and baseline contrast

constexpr int kSeeds = 5;

struct SeedRun {
  checks::GoalNavSummary summary;
  RunResult result;
};

std::vector<SeedRun> goal_nav_runs(Algo algo) {
  const auto encoder = g_goal_encoder.get().encoder;
  std::vector<std::future<SeedRun>> futures;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    futures.push_back(std::async(std::launch::async, [algo, seed, &encoder] {
      RunConfig cfg = default_run_config(TaskId::goal_nav);
      cfg.algo = algo;
      cfg.seed = static_cast<std::uint64_t>(seed);
      auto result = run_training(cfg, encoder, {100000, 20});
      save_artifact(fmt("goal_nav_%s/seed_%d/runlog.csv", algo_name(algo), seed), log_text(result.rows));
      return SeedRun{checks::summarize_goal_nav(result), std::move(result)};
    }));
  }
  std::vector<SeedRun> runs;
  for (auto& f : futures) runs.push_back(f.get());
  return runs;
}

std::shared_future<std::vector<SeedRun>> g_deep_runs, g_linear_runs;

Outcome end_to_end() {
  const auto& runs = g_deep_runs.get();
  int successes = 0, declining = 0, first_total = 0, last_total = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& s = runs[i].summary;
    successes += s.success() ? 1 : 0;
    declining += s.declining() ? 1 : 0;
    first_total += s.first_chunk_feedback;
    last_total += s.last_chunk_feedback;
    per_seed += fmt(" s%zu:%d/%d,fb=%d,chunks %d->%d%s", i + 1, s.final_successes, s.final_episodes,
                    s.feedback_signals, s.first_chunk_feedback, s.last_chunk_feedback, s.success() ? "" : "(x)");
  }
  // Trend: mean feedback in the last complete chunk is below the first, across seeds.
  const double first_mean = first_total / static_cast<double>(runs.size());
  const double last_mean = last_total / static_cast<double>(runs.size());
  return {successes >= 4 && last_mean < first_mean,
          fmt("%d/5 seeds succeed; feedback per chunk first %.1f -> last %.1f (mean over seeds, %d/5 seeds "
              "individually declining);",
              successes, first_mean, last_mean, declining) +
              per_seed};
}

double mean_final_success(const std::vector<SeedRun>& runs) {
  double total = 0.0;
  for (const auto& r : runs) total += static_cast<double>(r.summary.final_successes) / 5.0;
  return total / static_cast<double>(runs.size());
}

Outcome baseline_contrast() {
  const double deep = mean_final_success(g_deep_runs.get());
  const auto& linear_runs = g_linear_runs.get();
  const double linear = mean_final_success(linear_runs);
  int linear_fb = 0;
  for (const auto& r : linear_runs) linear_fb += r.summary.feedback_signals;
  return {linear < deep, fmt("mean final-5 success: deep %.2f vs linear %.2f (linear mean feedback %.1f)", deep, linear,
                             linear_fb / static_cast<double>(linear_runs.size()))};
}

// ---------------------------------------------------------------------------
// Patrol behaviour signature

Outcome patrol_signature() {
  const auto encoder = g_patrol_encoder.get().encoder;
  std::vector<std::future<checks::PatrolSignature>> futures;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    futures.push_back(std::async(std::launch::async, [seed, &encoder] {
      RunConfig cfg = default_run_config(TaskId::patrol);
      cfg.seed = static_cast<std::uint64_t>(seed);
      const auto result = run_training(cfg, encoder, {500, 0});
      save_artifact(fmt("patrol/seed_%d/runlog.csv", seed), log_text(result.rows));
      return checks::patrol_signature(result.rows);
    }));
  }
  int passing = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < futures.size(); ++i) {
    const auto sig = futures[i].get();
    passing += sig.pass ? 1 : 0;
    per_seed += fmt(" s%zu:std %.2f->%.2f,sweeps=%d%s", i + 1, sig.early_std, sig.late_std, sig.sweeps,
                    sig.pass ? "" : "(x)");
  }
  return {passing >= 4, fmt("%d/5 seeds show the signature;", passing) + per_seed};
}

// ---------------------------------------------------------------------------
// Determinism & snapshot

Outcome determinism_snapshot() {
  const auto goal_encoder = g_goal_encoder.get().encoder;
  const auto patrol_encoder = g_patrol_encoder.get().encoder;
  struct Case {
    TaskId task;
    Algo algo;
    const NetworkParams* encoder;
  };
  const Case cases[] = {{TaskId::goal_nav, Algo::deep, &goal_encoder},
                        {TaskId::goal_nav, Algo::linear, &goal_encoder},
                        {TaskId::patrol, Algo::deep, &patrol_encoder}};
  int identical = 0;
  constexpr std::int64_t kTotal = 600, kCut = 257;
  for (const auto& c : cases) {
    RunConfig cfg = default_run_config(c.task);
    cfg.algo = c.algo;
    cfg.seed = 9;
    const auto straight = run_training(cfg, *c.encoder, {kTotal, 0});
    const auto again = run_training(cfg, *c.encoder, {kTotal, 0});
    TrainingRun run(cfg, *c.encoder);
    std::vector<RunRow> rows;
    for (std::int64_t i = 0; i < kCut; ++i) rows.push_back(run.step());
    std::stringstream snapshot;
    run.save(snapshot);
    auto restored = TrainingRun::load(snapshot);
    for (std::int64_t i = kCut; i < kTotal; ++i) rows.push_back(restored.step());
    const bool same = log_text(rows) == log_text(straight.rows) && log_text(again.rows) == log_text(straight.rows);
    identical += same ? 1 : 0;
  }
  return {identical == 3, fmt("%d/3 task/algo cases byte-identical after restore at step %lld of %lld", identical,
                              static_cast<long long>(kCut), static_cast<long long>(kTotal))};
}

}  // namespace
}  // namespace coach

int main(int argc, char** argv) {
  using namespace coach;
  using Clock = std::chrono::steady_clock;
  if (argc > 1) g_artifacts = argv[1];

  // Encoders and the long oracle-driven runs start immediately in the
  // background; the quick property checks run meanwhile.
  g_goal_encoder = std::async(std::launch::async, [] { return pretrain(TaskId::goal_nav); }).share();
  g_patrol_encoder = std::async(std::launch::async, [] { return pretrain(TaskId::patrol); }).share();
  g_deep_runs = std::async(std::launch::async, [] { return goal_nav_runs(Algo::deep); }).share();
  g_linear_runs = std::async(std::launch::async, [] { return goal_nav_runs(Algo::linear); }).share();

  const std::vector<Criterion> criteria = {
      {"gradient_correctness", 30, gradient_correctness},
      {"trace_equivalence", 10, trace_equivalence},
      {"window_buffer_invariants", 30, window_invariants},
      {"oracle_soundness", 120, oracle_soundness},
      {"cae_training", 300, cae_training},
      {"end_to_end_learning", 900, end_to_end},
      {"baseline_contrast", 900, baseline_contrast},
      {"patrol_signature", 600, patrol_signature},
      {"determinism_snapshot", 120, determinism_snapshot},
  };

  const auto t0 = Clock::now();
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    // Criteria that wait on background work report the wall time since launch.
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    const double since_launch = std::chrono::duration<double>(Clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("%s %s: %s [%.1fs, %.1fs since start, budget %.0fs]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(),
                o.detail.c_str(), elapsed, since_launch, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
