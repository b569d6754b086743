#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include "coach/cae.hpp"
#include "coach/config_json.hpp"
#include "coach/errors.hpp"
#include "coach/eval.hpp"
#include "coach/image_io.hpp"
#include "coach/run.hpp"
#include "coach/server.hpp"
#include "coach/session.hpp"

namespace coach::cli {

namespace fs = std::filesystem;

namespace {

// Flag-level validation failures that should exit with the usage code.
class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct PretrainFlags {
  std::string task = "goal_nav";
  std::size_t frames = 10000;
  std::uint64_t seed = 0;
  std::string preset = "full";
  int epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  bool no_early_stop = false;
  std::string dataset;
  std::string out;
};

int cmd_pretrain(const PretrainFlags& f, std::ostream& out) {
  if (f.frames == 0) throw UsageFailure("--frames must be > 0");
  if (f.epochs <= 0) throw UsageFailure("--epochs must be > 0");
  if (f.batch_size == 0) throw UsageFailure("--batch-size must be > 0");
  const TaskId task = parse_task(f.task);
  const Preset preset = parse_preset(f.preset);
  ensure_dir(f.out);

  const FrameDataset dataset = collect_random_frames(task, f.frames, f.seed, encoder_preset(preset).resolution);
  if (!f.dataset.empty()) {
    std::ofstream ds(f.dataset, std::ios::binary | std::ios::trunc);
    if (!ds) throw IoError("cannot write " + f.dataset);
    save_dataset(ds, dataset);
    if (!ds.flush()) throw IoError("failed writing " + f.dataset);
  }

  CaeTrainOptions opts;
  opts.max_epochs = f.epochs;
  opts.learning_rate = f.learning_rate;
  opts.batch_size = f.batch_size;
  opts.seed = f.seed;
  opts.early_stop = !f.no_early_stop;
  opts.on_epoch = [&out](int epoch, double loss) { out << "epoch " << epoch << " loss " << loss << '\n'; };
  const CaeTrainResult result = cae_train(dataset, opts);

  save_network_file((fs::path(f.out) / "encoder.bin").string(), result.params.encoder());
  save_network_file((fs::path(f.out) / "cae.bin").string(), result.params.autoencoder);
  auto loss_csv = open_out(fs::path(f.out) / "loss.csv");
  char buf[64];
  loss_csv << "epoch,loss\n";
  std::snprintf(buf, sizeof buf, "%.17g", result.initial_loss);
  loss_csv << 0 << ',' << buf << '\n';
  for (std::size_t i = 0; i < result.epoch_losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", result.epoch_losses[i]);
    loss_csv << i + 1 << ',' << buf << '\n';
  }
  out << "wrote " << (fs::path(f.out) / "encoder.bin").string() << '\n';
  return kExitOk;
}

struct TrainFlags {
  std::string task = "goal_nav";
  std::string algo = "deep";
  std::optional<std::int64_t> steps;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string preset;
  std::string encoder;
  std::string out;
  std::string frames_dir;
  HyperParams hp;
  std::string oracle_mode;
  double gamma = 0.95;
  double feedback_prob = 0.25;
  double error_rate = 0.02;
  bool no_diminishing_returns = false;
};

struct SeedOutcome {
  std::uint64_t seed;
  std::size_t steps;
  int feedback;
  int episodes;
  int goals;
};

SeedOutcome train_one(const RunConfig& cfg, const NetworkParams& encoder, const RunLimits& limits,
                      const fs::path& dir, const std::string& frames_dir) {
  ensure_dir(dir);
  {
    auto cfg_out = open_out(dir / "run.json");
    cfg_out << run_config_to_json(cfg).dump(2) << '\n';
  }
  auto log = open_out(dir / "runlog.csv");
  log << kRunLogHeader << '\n';
  std::function<void(const TrainingRun&)> before_step;
  if (!frames_dir.empty()) {
    ensure_dir(frames_dir);
    before_step = [&frames_dir](const TrainingRun& run) {
      write_png((fs::path(frames_dir) / frame_file_name(run.world().episode, run.steps_taken())).string(),
                run.current_frame());
    };
  }
  const RunResult result =
      run_training(cfg, encoder, limits, [&log](const RunRow& row) { log << format_run_row(row) << '\n'; },
                   before_step);
  if (!log.flush()) throw IoError("failed writing " + (dir / "runlog.csv").string());

  auto fb = open_out(dir / "feedback.csv");
  write_feedback_breakdown(fb, feedback_breakdown(result.rows));
  auto ep = open_out(dir / "episodes.csv");
  ep << "episode,steps,reward,reached_goal\n";
  int goals = 0;
  for (const auto& e : result.episodes) {
    ep << e.episode << ',' << e.steps << ',' << e.reward << ',' << (e.reached_goal ? 1 : 0) << '\n';
    goals += e.reached_goal ? 1 : 0;
  }
  save_network_file((dir / "params.bin").string(), result.policy);

  int feedback = 0;
  for (const auto& r : result.rows) feedback += r.feedback != 0 ? 1 : 0;
  return {cfg.seed, result.rows.size(), feedback, static_cast<int>(result.episodes.size()), goals};
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
  if (f.seed && !f.seeds.empty()) throw UsageFailure("use either --seed or --seeds, not both");
  if (f.steps && *f.steps < 0) throw UsageFailure("--steps must be >= 0");
  if (f.episodes && *f.episodes < 0) throw UsageFailure("--episodes must be >= 0");
  RunConfig base = default_run_config(parse_task(f.task));
  base.algo = parse_algo(f.algo);
  base.hp = f.hp;
  if (!f.oracle_mode.empty()) base.oracle.mode = parse_oracle_mode(f.oracle_mode);
  base.oracle.gamma = f.gamma;
  base.oracle.feedback_prob = f.feedback_prob;
  base.oracle.error_rate = f.error_rate;
  base.oracle.diminishing_returns = !f.no_diminishing_returns;
  base.hp.validate();
  base.oracle.validate();

  const NetworkParams encoder = load_network_file(f.encoder);
  if (!f.preset.empty() && parse_preset(f.preset) != preset_for_input(encoder.input_shape())) {
    throw UsageFailure("--preset " + f.preset + " does not match the encoder's input resolution");
  }

  // goal_nav runs 20 episodes by default; patrol runs 500 steps.
  RunLimits limits;
  if (base.task == TaskId::goal_nav) {
    limits.episodes = f.episodes.value_or(f.steps ? 0 : 20);
    limits.max_steps = f.steps.value_or(100000);
  } else {
    limits.episodes = 0;
    limits.max_steps = f.steps.value_or(500);
  }

  std::vector<std::uint64_t> seeds = f.seeds;
  if (seeds.empty()) seeds.push_back(f.seed.value_or(0));
  const bool fan_out = !f.seeds.empty();
  if (fan_out && !f.frames_dir.empty()) throw UsageFailure("--frames-dir needs a single --seed");

  std::vector<std::future<SeedOutcome>> jobs;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    const fs::path dir = fan_out ? fs::path(f.out) / ("seed_" + std::to_string(seed)) : fs::path(f.out);
    jobs.push_back(std::async(std::launch::async, [cfg, &encoder, limits, dir, &f] {
      return train_one(cfg, encoder, limits, dir, f.frames_dir);
    }));
  }
  for (auto& job : jobs) {
    const SeedOutcome o = job.get();
    out << "seed " << o.seed << ": " << o.steps << " steps, " << o.feedback << " feedback signals";
    if (base.task == TaskId::goal_nav) out << ", " << o.goals << "/" << o.episodes << " episodes reached the goal";
    out << '\n';
  }
  return kExitOk;
}

struct EvalFlags {
  std::vector<std::string> runs;
  std::string out;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  std::vector<RunRecord> records;
  for (const auto& dir : f.runs) {
    if (!fs::is_directory(dir)) throw UsageFailure("not a run directory: " + dir);
    if (fs::exists(fs::path(dir) / "run.json")) {
      records.push_back(load_run_dir(dir));
      continue;
    }
    // A --seeds output directory: aggregate its seed_* children.
    std::vector<fs::path> children;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "run.json")) children.push_back(entry.path());
    }
    if (children.empty()) throw UsageFailure("no run.json under " + dir);
    std::sort(children.begin(), children.end());
    for (const auto& c : children) records.push_back(load_run_dir(c.string()));
  }
  if (f.out.empty()) {
    write_eval_csv(out, records);
  } else {
    std::ostringstream text;
    write_eval_csv(text, records);
    auto file = open_out(f.out);
    file << text.str();
  }
  return kExitOk;
}

struct ValuesFlags {
  double gamma = 0.95;
  std::string policy;
  std::string out;
};

int cmd_values(const ValuesFlags& f, std::ostream& out) {
  const TabularValues values = f.policy.empty() ? solve_task_values(f.gamma)
                                                : evaluate_policy_tabular(load_network_file(f.policy), f.gamma);
  if (f.out.empty()) {
    write_values_csv(out, values);
  } else {
    auto file = open_out(f.out);
    write_values_csv(file, values);
  }
  return kExitOk;
}

struct ServeFlags {
  std::optional<unsigned short> port;
  std::string run_dir;
};

int cmd_serve(const ServeFlags& f, std::ostream& out) {
  ServerSettings settings = ServerSettings::from_env();
  if (f.port) settings.port = *f.port;
  if (!f.run_dir.empty()) settings.run_dir = f.run_dir;

  // Block the shutdown signals before any thread starts so sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionManager sessions(settings.run_dir);
  Server server(sessions, settings.port);
  server.start();
  out << "serving on port " << server.port() << ", run dir " << settings.run_dir << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  out << "shutting down" << std::endl;
  server.stop();
  sessions.stop_all();
  return kExitOk;
}

void add_hyper_param_flags(CLI::App* cmd, HyperParams& hp) {
  cmd->add_option("--delay", hp.delay, "Human delay factor d (steps)")->capture_default_str();
  cmd->add_option("--learning-rate", hp.learning_rate, "Base learning rate alpha (scaled by the preset)")
      ->capture_default_str();
  cmd->add_option("--trace-decay", hp.trace_decay, "Eligibility decay lambda")->capture_default_str();
  cmd->add_option("--window-size", hp.window_size, "Maximum window length L")->capture_default_str();
  cmd->add_option("--minibatch-size", hp.minibatch_size, "Windows sampled per update m")->capture_default_str();
  cmd->add_option("--entropy-coef", hp.entropy_coef, "Entropy regularization beta")->capture_default_str();
  cmd->add_option("--ratio-clamp", hp.ratio_clamp, "Upper clamp on importance ratios")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep COACH: learning from policy-dependent human feedback", "coach"};
  app.require_subcommand(1);

  PretrainFlags pre;
  auto* pretrain = app.add_subcommand("pretrain", "Collect random frames and train the convolutional autoencoder");
  pretrain->add_option("--task", pre.task, "goal_nav | patrol")->capture_default_str();
  pretrain->add_option("--frames", pre.frames, "Frames to collect")->capture_default_str();
  pretrain->add_option("--seed", pre.seed, "Random seed")->capture_default_str();
  pretrain->add_option("--preset", pre.preset, "full (84x84) | test (32x32)")->capture_default_str();
  pretrain->add_option("--epochs", pre.epochs, "Maximum training epochs")->capture_default_str();
  pretrain->add_option("--cae-learning-rate", pre.learning_rate, "Adam learning rate")->capture_default_str();
  pretrain->add_option("--batch-size", pre.batch_size, "Minibatch size")->capture_default_str();
  pretrain->add_flag("--no-early-stop", pre.no_early_stop, "Always run every epoch");
  pretrain->add_option("--dataset", pre.dataset, "Also save the frame dataset to this file");
  pretrain->add_option("--out", pre.out, "Output directory")->required();

  TrainFlags tr;
  auto* train = app.add_subcommand("train", "Oracle-driven training run(s)");
  train->add_option("--task", tr.task, "goal_nav | patrol")->capture_default_str();
  train->add_option("--algo", tr.algo, "deep | linear")->capture_default_str();
  train->add_option("--steps", tr.steps, "Step limit (default: 100000 cap for goal_nav, 500 for patrol)");
  train->add_option("--episodes", tr.episodes, "goal_nav episode limit (default 20 unless --steps is given)");
  auto* seed_opt = train->add_option("--seed", tr.seed, "Run seed (default 0)");
  train->add_option("--seeds", tr.seeds, "Comma-separated seeds; runs in parallel into OUT/seed_N")
      ->delimiter(',')
      ->excludes(seed_opt);
  train->add_option("--preset", tr.preset, "Check the encoder matches this preset (full | test)");
  train->add_option("--encoder", tr.encoder, "Encoder snapshot from pretrain")->required();
  train->add_option("--out", tr.out, "Output run directory")->required();
  train->add_option("--frames-dir", tr.frames_dir, "Export every observed frame as PNG");
  add_hyper_param_flags(train, tr.hp);
  train->add_option("--oracle-mode", tr.oracle_mode, "target_argmax | policy_advantage | patrol_script");
  train->add_option("--gamma", tr.gamma, "Oracle discount")->capture_default_str();
  train->add_option("--feedback-prob", tr.feedback_prob, "Oracle feedback probability")->capture_default_str();
  train->add_option("--error-rate", tr.error_rate, "Oracle sign-flip probability")->capture_default_str();
  train->add_flag("--no-diminishing-returns", tr.no_diminishing_returns, "Keep positive feedback rate constant");

  EvalFlags ev;
  auto* eval = app.add_subcommand("eval", "Aggregate run directories across seeds into a summary CSV");
  eval->add_option("runs", ev.runs, "Run directories (or --seeds output directories)")->required();
  eval->add_option("--out", ev.out, "Output CSV (default: stdout)");

  ValuesFlags va;
  auto* values = app.add_subcommand("values", "Export tabular goal_nav action values as CSV");
  values->add_option("--gamma", va.gamma, "Discount")->capture_default_str();
  values->add_option("--policy", va.policy, "Evaluate this policy snapshot instead of the optimal policy");
  values->add_option("--out", va.out, "Output CSV (default: stdout)");

  ServeFlags sv;
  auto* serve = app.add_subcommand("serve", "Run the live session server");
  serve->add_option("--port", sv.port, "Port (default: COACH_PORT or 8732)");
  serve->add_option("--run-dir", sv.run_dir, "Session output root (default: COACH_RUN_DIR or ./runs)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain(pre, out);
    if (train->parsed()) return cmd_train(tr, out);
    if (eval->parsed()) return cmd_eval(ev, out);
    if (values->parsed()) return cmd_values(va, out);
    if (serve->parsed()) return cmd_serve(sv, out);
  } catch (const UsageFailure& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace coach::cli
