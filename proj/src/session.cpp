#include "coach/session.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "coach/binary_io.hpp"
#include "coach/config_json.hpp"
#include "coach/errors.hpp"
#include "coach/image_io.hpp"
#include "json.hpp"

namespace coach {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSnapshotMagic = "COACHSS1";

std::string line(const json& j) { return j.dump() + "\n"; }

}  // namespace

void SessionConfig::validate() const {
  if (!(steps_per_second > 0.0)) throw InputError("steps_per_second must be > 0");
  if (max_steps < 0) throw InputError("max_steps must be >= 0");
  run.hp.validate();
  run.oracle.validate();
}

SessionConfig session_config_from_json(const std::string& json_text) {
  json root = parse_json_object(json_text, "session config");
  SessionConfig cfg;
  cfg.run = take_run_config(root, "live");
  take_field(root, "steps_per_second", cfg.steps_per_second);
  take_field(root, "encoder", cfg.encoder_path);
  take_field(root, "raw_frames", cfg.raw_frames);
  take_field(root, "max_steps", cfg.max_steps);
  take_field(root, "start_paused", cfg.start_paused);
  reject_unknown_fields(root, "session config");
  cfg.validate();
  return cfg;
}

std::string session_config_to_json(const SessionConfig& cfg) {
  json j = run_config_to_json(cfg.run);
  j["steps_per_second"] = cfg.steps_per_second;
  j["encoder"] = cfg.encoder_path;
  j["raw_frames"] = cfg.raw_frames;
  j["max_steps"] = cfg.max_steps;
  j["start_paused"] = cfg.start_paused;
  return j.dump(2);
}

Session::Session(std::string id, SessionConfig cfg, const NetworkParams& encoder, std::string run_dir)
    : Session(std::move(id), cfg, TrainingRun(cfg.run, encoder), {}, std::move(run_dir)) {}

Session::Session(std::string id, SessionConfig cfg, TrainingRun run, std::vector<RunRow> rows, std::string run_dir)
    : id_(std::move(id)), cfg_(std::move(cfg)), run_dir_(std::move(run_dir)), run_(std::move(run)),
      rows_(std::move(rows)) {
  cfg_.validate();
  paused_ = cfg_.start_paused;
  std::error_code ec;
  fs::create_directories(run_dir_, ec);
  if (ec) throw IoError("cannot create run directory " + run_dir_ + ": " + ec.message());
  {
    std::ofstream cfg_out(fs::path(run_dir_) / "session.json");
    if (!cfg_out) throw IoError("cannot write to run directory " + run_dir_);
    cfg_out << session_config_to_json(cfg_) << '\n';
  }
  log_out_.open(fs::path(run_dir_) / "runlog.csv", std::ios::trunc);
  if (!log_out_) throw IoError("cannot write to run directory " + run_dir_);
  write_run_log(log_out_, rows_);
  log_out_.flush();
}

Session::~Session() { stop(); }

std::unique_ptr<Session> Session::restore(std::string id, const std::string& snapshot_path, std::string run_dir) {
  std::ifstream in(snapshot_path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot " + snapshot_path);
  io::expect_magic(in, kSnapshotMagic, "session snapshot");
  SessionConfig cfg = session_config_from_json(io::read_string(in));
  std::istringstream log_text(io::read_string(in));
  std::vector<RunRow> rows = read_run_log(log_text);
  TrainingRun run = TrainingRun::load(in);
  if (static_cast<std::int64_t>(rows.size()) != run.steps_taken()) {
    throw FormatError("session snapshot: log length does not match step counter");
  }
  return std::unique_ptr<Session>(
      new Session(std::move(id), std::move(cfg), std::move(run), std::move(rows), std::move(run_dir)));
}

void Session::start() {
  std::lock_guard lock(control_mutex_);
  if (started_) return;
  started_ = true;
  thread_ = std::thread([this] { loop(); });
}

void Session::stop() {
  {
    std::lock_guard lock(control_mutex_);
    stop_requested_ = true;
  }
  control_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  std::lock_guard lock(state_mutex_);
  if (log_out_.is_open()) {
    write_outputs_locked();
    log_out_.close();
  }
  finished_ = true;
  progress_cv_.notify_all();
}

void Session::loop() {
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / cfg_.steps_per_second));
  {
    std::lock_guard lock(state_mutex_);
    broadcast(frame_message(run_.steps_taken()));
  }
  auto deadline = clock::now() + period;
  std::optional<clock::duration> frozen_remaining;
  bool done = cfg_.max_steps > 0 && steps_taken() >= cfg_.max_steps;
  for (;;) {
    {
      std::unique_lock lock(control_mutex_);
      for (;;) {
        if (stop_requested_) return;
        if (snapshot_requested_) {
          std::lock_guard state(state_mutex_);
          last_snapshot_path_ = write_snapshot_locked();
          snapshot_requested_ = false;
          ++snapshot_generation_;
          snapshot_cv_.notify_all();
          continue;
        }
        if (done) {
          // Finished: stay alive for snapshot and stop requests only.
          control_cv_.wait(lock);
          continue;
        }
        if (paused_) {
          // Freeze the tick clock: keep the time left until the next tick.
          if (!frozen_remaining) frozen_remaining = std::max(clock::duration::zero(), deadline - clock::now());
          control_cv_.wait(lock);
          continue;
        }
        if (frozen_remaining) {
          deadline = clock::now() + *frozen_remaining;
          frozen_remaining.reset();
        }
        if (clock::now() >= deadline) break;
        control_cv_.wait_until(lock, deadline);
      }
    }
    tick();
    if (cfg_.max_steps > 0 && steps_taken() >= cfg_.max_steps) {
      {
        std::lock_guard lock(state_mutex_);
        write_outputs_locked();
      }
      finished_ = true;
      progress_cv_.notify_all();
      done = true;
      continue;
    }
    deadline += period;
    const auto now = clock::now();
    if (now > deadline) {
      // Overrun: delay the next tick instead of dropping it.
      ++overruns_;
      std::cerr << "session " << id_ << ": tick overran its budget by "
                << std::chrono::duration<double, std::milli>(now - deadline).count() << " ms\n";
      deadline = now;
    }
  }
}

void Session::tick() {
  int feedback = 0;
  {
    std::lock_guard lock(control_mutex_);
    feedback = pending_feedback_;
    pending_feedback_ = 0;
  }
  RunRow row;
  WireMessage frame;
  int pos = 0, neg = 0;
  {
    std::lock_guard lock(state_mutex_);
    row = run_.step(feedback);
    rows_.push_back(row);
    log_out_ << format_run_row(row) << '\n';
    log_out_.flush();
    frame = frame_message(run_.steps_taken());
    pos = run_.pos_count();
    neg = run_.neg_count();
  }
  progress_cv_.notify_all();
  broadcast({line({{"kind", "step"},
                   {"session", id_},
                   {"step", row.step},
                   {"action", index_of(row.action)},
                   {"prob", row.prob},
                   {"entropy", row.entropy},
                   {"feedback", row.feedback}}),
             false});
  json metric = {{"kind", "metric"},
                 {"session", id_},
                 {"step", row.step},
                 {"env_reward", nullptr},
                 {"center_dist", row.center_dist},
                 {"angle_deg", row.angle_deg},
                 {"pos_count", pos},
                 {"neg_count", neg}};
  if (row.env_reward) metric["env_reward"] = *row.env_reward;
  broadcast({line(metric), false});
  broadcast(frame);
}

WireMessage Session::frame_message(std::int64_t step) const {
  const Observation frame = run_.current_frame();
  json j = {{"kind", "frame"}, {"session", id_}, {"step", step}};
  if (cfg_.raw_frames) {
    j["rgb_b64"] = base64_encode(to_rgb8(frame));
    j["width"] = frame.dim(2);
    j["height"] = frame.dim(1);
  } else {
    j["png_b64"] = base64_encode(encode_png(frame));
  }
  return {line(j), true};
}

void Session::broadcast(const WireMessage& msg) {
  std::lock_guard lock(sink_mutex_);
  for (auto& [handle, sink] : sinks_) sink(msg);
}

std::uint64_t Session::subscribe(MessageSink sink) {
  std::lock_guard lock(sink_mutex_);
  const auto handle = next_sink_++;
  sinks_.emplace(handle, std::move(sink));
  return handle;
}

void Session::unsubscribe(std::uint64_t handle) {
  std::lock_guard lock(sink_mutex_);
  sinks_.erase(handle);
}

std::string Session::submit_feedback(int value) {
  if (value != 1 && value != -1) {
    return value == 0 ? "value 0 is silence, not feedback; send 1 or -1" : "feedback value must be 1 or -1";
  }
  if (cfg_.run.source != FeedbackSource::live) return "session uses the oracle feedback source";
  if (finished_) return "session has finished";
  std::lock_guard lock(control_mutex_);
  if (paused_) return "session is paused";
  pending_feedback_ = value;  // a later value in the same tick overwrites
  return {};
}

void Session::pause() {
  {
    std::lock_guard lock(control_mutex_);
    paused_ = true;
  }
  control_cv_.notify_all();
}

void Session::resume() {
  {
    std::lock_guard lock(control_mutex_);
    paused_ = false;
  }
  control_cv_.notify_all();
}

bool Session::paused() const {
  std::lock_guard lock(control_mutex_);
  return paused_;
}

std::string Session::snapshot() {
  std::unique_lock lock(control_mutex_);
  const bool ticking = started_ && !stop_requested_ && thread_.joinable();
  if (!ticking || paused_) {
    // No tick can be in flight while paused or stopped.
    std::lock_guard state(state_mutex_);
    return write_snapshot_locked();
  }
  const auto generation = snapshot_generation_;
  snapshot_requested_ = true;
  control_cv_.notify_all();
  snapshot_cv_.wait(lock, [&] { return snapshot_generation_ != generation || stop_requested_; });
  if (snapshot_generation_ == generation) throw UsageError("session stopped before the snapshot was taken");
  return last_snapshot_path_;
}

std::string Session::write_snapshot_locked() {
  const fs::path path = fs::path(run_dir_) / ("snapshot_" + std::to_string(run_.steps_taken()) + ".bin");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write snapshot " + path.string());
  io::write_magic(out, kSnapshotMagic);
  io::write_string(out, session_config_to_json(cfg_));
  std::ostringstream log_text;
  write_run_log(log_text, rows_);
  io::write_string(out, log_text.str());
  run_.save(out);
  if (!out.flush()) throw IoError("failed writing snapshot " + path.string());
  return path.string();
}

void Session::write_outputs_locked() const {
  std::ofstream out(fs::path(run_dir_) / "feedback.csv", std::ios::trunc);
  if (!out) throw IoError("cannot write feedback breakdown in " + run_dir_);
  write_feedback_breakdown(out, feedback_breakdown(rows_));
}

std::optional<std::string> Session::handle_client_message(const std::string& text) {
  const auto error = [&](const std::string& reason) {
    return line({{"kind", "error"}, {"session", id_}, {"step", steps_taken()}, {"reason", reason}});
  };
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error&) {
    return error("message is not valid JSON");
  }
  if (!msg.is_object() || !msg.contains("kind") || !msg["kind"].is_string()) {
    return error("message needs a string 'kind'");
  }
  if (msg.contains("session") && (!msg["session"].is_string() || msg["session"].get<std::string>() != id_)) {
    return error("unknown session");
  }
  const std::string kind = msg["kind"];
  if (kind == "feedback") {
    std::string reason;
    int value = 0;
    if (!msg.contains("value") || !msg["value"].is_number_integer()) {
      reason = "feedback needs an integer 'value' of 1 or -1";
    } else {
      value = msg["value"].get<int>();
      reason = submit_feedback(value);
    }
    json ack = {{"kind", "feedback"},   {"session", id_},           {"step", steps_taken()},
                {"value", value},       {"accepted", reason.empty()}, {"reason", reason}};
    if (msg.contains("client_ts_ms")) ack["client_ts_ms"] = msg["client_ts_ms"];
    return line(ack);
  }
  if (kind == "control") {
    const std::string cmd = msg.value("cmd", "");
    if (cmd == "pause") {
      pause();
    } else if (cmd == "resume") {
      resume();
    } else if (cmd == "snapshot") {
      try {
        const std::string path = snapshot();
        return line({{"kind", "snapshot_ack"}, {"session", id_}, {"step", steps_taken()}, {"path", path}});
      } catch (const std::exception& e) {
        return error(std::string("snapshot failed: ") + e.what());
      }
    } else {
      return error("unknown control command '" + cmd + "'");
    }
    return line({{"kind", "control"}, {"session", id_}, {"step", steps_taken()}, {"cmd", cmd}, {"ok", true}});
  }
  return error("unsupported message kind '" + kind + "'");
}

std::string Session::run_log_csv() const {
  std::lock_guard lock(state_mutex_);
  std::ostringstream out;
  write_run_log(out, rows_);
  return out.str();
}

std::vector<RunRow> Session::rows() const {
  std::lock_guard lock(state_mutex_);
  return rows_;
}

std::int64_t Session::steps_taken() const {
  std::lock_guard lock(state_mutex_);
  return run_.steps_taken();
}

void Session::wait_for_steps(std::int64_t steps) const {
  std::unique_lock lock(state_mutex_);
  progress_cv_.wait(lock, [&] { return run_.steps_taken() >= steps || finished_.load(); });
}

SessionManager::SessionManager(std::string run_root) : run_root_(std::move(run_root)) {}

SessionManager::~SessionManager() { stop_all(); }

std::string SessionManager::next_id_locked() {
  for (;;) {
    std::string id = "s" + std::to_string(++counter_);
    if (!sessions_.count(id) && !fs::exists(fs::path(run_root_) / id)) return id;
  }
}

std::shared_ptr<Session> SessionManager::create(const std::string& json_body) {
  json body;
  try {
    body = json::parse(json_body);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("request body is not valid JSON: ") + e.what());
  }
  std::lock_guard lock(mutex_);
  const std::string id = next_id_locked();
  const std::string dir = (fs::path(run_root_) / id).string();
  std::shared_ptr<Session> session;
  if (body.is_object() && body.contains("restore")) {
    if (!body["restore"].is_string()) throw InputError("'restore' must be a snapshot path");
    session = Session::restore(id, body["restore"].get<std::string>(), dir);
  } else {
    const SessionConfig cfg = session_config_from_json(json_body);
    if (cfg.encoder_path.empty()) throw InputError("session config needs an 'encoder' snapshot path");
    session = std::make_shared<Session>(id, cfg, load_network_file(cfg.encoder_path), dir);
  }
  session->start();
  sessions_.emplace(id, session);
  return session;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

void SessionManager::stop_all() {
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions = sessions_;
  }
  for (auto& [id, s] : sessions) s->stop();
}

ServerSettings ServerSettings::from_env() {
  ServerSettings s;
  if (const char* port = std::getenv("COACH_PORT"); port && *port) {
    char* end = nullptr;
    const long v = std::strtol(port, &end, 10);
    if (*end != '\0' || v < 0 || v > 65535) throw ConfigError(std::string("COACH_PORT is not a port number: ") + port);
    s.port = static_cast<unsigned short>(v);
  }
  if (const char* dir = std::getenv("COACH_RUN_DIR"); dir && *dir) s.run_dir = dir;
  return s;
}

}  // namespace coach
