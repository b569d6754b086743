#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coach/run.hpp"

namespace coach {

/// Live-session settings. Parsed from the POST /sessions body.
struct SessionConfig {
  RunConfig run;
  double steps_per_second = 4.0;
  std::string encoder_path;
  /// Stream frames as base64 raw RGB instead of PNG.
  bool raw_frames = false;
  /// Stop ticking after this many steps (0 = run until stopped).
  std::int64_t max_steps = 0;
  /// Start paused (the tick clock is frozen until a resume control).
  bool start_paused = false;

  /// Throws InputError naming the first invalid field.
  void validate() const;
};

/// Accepts the JSON field names documented in the README; unknown fields are
/// rejected so typos surface instead of silently using defaults.
SessionConfig session_config_from_json(const std::string& json_text);
std::string session_config_to_json(const SessionConfig& cfg);

/// One outbound wire message. Frame messages may be dropped for slow clients.
struct WireMessage {
  std::string text;  // one JSON object, newline-terminated
  bool droppable = false;
};

using MessageSink = std::function<void(const WireMessage&)>;

/// A real-time training session: one learner thread ticking at a fixed rate,
/// a single-slot inbound feedback mailbox, and broadcast to subscribers.
class Session {
 public:
  /// Throws InputError / ConfigError for an invalid config and IoError when
  /// the run directory cannot be created.
  Session(std::string id, SessionConfig cfg, const NetworkParams& encoder, std::string run_dir);
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Reopens a snapshot written by a `snapshot` control.
  static std::unique_ptr<Session> restore(std::string id, const std::string& snapshot_path, std::string run_dir);

  void start();
  /// Stops the learner thread and flushes the run directory.
  void stop();

  const std::string& id() const noexcept { return id_; }
  const SessionConfig& config() const noexcept { return cfg_; }
  const std::string& run_dir() const noexcept { return run_dir_; }

  /// Handles one client message (already parsed from a JSON line). Returns
  /// the reply to send to that client (ack or error), if any.
  std::optional<std::string> handle_client_message(const std::string& line);

  /// Enqueues ±1 feedback for the next tick. Returns an empty string when
  /// accepted, otherwise the rejection reason.
  std::string submit_feedback(int value);
  void pause();
  void resume();
  bool paused() const;
  /// Requests a snapshot at the next tick boundary (immediately when paused
  /// or stopped). Blocks until written; returns the path.
  std::string snapshot();

  /// Registers a subscriber; returns a handle for unsubscribe.
  std::uint64_t subscribe(MessageSink sink);
  void unsubscribe(std::uint64_t handle);

  /// RunLog CSV of all steps so far.
  std::string run_log_csv() const;
  std::vector<RunRow> rows() const;
  std::int64_t steps_taken() const;
  std::uint64_t overruns() const noexcept { return overruns_.load(); }
  bool finished() const noexcept { return finished_.load(); }
  /// Blocks until the session has taken `steps` steps or finished.
  void wait_for_steps(std::int64_t steps) const;

 private:
  Session(std::string id, SessionConfig cfg, TrainingRun run, std::vector<RunRow> rows, std::string run_dir);

  void loop();
  void tick();
  void broadcast(const WireMessage& msg);
  WireMessage frame_message(std::int64_t step) const;
  std::string write_snapshot_locked();
  void write_outputs_locked() const;

  std::string id_;
  SessionConfig cfg_;
  std::string run_dir_;

  mutable std::mutex state_mutex_;  // guards run_ and rows_
  TrainingRun run_;
  std::vector<RunRow> rows_;
  std::ofstream log_out_;
  mutable std::condition_variable progress_cv_;

  mutable std::mutex control_mutex_;  // guards the fields below
  std::condition_variable control_cv_;
  int pending_feedback_ = 0;
  bool paused_ = false;
  bool stop_requested_ = false;
  bool started_ = false;
  bool snapshot_requested_ = false;
  std::uint64_t snapshot_generation_ = 0;
  std::string last_snapshot_path_;
  std::condition_variable snapshot_cv_;

  std::mutex sink_mutex_;
  std::map<std::uint64_t, MessageSink> sinks_;
  std::uint64_t next_sink_ = 1;

  std::atomic<std::uint64_t> overruns_{0};
  std::atomic<bool> finished_{false};
  std::thread thread_;
};

/// Owns all live sessions; ids are "s1", "s2", ... in creation order.
class SessionManager {
 public:
  explicit SessionManager(std::string run_root);
  ~SessionManager();

  /// Creates and starts a session from a POST /sessions body. A body with a
  /// "restore" field reopens that snapshot instead.
  std::shared_ptr<Session> create(const std::string& json_body);
  std::shared_ptr<Session> find(const std::string& id) const;
  std::vector<std::string> ids() const;
  void stop_all();

  const std::string& run_root() const noexcept { return run_root_; }

 private:
  std::string next_id_locked();

  std::string run_root_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

/// Environment-derived server settings: COACH_PORT (8732), COACH_RUN_DIR (./runs).
struct ServerSettings {
  unsigned short port = 8732;
  std::string run_dir = "./runs";
  static ServerSettings from_env();
};

}  // namespace coach
