#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "coach/session.hpp"

namespace coach {

/// Outbound messages a client may have queued before frame messages are
/// dropped (step, metric and ack messages are never dropped).
inline constexpr std::size_t kClientQueueFrames = 8;

/// HTTP + WebSocket front end on one port:
///   POST /sessions             -> {"session": id}
///   GET  /sessions             -> {"sessions": [ids]}
///   GET  /sessions/{id}/log    -> RunLog CSV
///   DELETE /sessions/{id}      -> stops the session
///   WS   /session/{id}         -> live stream + feedback/control messages
class Server {
 public:
  /// Binds immediately; throws IoError when the port is unavailable.
  /// Port 0 picks a free port (see port()).
  Server(SessionManager& sessions, unsigned short port, int threads = 4);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const noexcept;
  /// Serves on background threads until stop().
  void start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coach
