#include "coach/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <iostream>
#include <thread>
#include <vector>

#include "coach/errors.hpp"
#include "json.hpp"

namespace coach {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

// Hard cap on undroppable backlog; a client this far behind is disconnected.
constexpr std::size_t kClientQueueHardLimit = 4096;

std::vector<std::string> split_path(std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    if (target[pos] == '/') {
      ++pos;
      continue;
    }
    const auto next = target.find('/', pos);
    parts.emplace_back(target.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next;
  }
  return parts;
}

http::response<http::string_body> make_response(const http::request<http::string_body>& req, http::status status,
                                                 std::string body, const char* content_type = "application/json") {
  http::response<http::string_body> res{status, req.version()};
  res.set(http::field::content_type, content_type);
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

std::string error_body(const std::string& message) { return json{{"error", message}}.dump() + "\n"; }

// One websocket client attached to a session.
class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, std::shared_ptr<Session> session)
      : ws_(std::move(socket)), strand_(ws_.get_executor()), session_(std::move(session)) {}

  void run(http::request<http::string_body> req) {
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsClient> weak = weak_from_this();
    handle_ = session_->subscribe([weak](const WireMessage& msg) {
      if (auto self = weak.lock()) {
        asio::post(self->strand_, [self, msg] { self->enqueue(msg); });
      }
    });
    subscribed_ = true;
    read();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      close();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    // Snapshot controls block until a tick boundary, so keep them off the
    // I/O threads' critical path by handling the message on a helper thread.
    std::thread([self = shared_from_this(), text] {
      if (auto reply = self->session_->handle_client_message(text)) {
        asio::post(self->strand_, [self, r = *reply] { self->enqueue({r, false}); });
      }
    }).detach();
    read();
  }

  void enqueue(const WireMessage& msg) {
    if (closed_) return;
    if (msg.droppable) {
      std::size_t frames = 0;
      for (const auto& m : queue_) frames += m.droppable ? 1 : 0;
      if (frames >= kClientQueueFrames) {
        // Drop the oldest queued frame that is not currently being written.
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it) {
          if (it->droppable) {
            queue_.erase(it);
            break;
          }
        }
      }
    }
    if (queue_.size() >= kClientQueueHardLimit) {
      std::cerr << "session " << session_->id() << ": client too slow, disconnecting\n";
      close();
      return;
    }
    queue_.push_back(msg);
    if (!writing_) write_next();
  }

  void write_next() {
    if (queue_.empty() || closed_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.async_write(asio::buffer(queue_.front().text),
                    asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->writing_ = false;
                        self->close();
                        return;
                      }
                      self->queue_.pop_front();
                      self->write_next();
                    }));
  }

  void close() {
    if (subscribed_) {
      session_->unsubscribe(handle_);
      subscribed_ = false;
    }
    closed_ = true;
  }

  websocket::stream<beast::tcp_stream> ws_;
  asio::any_io_executor strand_;  // the socket's own strand
  std::shared_ptr<Session> session_;
  beast::flat_buffer buffer_;
  std::deque<WireMessage> queue_;
  bool writing_ = false;
  bool closed_ = false;
  bool subscribed_ = false;
  std::uint64_t handle_ = 0;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, SessionManager& sessions) : stream_(std::move(socket)), sessions_(sessions) {}

  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) return;
    const auto parts = split_path(std::string_view(req_.target().data(), req_.target().size()));
    if (websocket::is_upgrade(req_)) {
      std::shared_ptr<Session> session;
      if (parts.size() == 2 && parts[0] == "session") session = sessions_.find(parts[1]);
      if (!session) {
        send(make_response(req_, http::status::not_found, error_body("unknown session")));
        return;
      }
      stream_.expires_never();
      std::make_shared<WsClient>(stream_.release_socket(), std::move(session))->run(std::move(req_));
      return;
    }
    // Session creation may load an encoder; keep it off the I/O thread.
    std::thread([self = shared_from_this(), parts] {
      auto res = self->route(parts);
      asio::post(self->stream_.get_executor(), [self, res = std::move(res)]() mutable { self->send(std::move(res)); });
    }).detach();
  }

  http::response<http::string_body> route(const std::vector<std::string>& parts) {
    const auto method = req_.method();
    try {
      if (parts.size() == 1 && parts[0] == "sessions") {
        if (method == http::verb::post) {
          const auto session = sessions_.create(req_.body());
          return make_response(req_, http::status::created, json{{"session", session->id()}}.dump() + "\n");
        }
        if (method == http::verb::get) {
          return make_response(req_, http::status::ok, json{{"sessions", sessions_.ids()}}.dump() + "\n");
        }
        return make_response(req_, http::status::method_not_allowed, error_body("use GET or POST"));
      }
      if (parts.size() >= 2 && parts[0] == "sessions") {
        const auto session = sessions_.find(parts[1]);
        if (!session) return make_response(req_, http::status::not_found, error_body("unknown session"));
        if (parts.size() == 3 && parts[2] == "log" && method == http::verb::get) {
          return make_response(req_, http::status::ok, session->run_log_csv(), "text/csv");
        }
        if (parts.size() == 2 && method == http::verb::delete_) {
          session->stop();
          return make_response(req_, http::status::ok, json{{"session", session->id()}, {"stopped", true}}.dump() + "\n");
        }
      }
      return make_response(req_, http::status::not_found, error_body("no such endpoint"));
    } catch (const InputError& e) {
      return make_response(req_, http::status::bad_request, error_body(e.what()));
    } catch (const ConfigError& e) {
      return make_response(req_, http::status::bad_request, error_body(e.what()));
    } catch (const FormatError& e) {
      return make_response(req_, http::status::bad_request, error_body(e.what()));
    } catch (const std::exception& e) {
      return make_response(req_, http::status::internal_server_error, error_body(e.what()));
    }
  }

  void send(http::response<http::string_body> res) {
    auto shared = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *shared, [self = shared_from_this(), shared](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (shared->keep_alive()) {
        self->read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  SessionManager& sessions_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct Server::Impl {
  Impl(SessionManager& s, unsigned short port, int threads)
      : sessions(s), acceptor(ioc), thread_count(std::max(1, threads)) {
    beast::error_code ec;
    const tcp::endpoint endpoint(asio::ip::make_address("0.0.0.0"), port);
    acceptor.open(endpoint.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(endpoint, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("cannot listen on port " + std::to_string(port) + ": " + ec.message());
  }

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec == asio::error::operation_aborted) return;
      if (!ec) std::make_shared<HttpConnection>(std::move(socket), sessions)->run();
      accept();
    });
  }

  SessionManager& sessions;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  int thread_count;
  std::vector<std::thread> threads;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::mutex stop_mutex;
  std::condition_variable stop_cv;
  bool stopped = false;
};

Server::Server(SessionManager& sessions, unsigned short port, int threads)
    : impl_(std::make_unique<Impl>(sessions, port, threads)) {}

Server::~Server() { stop(); }

unsigned short Server::port() const noexcept { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
  if (!impl_->threads.empty()) return;
  impl_->work.emplace(impl_->ioc.get_executor());
  impl_->accept();
  for (int i = 0; i < impl_->thread_count; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::wait() {
  std::unique_lock lock(impl_->stop_mutex);
  impl_->stop_cv.wait(lock, [&] { return impl_->stopped; });
}

void Server::stop() {
  std::lock_guard lock(impl_->stop_mutex);
  if (impl_->stopped) return;
  beast::error_code ignored;
  impl_->acceptor.close(ignored);
  impl_->work.reset();
  impl_->ioc.stop();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
  impl_->stopped = true;
  impl_->stop_cv.notify_all();
}

}  // namespace coach
