#include "fc3/serve.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <memory>
#include <spdlog/spdlog.h>
#include <thread>

namespace fc3 {

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class Server;

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Server& server, bool reject)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), server_(server), reject_(reject) {}

  void start();
  void close();

 private:
  void read();
  void tick();
  void send(std::string text, bool droppable = false);
  void write_next();
  void closed();

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  Server& server_;
  bool reject_;
  bool closed_ = false;
  bool closing_ = false;
  bool writing_ = false;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
};

class Server {
 public:
  Server(net::io_context& ioc, Session& session, const ServeOptions& options, const std::atomic<bool>& stop)
      : ioc_(ioc), acceptor_(ioc), poll_(ioc), session_(session), options_(options), stop_(stop) {
    const tcp::endpoint endpoint(net::ip::make_address("0.0.0.0"), options.port);
    beast::error_code ec;
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw std::runtime_error("cannot listen on port " + std::to_string(options.port) + ": " + ec.message());
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept();
    poll();
  }

  Session& session() { return session_; }
  const ServeOptions& options() const { return options_; }

  void release(Connection* c) {
    if (active_.get() != c) return;
    active_.reset();
    session_.set_connected(false);
    spdlog::info("client disconnected; session paused");
  }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      const bool busy = active_ != nullptr;
      auto c = std::make_shared<Connection>(std::move(socket), *this, busy);
      if (!busy) {
        active_ = c;
        session_.set_connected(true);
        spdlog::info("client connected");
      }
      c->start();
      accept();
    });
  }

  void poll() {
    poll_.expires_after(std::chrono::milliseconds(50));
    poll_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      if (!stop_) return poll();
      beast::error_code ignored;
      acceptor_.close(ignored);
      if (active_) active_->close();
      ioc_.stop();
    });
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  net::steady_timer poll_;
  Session& session_;
  ServeOptions options_;
  const std::atomic<bool>& stop_;
  std::shared_ptr<Connection> active_;
};

void Connection::start() {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
    if (ec) return self->closed();
    self->ws_.text(true);
    if (self->reject_) {
      self->send(error_frame("another client holds the session"));
      return self->close();
    }
    self->read();
    self->tick();
  });
}

void Connection::read() {
  ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) return self->closed();
    const std::string message = beast::buffers_to_string(self->buffer_.data());
    self->buffer_.consume(self->buffer_.size());
    if (auto error = self->server_.session().submit(message)) {
      spdlog::debug("rejected message: {}", *error);
      self->send(std::move(*error));
    }
    self->read();
  });
}

void Connection::tick() {
  timer_.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / server_.options().frame_rate)));
  timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec || self->closed_) return;
    for (auto& e : self->server_.session().take_errors()) self->send(std::move(e));
    self->send(self->server_.session().latest_frame(), true);
    self->tick();
  });
}

void Connection::send(std::string text, bool droppable) {
  if (closed_) return;
  constexpr std::size_t backlog = 8;
  if (droppable && outbox_.size() >= backlog) return;  // slow client: skip state frames
  outbox_.push_back(std::move(text));
  if (!writing_) write_next();
}

void Connection::write_next() {
  writing_ = true;
  ws_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) return self->closed();
    self->outbox_.pop_front();
    if (!self->outbox_.empty()) return self->write_next();
    self->writing_ = false;
    if (self->closing_) self->close();
  });
}

void Connection::close() {
  closing_ = true;
  if (writing_ || closed_) return;  // the pending write finishes first
  closed_ = true;
  timer_.cancel();
  server_.release(this);
  ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
}

void Connection::closed() {
  if (closed_) return;
  closed_ = true;
  timer_.cancel();
  server_.release(this);
}

}  // namespace

void serve(Session& session, const ServeOptions& options, const std::atomic<bool>& stop) {
  net::io_context ioc;
  Server server(ioc, session, options, stop);
  session.set_connected(false);
  spdlog::info("listening on port {}", server.port());
  if (options.on_listening) options.on_listening(server.port());
  std::thread sim([&] { session.run_realtime(stop, options.speed); });
  server.start();
  ioc.run();
  sim.join();
}

}  // namespace fc3
