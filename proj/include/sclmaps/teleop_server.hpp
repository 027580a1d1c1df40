// Copyright 2026 The sclmaps Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Websocket transport for teleoperation sessions. All sessions share one
// io_context driven by a single thread, so each session's message handling and
// ticks are serialized without locks. Clients connect to /session?task=<id>.

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <string_view>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "sclmaps/teleop.hpp"

namespace sclmaps {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  std::size_t max_queued = 256;
  bool log = true;
};

struct SessionTarget {
  bool ok = false;
  std::string task;
};

// Parses "/session?task=<id>"; an absent task parameter selects `fallback`.
inline SessionTarget parse_session_target(std::string_view target, const std::string& fallback) {
  const auto qpos = target.find('?');
  if (target.substr(0, qpos) != "/session") return {};
  SessionTarget out{true, fallback};
  if (qpos == std::string_view::npos) return out;
  const std::string query(target.substr(qpos + 1));
  std::size_t begin = 0;
  while (begin < query.size()) {
    std::size_t end = query.find('&', begin);
    if (end == std::string::npos) end = query.size();
    const std::string kv = query.substr(begin, end - begin);
    const auto eq = kv.find('=');
    if (eq != std::string::npos && kv.substr(0, eq) == "task") out.task = kv.substr(eq + 1);
    begin = end + 1;
  }
  return out;
}

using SummaryHook = std::function<void(const Json&)>;

namespace detail {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::shared_ptr<const TeleopCatalog> catalog,
             const ServerOptions& opts, SummaryHook on_summary)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        catalog_(std::move(catalog)),
        opts_(opts),
        on_summary_(std::move(on_summary)) {}

  void start() {
    http::async_read(ws_.next_layer(), buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
  }

 private:
  void on_request(beast::error_code ec) {
    if (ec) return;
    if (!websocket::is_upgrade(request_)) return reject(http::status::bad_request, "websocket upgrade required\n");
    const auto target = parse_session_target(
        std::string_view(request_.target().data(), request_.target().size()), default_task());
    if (!target.ok) return reject(http::status::not_found, "unknown path; use /session?task=<id>\n");
    try {
      session_ = std::make_unique<Session>(catalog_, target.task);
    } catch (const DataError& e) {
      return reject(http::status::not_found, std::string(e.what()) + "\n");
    }
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request_, [self = shared_from_this()](beast::error_code ec2) { self->on_accept(ec2); });
  }

  std::string default_task() const {
    return catalog_->tasks.count("reach") ? "reach" : catalog_->tasks.begin()->first;
  }

  void reject(http::status status, const std::string& body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
    res->set(http::field::content_type, "text/plain");
    res->body() = body;
    res->prepare_payload();
    http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->ws_.next_layer().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  void on_accept(beast::error_code ec) {
    if (ec) return;
    open_ = true;
    if (opts_.log) std::clog << "session open: task " << session_->task().id << "\n";
    send(session_->maps_message());
    period_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / catalog_->config.rate));
    start_ = std::chrono::steady_clock::now();
    schedule_tick();
    read();
  }

  // Deadlines are absolute so the long-run tick rate does not drift.
  void schedule_tick() {
    timer_.expires_at(start_ + period_ * (session_->ticks() + 1));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || !self->open_) return;
      for (auto& msg : self->session_->tick()) self->send(msg, true);
      self->schedule_tick();
    });
  }

  void read() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      const std::string text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      for (auto& msg : self->session_->handle_message(text)) self->send(msg);
      self->read();
    });
  }

  void send(const Json& msg, bool droppable = false) {
    if (!open_) return;
    // A client that stops reading loses state frames rather than stalling the tick.
    if (droppable && queue_.size() >= opts_.max_queued) return;
    queue_.push_back(msg.dump());
    if (queue_.size() == 1) write_front();
  }

  void write_front() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_front();
    });
  }

  void close() {
    if (!open_) return;
    open_ = false;
    timer_.cancel();
    const Json summary = session_->summary_message();
    if (opts_.log) std::clog << "session closed: " << summary.dump() << "\n";
    if (on_summary_) on_summary_(summary);
  }

  websocket::stream<tcp::socket> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  beast::flat_buffer in_;
  http::request<http::string_body> request_;
  std::shared_ptr<const TeleopCatalog> catalog_;
  ServerOptions opts_;
  SummaryHook on_summary_;
  std::unique_ptr<Session> session_;
  std::deque<std::string> queue_;
  std::chrono::steady_clock::time_point start_;
  std::chrono::steady_clock::duration period_{};
  bool open_ = false;
};

}  // namespace detail

class TeleopServer {
 public:
  // Binds immediately; throws boost::system::system_error if the port is taken.
  TeleopServer(std::shared_ptr<const TeleopCatalog> catalog, ServerOptions opts = {},
               SummaryHook on_summary = {})
      : catalog_(std::move(catalog)), opts_(std::move(opts)), on_summary_(std::move(on_summary)),
        acceptor_(ioc_) {
    catalog_->validate();
    const tcp::endpoint ep(net::ip::make_address(opts_.address), opts_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  // Serves until stop() is called.
  void run() {
    accept();
    ioc_.run();
  }

  void stop() {
    net::post(ioc_, [this] {
      beast::error_code ignored;
      acceptor_.close(ignored);
      ioc_.stop();
    });
  }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<detail::Connection>(std::move(socket), catalog_, opts_, on_summary_)->start();
      accept();
    });
  }

  std::shared_ptr<const TeleopCatalog> catalog_;
  ServerOptions opts_;
  SummaryHook on_summary_;
  net::io_context ioc_{1};
  tcp::acceptor acceptor_;
};

}  // namespace sclmaps
