// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/ingest_listener.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "ww/error.hpp"

namespace ww::sensor {

namespace {

bool send_all(int fd, const std::string& text) {
  std::size_t sent = 0;
  while (sent < text.size()) {
    ssize_t n = ::send(fd, text.data() + sent, text.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

IngestListener::~IngestListener() { stop(); }

std::uint16_t IngestListener::start(std::uint16_t port, RecordSink sink) {
  if (running_.load()) {
    throw Error(ErrorKind::Domain, "listener already running");
  }
  sink_ = std::move(sink);

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) {
    throw Error(ErrorKind::Io, std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorKind::Io, std::string("bind: ") + std::strerror(errno));
  }
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorKind::Io, std::string("listen: ") + std::strerror(errno));
  }

  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  running_.store(true);
  accept_thread_ = std::thread([this] { accept_loop(); });
  return port_;
}

void IngestListener::stop() {
  if (!running_.exchange(false)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    // Unblock workers stuck in recv; each worker closes its own fd.
    for (int fd : open_connections_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& w : workers) {
    if (w.joinable()) w.join();
  }
}

void IngestListener::accept_loop() {
  while (running_.load()) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_.load()) break;
      if (errno == EINTR) continue;
      break;
    }
    std::lock_guard lock(workers_mutex_);
    open_connections_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void IngestListener::serve_connection(int fd) {
  std::string buffer;
  bool discarding = false;  // inside an oversized line, waiting for newline
  char chunk[4096];

  while (running_.load()) {
    ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));

    std::size_t start = 0;
    for (;;) {
      auto nl = buffer.find('\n', start);
      if (nl == std::string::npos) break;
      std::string line = buffer.substr(start, nl - start);
      start = nl + 1;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (discarding) {
        discarding = false;
        send_all(fd, "ERR line exceeds 1 MiB\n");
        continue;
      }
      if (line.empty()) continue;
      if (line.size() > kMaxLineBytes) {
        send_all(fd, "ERR line exceeds 1 MiB\n");
        continue;
      }
      try {
        SensorRecord record = parse_record_line(line);
        {
          std::lock_guard lock(sink_mutex_);
          if (sink_) sink_(record);
        }
        if (!send_all(fd, "OK\n")) break;
      } catch (const Error& e) {
        if (!send_all(fd, std::string("ERR ") + e.what() + "\n")) break;
      }
    }
    buffer.erase(0, start);
    if (buffer.size() > kMaxLineBytes) {
      // Drop the partial oversized line now so memory stays bounded.
      buffer.clear();
      discarding = true;
    }
  }
  {
    std::lock_guard lock(workers_mutex_);
    std::erase(open_connections_, fd);
  }
  ::close(fd);
}

}  // namespace ww::sensor
