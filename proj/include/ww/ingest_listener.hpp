// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_INGEST_LISTENER_HPP
#define WW_INGEST_LISTENER_HPP

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "ww/sensor.hpp"

namespace ww::sensor {

/// TCP listener for the newline-delimited record wire format. Each accepted
/// line is answered with "OK\n" or "ERR <reason>\n"; a bad line never closes
/// the connection. Connections are served on their own threads and records
/// are handed to the sink in arrival order per connection.
class IngestListener {
 public:
  using RecordSink = std::function<void(const SensorRecord&)>;

  IngestListener() = default;
  ~IngestListener();

  IngestListener(const IngestListener&) = delete;
  IngestListener& operator=(const IngestListener&) = delete;

  /// Binds 127.0.0.1:<port> and starts accepting. Port 0 picks an ephemeral
  /// port; the bound port is returned and available via port().
  std::uint16_t start(std::uint16_t port, RecordSink sink);

  void stop();

  std::uint16_t port() const { return port_; }
  bool running() const { return running_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  RecordSink sink_;
  std::thread accept_thread_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> open_connections_;  // guarded by workers_mutex_
  std::mutex sink_mutex_;
};

}  // namespace ww::sensor

#endif  // WW_INGEST_LISTENER_HPP
