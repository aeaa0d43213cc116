#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

namespace emghand::net {

/// Thin RAII wrapper over a POSIX TCP socket; enough for the newline-
/// delimited loopback protocol.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();

  /// Throws DataError when the port is already in use or cannot be bound.
  static Socket listen_on(std::uint16_t port);

  /// Polls until a client connects or `stop` becomes true (invalid Socket).
  Socket accept_one(const std::atomic<bool>& stop) const;

  static Socket connect_to(const std::string& host, std::uint16_t port,
                           int timeout_ms = 5000);

  /// Sends the whole buffer; returns false on a closed peer.
  bool send_all(std::string_view data) const;

 private:
  int fd_ = -1;
};

/// Buffered line reader over a socket. read_line strips the trailing
/// newline; returns false on EOF or when `stop` becomes true.
class LineReader {
 public:
  explicit LineReader(const Socket& socket) : socket_(socket) {}
  bool read_line(std::string& out, const std::atomic<bool>& stop);

 private:
  const Socket& socket_;
  std::string buffer_;
};

}  // namespace emghand::net
