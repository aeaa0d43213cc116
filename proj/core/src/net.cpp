#include "emghand/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "emghand/errors.hpp"

namespace emghand::net {

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Socket Socket::listen_on(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw DataError("socket() failed: " + std::string(std::strerror(errno)));
  Socket s(fd);
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw DataError("cannot bind port " + std::to_string(port) + ": " +
                    std::strerror(errno));
  if (::listen(fd, 4) != 0)
    throw DataError("listen failed on port " + std::to_string(port) + ": " +
                    std::strerror(errno));
  return s;
}

Socket Socket::accept_one(const std::atomic<bool>& stop) const {
  while (!stop.load()) {
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw DataError("poll failed: " + std::string(std::strerror(errno)));
    }
    if (rc == 0) continue;
    const int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw DataError("accept failed: " + std::string(std::strerror(errno)));
    }
    const int one = 1;
    ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Socket(client);
  }
  return Socket();
}

Socket Socket::connect_to(const std::string& host, std::uint16_t port, int timeout_ms) {
  int waited = 0;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw DataError("socket() failed: " + std::string(std::strerror(errno)));
    Socket s(fd);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw DataError("bad host address: " + host);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    if (waited >= timeout_ms)
      throw DataError("cannot connect to " + host + ":" + std::to_string(port) + ": " +
                      std::strerror(errno));
    ::usleep(20 * 1000);
    waited += 20;
  }
}

bool Socket::send_all(std::string_view data) const {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

bool LineReader::read_line(std::string& out, const std::atomic<bool>& stop) {
  while (true) {
    const auto pos = buffer_.find('\n');
    if (pos != std::string::npos) {
      out.assign(buffer_, 0, pos);
      buffer_.erase(0, pos + 1);
      if (!out.empty() && out.back() == '\r') out.pop_back();
      return true;
    }
    if (stop.load()) return false;
    pollfd p{socket_.fd(), POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (rc == 0) continue;
    char chunk[4096];
    const ssize_t n = ::recv(socket_.fd(), chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) {  // EOF: flush a trailing unterminated line, if any
      if (!buffer_.empty()) {
        out.swap(buffer_);
        buffer_.clear();
        return true;
      }
      return false;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace emghand::net
