#pragma once

// Minimal blocking TCP plumbing over POSIX sockets.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "gef/protocol.hpp"

namespace gef::net {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    throw std::invalid_argument("expected HOST:PORT, got '" + text + "'");
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in '" + text + "'");
  }
  if (port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(std::exchange(fd_, -1));
  }

  /// Unblocks any thread waiting on this socket without releasing the fd.
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void send_all(const std::uint8_t* data, std::size_t size) const {
    while (size > 0) {
      const auto sent = ::send(fd_, data, size, MSG_NOSIGNAL);
      if (sent < 0) {
        if (errno == EINTR) continue;
        throw NetError(errno_text("send"));
      }
      data += sent;
      size -= static_cast<std::size_t>(sent);
    }
  }

  void send(const wire::Message& m) const {
    const auto frame = wire::encode_message(m);
    send_all(frame.data(), frame.size());
  }

  /// Reads available bytes into the reader. Returns false at end of stream.
  bool read_some(wire::FrameReader& reader) const {
    std::uint8_t buf[4096];
    while (true) {
      const auto got = ::recv(fd_, buf, sizeof buf, 0);
      if (got < 0) {
        if (errno == EINTR) continue;
        throw NetError(errno_text("recv"));
      }
      if (got == 0) return false;
      reader.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(got)));
      return true;
    }
  }

  /// Blocks until one complete message arrives. Returns nullopt on a clean
  /// end of stream; throws ProtocolError if the stream ends mid-frame.
  std::optional<wire::Message> receive(wire::FrameReader& reader) const {
    while (true) {
      if (auto m = reader.next()) return m;
      if (!read_some(reader)) {
        if (reader.pending() != 0) throw wire::ProtocolError("stream ended inside a frame");
        return std::nullopt;
      }
    }
  }

 private:
  int fd_ = -1;
};

namespace detail {

inline addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto port = std::to_string(ep.port);
  const char* host = ep.host.empty() || ep.host == "*" ? nullptr : ep.host.c_str();
  if (const int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0)
    throw NetError("resolve " + ep.str() + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace detail

class Listener {
 public:
  explicit Listener(const Endpoint& ep, int backlog = 64) {
    addrinfo* res = detail::resolve(ep, true);
    Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    if (!s.valid()) {
      ::freeaddrinfo(res);
      throw NetError(errno_text("socket"));
    }
    const int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const int rc = ::bind(s.fd(), res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) throw NetError(errno_text("bind " + ep.str()));
    if (::listen(s.fd(), backlog) != 0) throw NetError(errno_text("listen"));
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    local_ = {ep.host, ntohs(bound.sin_port)};
    sock_ = std::move(s);
  }

  const Endpoint& local() const { return local_; }

  /// Blocks for the next connection; nullopt once the listener is shut down.
  std::optional<Socket> accept() const {
    while (true) {
      const int fd = ::accept(sock_.fd(), nullptr, nullptr);
      if (fd >= 0) {
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Socket(fd);
      }
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return std::nullopt;
    }
  }

  void shutdown() const { sock_.shutdown(); }

 private:
  Socket sock_;
  Endpoint local_;
};

inline Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
  addrinfo* res = detail::resolve(ep, false);
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    throw NetError(errno_text("socket"));
  }
  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 && errno != EINPROGRESS) throw NetError(errno_text("connect " + ep.str()));
  if (rc != 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw NetError("connect " + ep.str() + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw NetError("connect " + ep.str() + ": " + std::strerror(err));
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

}  // namespace gef::net
