#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "fbttr/fed/transport.hpp"

namespace fbttr::fed {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void fail(const std::string& what) {
  throw ProtocolError(what + ": " + std::strerror(errno));
}

void set_keepalive(int fd, std::chrono::seconds heartbeat) {
  const int on = 1;
  const int secs = static_cast<int>(std::max<std::int64_t>(1, heartbeat.count()));
  const int probes = 3;
  setsockopt(fd, SOL_SOCKET, SO_KEEPALIVE, &on, sizeof on);
  setsockopt(fd, IPPROTO_TCP, TCP_KEEPIDLE, &secs, sizeof secs);
  setsockopt(fd, IPPROTO_TCP, TCP_KEEPINTVL, &secs, sizeof secs);
  setsockopt(fd, IPPROTO_TCP, TCP_KEEPCNT, &probes, sizeof probes);
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &on, sizeof on);
}

sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = ep.host.empty() ? "0.0.0.0" : ep.host;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw ProtocolError("cannot resolve host " + host);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

// Waits for readability; false on timeout.
bool wait_readable(int fd, Clock::time_point deadline) {
  for (;;) {
    const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(std::max<std::int64_t>(0, left)));
    if (r > 0) return true;
    if (r == 0) return false;
    if (errno != EINTR) fail("poll");
  }
}

void write_all(int fd, const Frame& frame) {
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(fd, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Reads exactly `n` bytes; false if the deadline passes before the first byte.
bool read_exact(int fd, unsigned char* out, std::size_t n, Clock::time_point deadline,
                bool started) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_readable(fd, deadline)) {
      if (!started && got == 0) return false;
      throw ProtocolError("timed out inside a frame");
    }
    const ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) throw ProtocolError("peer closed the connection");
    if (r < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::optional<Frame> read_frame(int fd, Millis timeout) {
  if (fd < 0) throw ProtocolError("connection closed");
  const auto deadline = Clock::now() + timeout;
  Frame frame(kFrameHeaderSize);
  if (!read_exact(fd, frame.data(), kFrameHeaderSize, deadline, false)) return std::nullopt;
  const std::uint32_t length = payload_length(frame);
  frame.resize(kFrameHeaderSize + length);
  // Once a header arrived the rest of the frame is owed promptly.
  read_exact(fd, frame.data() + kFrameHeaderSize, length, Clock::now() + std::max(timeout, Millis(30000)),
             true);
  return frame;
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint must be HOST:PORT, got '" + text + "'");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  try {
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw ConfigError("invalid port in endpoint '" + text + "'");
  }
  return ep;
}

TcpServerTransport::TcpServerTransport(const Endpoint& listen, std::chrono::seconds heartbeat)
    : heartbeat_(heartbeat) {
  listener_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener_ < 0) fail("socket");
  const int on = 1;
  setsockopt(listener_, SOL_SOCKET, SO_REUSEADDR, &on, sizeof on);
  sockaddr_in addr = resolve(listen);
  if (::bind(listener_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(listener_);
    fail("bind");
  }
  if (::listen(listener_, 64) < 0) {
    ::close(listener_);
    fail("listen");
  }
  socklen_t len = sizeof addr;
  getsockname(listener_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpServerTransport::~TcpServerTransport() {
  for (int fd : sockets_) {
    if (fd >= 0) ::close(fd);
  }
  if (listener_ >= 0) ::close(listener_);
}

void TcpServerTransport::accept_clients(std::size_t count, Millis timeout) {
  const auto deadline = Clock::now() + timeout;
  while (sockets_.size() < count) {
    if (!wait_readable(listener_, deadline)) {
      throw ProtocolError("only " + std::to_string(sockets_.size()) + " of " +
                          std::to_string(count) + " clients connected before the timeout");
    }
    const int fd = ::accept(listener_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      fail("accept");
    }
    set_keepalive(fd, heartbeat_);
    sockets_.push_back(fd);
  }
}

void TcpServerTransport::send(std::size_t conn, const Frame& frame) {
  const int fd = sockets_.at(conn);
  if (fd < 0) throw ProtocolError("connection closed");
  write_all(fd, frame);
}

std::optional<Frame> TcpServerTransport::receive(std::size_t conn, Millis timeout) {
  return read_frame(sockets_.at(conn), timeout);
}

void TcpServerTransport::close(std::size_t conn) {
  int& fd = sockets_.at(conn);
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
    fd = -1;
  }
}

TcpClientTransport::TcpClientTransport(const Endpoint& server, std::chrono::seconds heartbeat,
                                       Millis timeout) {
  const sockaddr_in addr = resolve(server.host.empty() ? Endpoint{"127.0.0.1", server.port} : server);
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    socket_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (socket_ < 0) fail("socket");
    if (::connect(socket_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) break;
    const int err = errno;
    ::close(socket_);
    socket_ = -1;
    if (Clock::now() >= deadline) {
      errno = err;
      fail("connect to " + server.host + ":" + std::to_string(server.port));
    }
    std::this_thread::sleep_for(Millis(50));
  }
  set_keepalive(socket_, heartbeat);
}

TcpClientTransport::~TcpClientTransport() { close(); }

void TcpClientTransport::send(const Frame& frame) {
  if (socket_ < 0) throw ProtocolError("connection closed");
  write_all(socket_, frame);
}

std::optional<Frame> TcpClientTransport::receive(Millis timeout) { return read_frame(socket_, timeout); }

void TcpClientTransport::close() {
  if (socket_ >= 0) {
    ::shutdown(socket_, SHUT_RDWR);
    ::close(socket_);
    socket_ = -1;
  }
}

}  // namespace fbttr::fed
