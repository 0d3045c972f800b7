#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fbttr/fed/messages.hpp"

namespace fbttr::fed {

using Millis = std::chrono::milliseconds;

// Server end of a hub-and-spoke link. Connections are indexed 0..n-1 in
// arrival order. Frames are delivered in order, reliably, at most once.
// send() and receive() throw ProtocolError once the peer is gone; receive()
// returns nullopt on timeout.
class ServerTransport {
 public:
  virtual ~ServerTransport() = default;
  virtual std::size_t connections() const = 0;
  virtual void send(std::size_t conn, const Frame& frame) = 0;
  virtual std::optional<Frame> receive(std::size_t conn, Millis timeout) = 0;
  virtual void close(std::size_t conn) = 0;
};

class ClientTransport {
 public:
  virtual ~ClientTransport() = default;
  virtual void send(const Frame& frame) = 0;
  virtual std::optional<Frame> receive(Millis timeout) = 0;
  virtual void close() = 0;
};

// In-process queues.
class LoopbackHub {
 public:
  explicit LoopbackHub(std::size_t clients);
  ~LoopbackHub();

  ServerTransport& server();
  std::unique_ptr<ClientTransport> client(std::size_t index);

  struct Channel;

 private:
  struct Link;
  class Server;
  std::vector<std::shared_ptr<Link>> links_;
  std::unique_ptr<Server> server_;
};

enum class Direction { ToClient, ToServer };

using FrameObserver = std::function<void(Direction, std::size_t conn, const Frame&)>;

// Forwards to another transport and reports every frame to an observer.
class TappedServerTransport final : public ServerTransport {
 public:
  TappedServerTransport(ServerTransport& inner, FrameObserver observer)
      : inner_(inner), observer_(std::move(observer)) {}

  std::size_t connections() const override { return inner_.connections(); }
  void send(std::size_t conn, const Frame& frame) override;
  std::optional<Frame> receive(std::size_t conn, Millis timeout) override;
  void close(std::size_t conn) override { inner_.close(conn); }

 private:
  ServerTransport& inner_;
  FrameObserver observer_;
  std::mutex mutex_;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  // "host:port"
  static Endpoint parse(const std::string& text);
};

// Length-prefixed frames over TCP. TCP keepalive probes run at the
// heartbeat interval so a silently vanished peer surfaces as an error.
class TcpServerTransport final : public ServerTransport {
 public:
  TcpServerTransport(const Endpoint& listen, std::chrono::seconds heartbeat);
  ~TcpServerTransport() override;
  TcpServerTransport(const TcpServerTransport&) = delete;
  TcpServerTransport& operator=(const TcpServerTransport&) = delete;

  std::uint16_t port() const { return port_; }
  // Blocks until `count` clients connected or the timeout expires.
  void accept_clients(std::size_t count, Millis timeout);

  std::size_t connections() const override { return sockets_.size(); }
  void send(std::size_t conn, const Frame& frame) override;
  std::optional<Frame> receive(std::size_t conn, Millis timeout) override;
  void close(std::size_t conn) override;

 private:
  int listener_ = -1;
  std::uint16_t port_ = 0;
  std::chrono::seconds heartbeat_;
  std::vector<int> sockets_;
};

class TcpClientTransport final : public ClientTransport {
 public:
  // Retries until the server accepts or the timeout expires.
  TcpClientTransport(const Endpoint& server, std::chrono::seconds heartbeat, Millis timeout);
  ~TcpClientTransport() override;
  TcpClientTransport(const TcpClientTransport&) = delete;
  TcpClientTransport& operator=(const TcpClientTransport&) = delete;

  void send(const Frame& frame) override;
  std::optional<Frame> receive(Millis timeout) override;
  void close() override;

 private:
  int socket_ = -1;
};

}  // namespace fbttr::fed
