#include "fbttr/fed/transport.hpp"

namespace fbttr::fed {

struct LoopbackHub::Channel {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<Frame> frames;
  bool closed = false;

  void push(const Frame& f) {
    {
      std::lock_guard lock(mutex);
      if (closed) throw ProtocolError("loopback peer closed");
      frames.push_back(f);
    }
    ready.notify_one();
  }

  std::optional<Frame> pop(Millis timeout) {
    std::unique_lock lock(mutex);
    if (!ready.wait_for(lock, timeout, [&] { return !frames.empty() || closed; })) return std::nullopt;
    if (frames.empty()) throw ProtocolError("loopback peer closed");
    Frame f = std::move(frames.front());
    frames.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard lock(mutex);
      closed = true;
    }
    ready.notify_all();
  }
};

struct LoopbackHub::Link {
  Channel to_client;
  Channel to_server;

  void close() {
    to_client.close();
    to_server.close();
  }
};

class LoopbackHub::Server final : public ServerTransport {
 public:
  explicit Server(std::vector<std::shared_ptr<Link>>& links) : links_(links) {}

  std::size_t connections() const override { return links_.size(); }
  void send(std::size_t conn, const Frame& frame) override { links_.at(conn)->to_client.push(frame); }
  std::optional<Frame> receive(std::size_t conn, Millis timeout) override {
    return links_.at(conn)->to_server.pop(timeout);
  }
  void close(std::size_t conn) override { links_.at(conn)->close(); }

 private:
  std::vector<std::shared_ptr<Link>>& links_;
};

namespace {

class LoopbackClient final : public ClientTransport {
 public:
  explicit LoopbackClient(std::shared_ptr<void> keep, LoopbackHub::Channel& in,
                          LoopbackHub::Channel& out)
      : keep_(std::move(keep)), in_(in), out_(out) {}
  ~LoopbackClient() override { close(); }

  void send(const Frame& frame) override { out_.push(frame); }
  std::optional<Frame> receive(Millis timeout) override { return in_.pop(timeout); }
  void close() override {
    in_.close();
    out_.close();
  }

 private:
  std::shared_ptr<void> keep_;
  LoopbackHub::Channel& in_;
  LoopbackHub::Channel& out_;
};

}  // namespace

LoopbackHub::LoopbackHub(std::size_t clients) {
  for (std::size_t i = 0; i < clients; ++i) links_.push_back(std::make_shared<Link>());
  server_ = std::make_unique<Server>(links_);
}

LoopbackHub::~LoopbackHub() = default;

ServerTransport& LoopbackHub::server() { return *server_; }

std::unique_ptr<ClientTransport> LoopbackHub::client(std::size_t index) {
  auto link = links_.at(index);
  auto& in = link->to_client;
  auto& out = link->to_server;
  return std::make_unique<LoopbackClient>(std::move(link), in, out);
}

void TappedServerTransport::send(std::size_t conn, const Frame& frame) {
  {
    std::lock_guard lock(mutex_);
    observer_(Direction::ToClient, conn, frame);
  }
  inner_.send(conn, frame);
}

std::optional<Frame> TappedServerTransport::receive(std::size_t conn, Millis timeout) {
  auto frame = inner_.receive(conn, timeout);
  if (frame) {
    std::lock_guard lock(mutex_);
    observer_(Direction::ToServer, conn, *frame);
  }
  return frame;
}

}  // namespace fbttr::fed
