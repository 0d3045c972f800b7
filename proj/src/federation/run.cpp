#include <exception>
#include <thread>

#include "fbttr/fed/protocol.hpp"

namespace fbttr::fed {

namespace {

BttrModel serve(ServerTransport& transport, const ServerConfig& config, const FrameObserver& observer) {
  if (observer) {
    TappedServerTransport tapped(transport, observer);
    return Server(tapped, config).run();
  }
  return Server(transport, config).run();
}

}  // namespace

BttrModel run_federated_fit(const std::vector<std::pair<Tensor, Matrix>>& clients,
                            const FitConfig& cfg, const FederationOptions& options) {
  if (clients.empty()) throw ConfigError("federation needs at least one client");
  cfg.validate();

  const ServerConfig server_config{cfg, options.normalize, options.round_timeout};
  ClientConfig client_config;
  client_config.options = {cfg.grid, cfg.epsilon, cfg.ace};
  client_config.normalize = options.normalize;
  client_config.timeout = std::max(client_config.timeout, options.round_timeout * 4);

  const std::size_t n = clients.size();
  std::vector<std::exception_ptr> client_errors(n);
  std::vector<std::jthread> threads;
  BttrModel model;

  auto launch = [&](auto make_transport) {
    for (std::size_t i = 0; i < n; ++i) {
      threads.emplace_back([&, i, make_transport] {
        try {
          auto transport = make_transport(i);
          run_client(*transport, static_cast<std::uint32_t>(i), clients[i].first, clients[i].second,
                     client_config);
        } catch (...) {
          client_errors[i] = std::current_exception();
        }
      });
    }
  };

  if (options.transport == TransportKind::Loopback) {
    LoopbackHub hub(n);
    launch([&hub](std::size_t i) { return hub.client(i); });
    try {
      model = serve(hub.server(), server_config, options.observer);
    } catch (...) {
      for (std::size_t i = 0; i < n; ++i) hub.server().close(i);
      threads.clear();
      throw;
    }
    threads.clear();
  } else {
    TcpServerTransport server({"127.0.0.1", 0}, options.heartbeat);
    const Endpoint endpoint{"127.0.0.1", server.port()};
    const auto heartbeat = options.heartbeat;
    const auto connect_timeout = options.round_timeout;
    launch([endpoint, heartbeat, connect_timeout](std::size_t) {
      return std::make_unique<TcpClientTransport>(endpoint, heartbeat, connect_timeout);
    });
    try {
      server.accept_clients(n, options.round_timeout);
      model = serve(server, server_config, options.observer);
    } catch (...) {
      for (std::size_t i = 0; i < server.connections(); ++i) server.close(i);
      threads.clear();
      throw;
    }
    threads.clear();
  }
  return model;
}

}  // namespace fbttr::fed
