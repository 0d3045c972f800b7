#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fbttr/bttr.hpp"
#include "fbttr/fed/messages.hpp"
#include "fbttr/fed/transport.hpp"

namespace fbttr::fed {

// w_k = N_k / sum N.
std::vector<double> aggregation_weights(const std::vector<std::uint64_t>& counts);

// Textbook FedAvg: sample-count weighted mean of flat parameter vectors.
std::vector<double> fedavg_reference(
    const std::vector<std::pair<std::vector<double>, std::uint64_t>>& updates);

struct Harmonization {
  Extents target_ranks;
  std::vector<HyperAssign> assignments;  // one per report, same order
};

// Elementwise minimum of reported ranks; every client keeps its own
// hyperparameters and truncates to the common ranks.
Harmonization harmonize_ranks(const std::vector<AceReport>& reports);

// Aligns every update to the first (column signs, greedy column matching,
// overall score sign), takes the N_k-weighted mean and re-orthonormalises the
// averaged factors, absorbing the correction into the cores.
BlockParams aggregate_block(const std::vector<std::pair<BlockParams, std::uint64_t>>& updates);

struct ClientState {
  std::uint32_t client_id = 0;
  Tensor e_residual;
  Matrix f_residual;
  std::uint64_t sample_count = 0;
  std::vector<Block> local_blocks;

  ClientState() = default;
  ClientState(std::uint32_t id, Tensor x, Matrix y);
  void check() const;
};

struct ClientOptions {
  HyperGrid grid = HyperGrid::defaults();
  double epsilon = 1e-6;
  AceOptions ace;
};

// ACE on the current residuals. Reports skip when a residual is at or below
// epsilon (never on round 1).
AceReport client_ace_report(const ClientState& state, std::uint32_t round,
                            const ClientOptions& options);

// F-mPSTD at the assigned hyperparameters, truncated to the target ranks.
// Returns no score vector and no data, only block parameters and N_k.
// nullopt means skip.
std::optional<BlockUpdate> client_local_block(const ClientState& state, const HyperAssign& assign,
                                              std::uint32_t round, const ClientOptions& options);

struct DeflateResult {
  ClientState state;
  DeflateAck ack;
};

// Local scores from the global factors, local d, deflation of E and F.
DeflateResult client_deflate(const ClientState& state, const BlockParams& global_block);

struct ServerConfig {
  FitConfig fit;
  bool normalize = false;
  Millis round_timeout{120000};
};

struct RosterEntry {
  std::size_t conn = 0;
  std::uint32_t client_id = 0;
  std::uint64_t sample_count = 0;
  bool alive = true;
};

struct ServerState {
  std::uint32_t round = 0;
  std::vector<Block> global_blocks;
  Extents target_ranks;
  std::vector<RosterEntry> client_roster;
};

class Server {
 public:
  Server(ServerTransport& transport, ServerConfig config);
  BttrModel run();
  const ServerState& state() const { return state_; }

 private:
  struct Reply {
    std::size_t roster_index;
    Message message;
  };
  std::vector<Reply> gather(const std::vector<std::size_t>& roster_indices, MessageKind expected,
                            std::uint32_t round);
  void send(std::size_t roster_index, const Message& m);
  void drop(std::size_t roster_index);

  ServerTransport& transport_;
  ServerConfig config_;
  ServerState state_;
  std::vector<NormStats> client_stats_;
};

struct ClientConfig {
  ClientOptions options;
  bool normalize = false;
  Millis timeout{600000};
};

// Client event loop; returns after DONE.
void run_client(ClientTransport& transport, std::uint32_t client_id, const Tensor& x,
                const Matrix& y, const ClientConfig& config);

enum class TransportKind { Loopback, Socket };

struct FederationOptions {
  TransportKind transport = TransportKind::Loopback;
  bool normalize = false;
  Millis round_timeout{120000};
  std::chrono::seconds heartbeat{5};
  FrameObserver observer;  // sees every frame crossing the server
};

// Runs a server and one in-process client per dataset over the chosen
// transport and returns the global model.
BttrModel run_federated_fit(const std::vector<std::pair<Tensor, Matrix>>& clients,
                            const FitConfig& cfg, const FederationOptions& options = {});

}  // namespace fbttr::fed
